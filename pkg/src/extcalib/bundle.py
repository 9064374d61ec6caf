"""Sparse bundle adjustment by Levenberg-Marquardt with a Schur complement.

Each free camera carries six parameters: a rotation increment ``w`` applied
as ``R <- exp([w]_x) R`` and a shift of the centre ``T``. Points carry their
three coordinates. The cost is the sum of squared reprojection residuals
``pi(R_i (X_j - T_i)) - x_ij`` in normalized coordinates.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BehindCamera, InvalidProblem, SingularNormalEquations
from .geometry import CameraPose, rotation_from_axis_angle

log = logging.getLogger(__name__)

LAMBDA_INIT = 1e-4
LAMBDA_MIN = 1e-12
LAMBDA_MAX = 1e12


@dataclass
class BaProblem:
    """Poses, points and observations ``(camera, point, xy)``."""

    poses: list
    points: np.ndarray
    obs_camera: np.ndarray
    obs_point: np.ndarray
    obs_xy: np.ndarray
    fixed_cameras: set = field(default_factory=lambda: {0})

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.obs_camera = np.asarray(self.obs_camera, dtype=np.intp).reshape(-1)
        self.obs_point = np.asarray(self.obs_point, dtype=np.intp).reshape(-1)
        self.obs_xy = np.asarray(self.obs_xy, dtype=float).reshape(-1, 2)
        self.fixed_cameras = set(self.fixed_cameras)

    def validate(self):
        m = len(self.obs_xy)
        if not (len(self.obs_camera) == len(self.obs_point) == m):
            raise InvalidProblem("observation arrays differ in length")
        if m and (self.obs_camera.min() < 0 or self.obs_camera.max() >= len(self.poses)):
            raise InvalidProblem("observation references a missing camera")
        if m and (self.obs_point.min() < 0 or self.obs_point.max() >= len(self.points)):
            raise InvalidProblem("observation references a missing point")
        if not self.fixed_cameras:
            raise InvalidProblem("at least one camera must be fixed")
        if not self.fixed_cameras <= set(range(len(self.poses))):
            raise InvalidProblem("fixed camera index out of range")
        if not self.free_cameras and len(self.points) == 0:
            raise InvalidProblem("nothing to optimize")

    @property
    def free_cameras(self):
        return [i for i in range(len(self.poses)) if i not in self.fixed_cameras]

    @property
    def n_params(self):
        return 6 * len(self.free_cameras) + 3 * len(self.points)


@dataclass
class BaReport:
    initial_rmse: float
    final_rmse: float
    iterations: int
    converged: bool
    cost_history: list = field(default_factory=list)


def _camera_points(problem):
    R = np.array([p.R for p in problem.poses])[problem.obs_camera]
    T = np.array([p.T for p in problem.poses])[problem.obs_camera]
    X = problem.points[problem.obs_point]
    P = np.einsum("mij,mj->mi", R, X - T)
    return R, P


def residuals(problem):
    _, P = _camera_points(problem)
    if np.any(P[:, 2] <= 0):
        raise BehindCamera("observed point has non-positive depth")
    return (P[:, :2] / P[:, 2:3] - problem.obs_xy).ravel()


def residuals_and_jacobian(problem):
    """Residual vector (2 per observation) and its sparse Jacobian.

    Columns: ``[w, dT]`` for each free camera in index order, then the
    coordinates of every point. Fixed cameras have no columns.
    """
    R, P = _camera_points(problem)
    z = P[:, 2]
    if np.any(z <= 0):
        raise BehindCamera("observed point has non-positive depth")
    r = (P[:, :2] / z[:, None] - problem.obs_xy).ravel()

    m = len(z)
    dpi = np.zeros((m, 2, 3))
    dpi[:, 0, 0] = 1.0 / z
    dpi[:, 1, 1] = 1.0 / z
    dpi[:, 0, 2] = -P[:, 0] / z**2
    dpi[:, 1, 2] = -P[:, 1] / z**2

    # d(P)/d(w) = -[P]_x for the left-multiplied increment
    negskew = np.zeros((m, 3, 3))
    negskew[:, 0, 1], negskew[:, 0, 2] = P[:, 2], -P[:, 1]
    negskew[:, 1, 0], negskew[:, 1, 2] = -P[:, 2], P[:, 0]
    negskew[:, 2, 0], negskew[:, 2, 1] = P[:, 1], -P[:, 0]
    J_w = dpi @ negskew
    J_X = dpi @ R
    J_T = -J_X

    free = problem.free_cameras
    col_of_cam = np.full(len(problem.poses), -1)
    col_of_cam[free] = 6 * np.arange(len(free))
    n_cam_cols = 6 * len(free)
    rows2 = 2 * np.arange(m)[:, None] + np.arange(2)[None, :]

    cam_col = col_of_cam[problem.obs_camera]
    has_cam = cam_col >= 0
    J_cam = np.concatenate([J_w, J_T], axis=2)[has_cam]
    rc = np.broadcast_to(rows2[has_cam][:, :, None], J_cam.shape)
    cc = np.broadcast_to(cam_col[has_cam][:, None, None] + np.arange(6), J_cam.shape)

    pt_col = n_cam_cols + 3 * problem.obs_point
    rp = np.broadcast_to(rows2[:, :, None], J_X.shape)
    cp = np.broadcast_to(pt_col[:, None, None] + np.arange(3), J_X.shape)

    data = np.concatenate([J_cam.ravel(), J_X.ravel()])
    rows = np.concatenate([rc.ravel(), rp.ravel()])
    cols = np.concatenate([cc.ravel(), cp.ravel()])
    J = sp.csr_matrix((data, (rows, cols)), shape=(2 * m, problem.n_params))
    return r, J


def apply_update(problem, delta):
    """New problem with ``delta`` applied to the free parameters."""
    free = problem.free_cameras
    poses = list(problem.poses)
    for k, i in enumerate(free):
        d = delta[6 * k: 6 * k + 6]
        R = rotation_from_axis_angle(d[:3]) @ poses[i].R
        U, _, Vt = np.linalg.svd(R)
        poses[i] = CameraPose(U @ Vt, poses[i].T + d[3:])
    points = problem.points + delta[6 * len(free):].reshape(-1, 3)
    return BaProblem(poses, points, problem.obs_camera, problem.obs_point,
                     problem.obs_xy, problem.fixed_cameras)


def _solve_damped(Jc, Jp, gc, gp, n_points, lam):
    """Solve the damped normal equations, eliminating point blocks first."""
    Jp = Jp.tocsc()
    n_c = Jc.shape[1]
    Vdiag = Jp.T @ Jp
    # point blocks of J^T J are 3x3 block diagonal
    V = np.zeros((n_points, 3, 3))
    Vc = Vdiag.tocoo()
    V[Vc.row // 3, Vc.row % 3, Vc.col % 3] = Vc.data
    idx = np.arange(3)
    V[:, idx, idx] *= 1.0 + lam
    V[:, idx, idx] += 1e-300
    try:
        Vinv = np.linalg.inv(V)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(Vinv)):
        return None
    Vinv_sp = sp.bsr_matrix((Vinv, np.arange(n_points), np.arange(n_points + 1)),
                            shape=(3 * n_points, 3 * n_points))
    if n_c == 0:
        dp = -(Vinv_sp @ gp)
        return np.asarray(dp).ravel()

    U = (Jc.T @ Jc).toarray()
    U[np.diag_indices(n_c)] *= 1.0 + lam
    W = (Jc.T @ Jp).tocsr()
    WVinv = W @ Vinv_sp
    S = U - (WVinv @ W.T).toarray()
    rhs = -gc + WVinv @ gp
    try:
        L = np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError:
        return None
    dc = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    dp = -(Vinv_sp @ (gp + W.T @ dc))
    return np.concatenate([dc, np.asarray(dp).ravel()])


def bundle_adjust(problem, max_iters=100, gradient_tol=1e-10):
    """Refine free poses and all points; returns (problem, BaReport)."""
    problem.validate()
    if problem.n_params == 0:
        raise InvalidProblem("nothing to optimize")
    m = len(problem.obs_xy)
    r, J = residuals_and_jacobian(problem)
    cost = float(r @ r)
    initial_rmse = np.sqrt(cost / max(m, 1))
    history = [cost]
    n_c = 6 * len(problem.free_cameras)
    lam = LAMBDA_INIT
    accepted = 0
    converged = False

    while accepted < max_iters:
        g = J.T @ r
        if np.max(np.abs(g), initial=0.0) < gradient_tol:
            converged = True
            break
        Jc, Jp = J[:, :n_c], J[:, n_c:]
        gc, gp = g[:n_c], g[n_c:]
        step_taken = False
        solved_any = False
        while lam <= LAMBDA_MAX:
            delta = _solve_damped(Jc, Jp, gc, gp, len(problem.points), lam)
            if delta is None or not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            solved_any = True
            candidate = apply_update(problem, delta)
            try:
                r_new = residuals(candidate)
                cost_new = float(r_new @ r_new)
            except BehindCamera:
                cost_new = np.inf
            if cost_new < cost:
                step_taken = True
                break
            lam *= 10.0
        if not step_taken:
            if not solved_any:
                raise SingularNormalEquations("normal equations singular at every damping level")
            # no descent left at any damping: a minimum to working precision
            converged = True
            break
        rel = (cost - cost_new) / cost
        problem = candidate
        r, J = residuals_and_jacobian(problem)
        cost = float(r @ r)
        history.append(cost)
        accepted += 1
        lam = max(lam / 10.0, LAMBDA_MIN)
        if rel < 1e-12:
            converged = True
            break

    report = BaReport(initial_rmse, float(np.sqrt(cost / max(m, 1))), accepted, converged, history)
    log.debug("BA: rmse %.3e -> %.3e in %d steps", report.initial_rmse, report.final_rmse, accepted)
    return problem, report
