"""Metric triangulation from calibrated rays and the compatibility tests."""
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, ParallelRays
from .geometry import homogeneous

PARALLEL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Observation:
    image_id: int
    feature_id: int
    x: np.ndarray
    descriptor: np.ndarray = field(default_factory=lambda: np.zeros(128), repr=False)


@dataclass(eq=False)
class ModelPoint:
    """A 3D point and its supporting observations, keyed by image id."""

    X: np.ndarray
    support: dict = field(default_factory=dict)

    def add(self, obs):
        if obs.image_id in self.support:
            raise ValueError(f"point already observed in image {obs.image_id}")
        self.support[obs.image_id] = obs

    @property
    def n_support(self):
        return len(self.support)


def ray_directions(pose, x):
    """World-frame directions of the rays through normalized points ``x``."""
    return homogeneous(x) @ pose.R


def midpoint_rays(Ca, Da, Cb, Db):
    """Midpoints of the common perpendiculars of ray pairs (vectorized).

    Returns the midpoints and the sine of the angle between each ray pair.
    """
    Ca, Da, Cb, Db = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (Ca, Da, Cb, Db)))
    w0 = Ca - Cb
    a = np.einsum("...i,...i", Da, Da)
    b = np.einsum("...i,...i", Da, Db)
    c = np.einsum("...i,...i", Db, Db)
    d = np.einsum("...i,...i", Da, w0)
    e = np.einsum("...i,...i", Db, w0)
    denom = a * c - b * b
    sin_angle = np.linalg.norm(np.cross(Da, Db), axis=-1) / np.sqrt(a * c)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (b * e - c * d) / denom
        t = (a * e - b * d) / denom
    X = 0.5 * ((Ca + s[..., None] * Da) + (Cb + t[..., None] * Db))
    return X, sin_angle


def depths(pose, X):
    return ((np.asarray(X, dtype=float) - pose.T) @ pose.R.T)[..., 2]


def triangulate_two_view(pose_a, pose_b, xa, xb):
    """Midpoint triangulation of a single correspondence."""
    if np.linalg.norm(pose_b.T - pose_a.T) < PARALLEL_TOL:
        raise ParallelRays("zero baseline")
    X, sin_angle = midpoint_rays(pose_a.T, ray_directions(pose_a, xa),
                                 pose_b.T, ray_directions(pose_b, xb))
    if not sin_angle > PARALLEL_TOL:
        raise ParallelRays("rays are parallel")
    if depths(pose_a, X) <= 0 or depths(pose_b, X) <= 0:
        raise BehindCamera("triangulated point is behind a camera")
    return X


def _reprojection_terms(poses, xs, X):
    res, jac = [], []
    for pose, x in zip(poses, xs):
        P = pose.R @ (X - pose.T)
        z = P[2]
        res.append(P[:2] / z - x)
        dpi = np.array([[1.0 / z, 0.0, -P[0] / z**2],
                        [0.0, 1.0 / z, -P[1] / z**2]])
        jac.append(dpi @ pose.R)
    return np.concatenate(res), np.vstack(jac)


def triangulate_nview(poses, xs, gn_steps=5):
    """Least-squares ray intersection refined by Gauss-Newton on reprojection error."""
    if len(poses) < 2 or len(poses) != len(xs):
        raise ValueError("need at least two views with one point each")
    xs = [np.asarray(x, dtype=float) for x in xs]
    centers = np.array([p.T for p in poses])
    if np.max(np.linalg.norm(centers - centers[0], axis=1)) < PARALLEL_TOL:
        raise ParallelRays("all cameras share one centre")

    A = np.zeros((3, 3))
    b = np.zeros(3)
    for pose, x in zip(poses, xs):
        d = ray_directions(pose, x)
        d /= np.linalg.norm(d)
        Pd = np.eye(3) - np.outer(d, d)
        A += Pd
        b += Pd @ pose.T
    ev = np.linalg.eigvalsh(A)
    if ev[0] < PARALLEL_TOL * ev[-1]:
        raise ParallelRays("rays are parallel")
    X = np.linalg.solve(A, b)

    if all(depths(p, X) > 0 for p in poses):
        r, J = _reprojection_terms(poses, xs, X)
        cost = r @ r
        for _ in range(gn_steps):
            try:
                step = np.linalg.lstsq(J, -r, rcond=None)[0]
            except np.linalg.LinAlgError:
                break
            X_new = X + step
            if not all(depths(p, X_new) > 0 for p in poses):
                break
            r_new, J_new = _reprojection_terms(poses, xs, X_new)
            cost_new = r_new @ r_new
            if not cost_new < cost:
                break
            X, r, J, cost = X_new, r_new, J_new, cost_new

    if any(depths(p, X) <= 0 for p in poses):
        raise BehindCamera("triangulated point is behind a camera")
    return X


def reprojection_error(pose, X, x):
    P = pose.R @ (np.asarray(X, dtype=float) - pose.T)
    if P[2] <= 0:
        raise BehindCamera("point is behind the camera")
    return float(np.linalg.norm(P[:2] / P[2] - np.asarray(x, dtype=float)))


def reprojection_errors(pose, X, x):
    """Vectorized reprojection errors; ``inf`` where depth is not positive."""
    P = (np.asarray(X, dtype=float) - pose.T) @ pose.R.T
    z = P[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.linalg.norm(P[..., :2] / z[..., None] - x, axis=-1)
    return np.where(z > 0, err, np.inf)


def visually_compatible(d1, d2, tau_desc):
    return bool(np.linalg.norm(np.asarray(d1, dtype=float) - np.asarray(d2, dtype=float)) < tau_desc)


def geometrically_compatible(point, pose, x, tau_reproj):
    X = point.X if isinstance(point, ModelPoint) else point
    return bool(reprojection_errors(pose, X, x) < tau_reproj)
