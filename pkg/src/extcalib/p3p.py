"""Finsterwalder's three-point absolute pose solver.

With unit rays ``j1, j2, j3`` and camera-to-point distances ``s_i``, write
``s2 = u s1`` and ``s3 = v s1``. The two law-of-cosines ratios give two conics
in (u, v); a combination ``conic1 + lam * conic2`` degenerates into a line
pair when ``lam`` is a root of a cubic. Each line, substituted back into one
conic, leaves a quadratic in v.
"""
import numpy as np

from .errors import DegenerateSample, NoRealSolution
from .geometry import CameraPose, homogeneous
from .polyroots import real_roots
from .triangulation import reprojection_errors

COLLINEAR_TOL = 1e-9


def horn_alignment(P_cam, X_world):
    """Rotation R and centre T with ``P_cam = R (X_world - T)`` (Horn's quaternion method)."""
    P = np.asarray(P_cam, dtype=float)
    X = np.asarray(X_world, dtype=float)
    cp, cx = P.mean(axis=0), X.mean(axis=0)
    S = (X - cx).T @ (P - cp)
    Sxx, Sxy, Sxz = S[0]
    Syx, Syy, Syz = S[1]
    Szx, Szy, Szz = S[2]
    N = np.array([
        [Sxx + Syy + Szz, Syz - Szy, Szx - Sxz, Sxy - Syx],
        [Syz - Szy, Sxx - Syy - Szz, Sxy + Syx, Szx + Sxz],
        [Szx - Sxz, Sxy + Syx, -Sxx + Syy - Szz, Syz + Szy],
        [Sxy - Syx, Szx + Sxz, Syz + Szy, -Sxx - Syy + Szz],
    ])
    w, V = np.linalg.eigh(N)
    q0, qx, qy, qz = V[:, -1]
    R = np.array([
        [q0*q0 + qx*qx - qy*qy - qz*qz, 2*(qx*qy - q0*qz), 2*(qx*qz + q0*qy)],
        [2*(qy*qx + q0*qz), q0*q0 - qx*qx + qy*qy - qz*qz, 2*(qy*qz - q0*qx)],
        [2*(qz*qx - q0*qy), 2*(qz*qy + q0*qx), q0*q0 - qx*qx - qy*qy + qz*qz],
    ])
    # the quaternion is unit up to round-off; re-orthonormalize
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    T = cx - R.T @ cp
    return R, T


def _polish_distances(s, cosines, sides2, steps=3):
    """Newton steps on the three law-of-cosines equations."""
    ca, cb, cg = cosines
    a2, b2, c2 = sides2

    def residual(s):
        s1, s2, s3 = s
        return np.array([s2*s2 + s3*s3 - 2*s2*s3*ca - a2,
                         s1*s1 + s3*s3 - 2*s1*s3*cb - b2,
                         s1*s1 + s2*s2 - 2*s1*s2*cg - c2])

    r = residual(s)
    for _ in range(steps):
        s1, s2, s3 = s
        J = np.array([[0.0, 2*s2 - 2*s3*ca, 2*s3 - 2*s2*ca],
                      [2*s1 - 2*s3*cb, 0.0, 2*s3 - 2*s1*cb],
                      [2*s1 - 2*s2*cg, 2*s2 - 2*s1*cg, 0.0]])
        try:
            cand = s - np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
        r_new = residual(cand)
        if not np.linalg.norm(r_new) < np.linalg.norm(r):
            break
        s, r = cand, r_new
    return s


def _finsterwalder_distances(j, X):
    """All positive distance triples (s1, s2, s3) along the unit rays ``j``."""
    a2 = np.sum((X[1] - X[2]) ** 2)
    b2 = np.sum((X[0] - X[2]) ** 2)
    c2 = np.sum((X[0] - X[1]) ** 2)
    ca = j[1] @ j[2]
    cb = j[0] @ j[2]
    cg = j[0] @ j[1]

    # conic coefficients as (constant, lam) pairs:
    # A u^2 + 2B uv + C v^2 + 2D u + 2E v + F = 0
    A = np.array([1.0, 1.0])
    B = np.array([-ca, 0.0])
    C = np.array([(b2 - a2) / b2, -c2 / b2])
    D = np.array([0.0, -cg])
    E = np.array([a2 / b2 * cb, c2 / b2 * cb])
    F = np.array([-a2 / b2, (b2 - c2) / b2])

    def lin(p):
        return p[::-1]  # highest power first

    def mul(p, q):
        return np.convolve(p, q)

    # determinant of [[A, B, D], [B, C, E], [D, E, F]] as a cubic in lam
    cubic = (mul(lin(A), mul(lin(C), lin(F)) - mul(lin(E), lin(E)))
             - mul(lin(B), mul(lin(B), lin(F)) - mul(lin(E), lin(D)))
             + mul(lin(D), mul(lin(B), lin(E)) - mul(lin(C), lin(D))))
    lams = real_roots(cubic, polish=3)
    if lams.size == 0:
        raise NoRealSolution("degenerating cubic has no real root")
    # the largest-magnitude root keeps A = 1 + lam away from zero in practice
    lam = lams[np.argmax(np.abs(lams))]

    Av, Bv, Cv, Dv, Ev, Fv = (p[0] + lam * p[1] for p in (A, B, C, D, E, F))
    if abs(Av) < 1e-12:
        lam = lams[np.argmin(np.abs(lams + 1.0))] if lams.size > 1 else lam
        Av, Bv, Cv, Dv, Ev, Fv = (p[0] + lam * p[1] for p in (A, B, C, D, E, F))
    p = np.sqrt(max(Bv * Bv - Av * Cv, 0.0))
    q = np.sqrt(max(Dv * Dv - Av * Fv, 0.0))
    if Bv * Dv - Av * Ev < 0:
        q = -q

    out = []
    for sign in (1.0, -1.0):
        # u = m v + n is one line of the degenerate conic
        m = (-Bv + sign * p) / Av
        n = (-Dv + sign * q) / Av
        # b^2 (1 + u^2 - 2 u cg) = c^2 (1 + v^2 - 2 v cb)
        qa = b2 * m * m - c2
        qb = 2.0 * (b2 * (m * n - m * cg) + c2 * cb)
        qc = b2 * (n * n - 2.0 * n * cg + 1.0) - c2
        if abs(qa) > 1e-14 * (abs(qb) + abs(qc)):
            disc = qb * qb - 4.0 * qa * qc
            if disc < -1e-12 * qb * qb:
                continue
            disc = np.sqrt(max(disc, 0.0))
            # numerically stable quadratic roots
            t = -0.5 * (qb + np.copysign(disc, qb))
            vs = [t / qa] + ([qc / t] if t != 0 else [])
        elif abs(qb) > 0:
            vs = [-qc / qb]
        else:
            continue
        for v in vs:
            u = m * v + n
            if u <= 0 or v <= 0:
                continue
            den = 1.0 + v * v - 2.0 * v * cb
            if den <= 0:
                continue
            s1 = np.sqrt(b2 / den)
            s = _polish_distances(np.array([s1, u * s1, v * s1]), (ca, cb, cg), (a2, b2, c2))
            if np.all(s > 0):
                out.append(s)

    unique = []
    for s in out:
        if all(np.max(np.abs(s - t)) > 1e-9 * max(1.0, np.max(np.abs(t))) for t in unique):
            unique.append(s)
    return unique


def solve_p3p_finsterwalder(x, X):
    """Camera poses observing world points ``X`` (3, 3) at normalized ``x`` (3, 2).

    Returns up to four poses, each placing all three points in front of
    the camera. Raises DegenerateSample for collinear points or repeated
    rays and NoRealSolution when nothing physical remains.
    """
    x = np.asarray(x, dtype=float)
    X = np.asarray(X, dtype=float)
    if x.shape != (3, 2) or X.shape != (3, 3):
        raise ValueError("expected three 2D-3D correspondences")
    d01, d02 = X[1] - X[0], X[2] - X[0]
    scale = max(np.linalg.norm(d01), np.linalg.norm(d02))
    if scale == 0 or np.linalg.norm(np.cross(d01, d02)) < COLLINEAR_TOL * scale * scale:
        raise DegenerateSample("world points are collinear")
    j = homogeneous(x)
    j /= np.linalg.norm(j, axis=1, keepdims=True)
    for a, b in ((0, 1), (0, 2), (1, 2)):
        if np.linalg.norm(np.cross(j[a], j[b])) < COLLINEAR_TOL:
            raise DegenerateSample("coincident image rays")

    poses = []
    for s in _finsterwalder_distances(j, X):
        R, T = horn_alignment(s[:, None] * j, X)
        pose = CameraPose(R, T)
        if np.all(reprojection_errors(pose, X, x) < 1e-6):
            poses.append(pose)
    if not poses:
        raise NoRealSolution("no physical P3P solution")
    return poses


def disambiguate_pose(candidates, x, X, tol):
    """Candidate with the most extra correspondences under ``tol``; ties by total error."""
    if not candidates:
        raise ValueError("need at least one candidate")
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    best, best_key = None, None
    for pose in candidates:
        err = reprojection_errors(pose, X, x)
        inl = err < tol
        key = (int(np.count_nonzero(inl)), -float(np.sum(np.where(np.isfinite(err), err, 1e300))))
        if best_key is None or key > best_key:
            best, best_key = pose, key
    return best
