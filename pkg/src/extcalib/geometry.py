"""Camera model primitives.

Poses follow the convention ``x = pi(R (X - T))``: ``R`` rotates world
coordinates into the camera frame and ``T`` is the camera centre in world
units. Every loader converts into this convention.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import NoConvergence, PointBehindCamera

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    skew: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    @classmethod
    def from_matrix(cls, K, dist=(0.0, 0.0, 0.0, 0.0)):
        K = np.asarray(K, dtype=float)
        if abs(K[2, 2]) == 0:
            raise ValueError("K[2, 2] must be nonzero")
        K = K / K[2, 2]
        if abs(K[1, 0]) > 1e-12 or abs(K[2, 0]) > 1e-12 or abs(K[2, 1]) > 1e-12:
            raise ValueError("K must be upper triangular")
        k1, k2, p1, p2 = (list(dist) + [0.0] * 4)[:4]
        return cls(K[0, 0], K[1, 1], K[0, 2], K[1, 2], K[0, 1], k1, k2, p1, p2)

    @property
    def K(self):
        return np.array([[self.fx, self.skew, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def distortion(self):
        return np.array([self.k1, self.k2, self.p1, self.p2])

    @property
    def has_distortion(self):
        return bool(np.any(self.distortion != 0.0))


@dataclass(frozen=True, eq=False)
class CameraPose:
    """World-to-camera rotation ``R`` and camera centre ``T``."""

    R: np.ndarray
    T: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        T = np.array(self.T, dtype=float).reshape(3)
        if np.linalg.norm(R.T @ R - np.eye(3)) > ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > ORTHO_TOL:
            raise ValueError("R is not a proper rotation")
        if not np.all(np.isfinite(T)):
            raise ValueError("camera centre must be finite")
        R.flags.writeable = False
        T.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_Rt(cls, R, t):
        """Build from the ``x = R X + t`` convention."""
        R = np.asarray(R, dtype=float)
        return cls(R, -R.T @ np.asarray(t, dtype=float))

    @property
    def t(self):
        """Translation in the ``x = R X + t`` convention."""
        return -self.R @ self.T

    def to_camera(self, X):
        return (np.asarray(X, dtype=float) - self.T) @ self.R.T

    def __eq__(self, other):
        if not isinstance(other, CameraPose):
            return NotImplemented
        return np.array_equal(self.R, other.R) and np.array_equal(self.T, other.T)

    def __repr__(self):
        return f"CameraPose(R={self.R.tolist()}, T={self.T.tolist()})"


def skew(v):
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


def rotation_from_axis_angle(w):
    return Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def axis_angle_from_rotation(R):
    return Rotation.from_matrix(R).as_rotvec()


def random_rotation(rng, max_angle=np.pi):
    """Rotation about a uniform random axis by an angle up to ``max_angle``."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return rotation_from_axis_angle(axis * rng.uniform(0.0, max_angle))


def project(pose, X):
    """Project world point(s) ``X`` to normalized image coordinates.

    Raises PointBehindCamera if any point has non-positive depth.
    """
    P = pose.to_camera(X)
    depth = P[..., 2]
    if np.any(depth <= 0):
        raise PointBehindCamera("point has non-positive depth")
    return P[..., :2] / depth[..., None]


def project_unchecked(pose, X):
    """Projection and depth without the cheirality check."""
    P = pose.to_camera(X)
    return P[..., :2] / P[..., 2:3], P[..., 2]


def distort_normalized(x, intr):
    """Apply the Brown-Conrady model to undistorted normalized points."""
    x = np.asarray(x, dtype=float)
    u, v = x[..., 0], x[..., 1]
    r2 = u * u + v * v
    radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
    du = 2.0 * intr.p1 * u * v + intr.p2 * (r2 + 2.0 * u * u)
    dv = intr.p1 * (r2 + 2.0 * v * v) + 2.0 * intr.p2 * u * v
    return np.stack([u * radial + du, v * radial + dv], axis=-1)


def denormalize(x, intr):
    """Normalized (distorted) coordinates to pixels."""
    x = np.asarray(x, dtype=float)
    px = intr.fx * x[..., 0] + intr.skew * x[..., 1] + intr.cx
    py = intr.fy * x[..., 1] + intr.cy
    return np.stack([px, py], axis=-1)


def undistort_normalize(p_pixel, intr, max_iter=20, tol=1e-12):
    """Map pixel coordinates to undistorted normalized coordinates.

    Works on a single ``(2,)`` point or an ``(n, 2)`` array.
    """
    p = np.asarray(p_pixel, dtype=float)
    yd = (p[..., 1] - intr.cy) / intr.fy
    xd = (p[..., 0] - intr.cx - intr.skew * yd) / intr.fx
    distorted = np.stack([xd, yd], axis=-1)
    if not intr.has_distortion:
        return distorted

    x = distorted.copy()
    for _ in range(max_iter):
        u, v = x[..., 0], x[..., 1]
        r2 = u * u + v * v
        radial = 1.0 + intr.k1 * r2 + intr.k2 * r2 * r2
        du = 2.0 * intr.p1 * u * v + intr.p2 * (r2 + 2.0 * u * u)
        dv = intr.p1 * (r2 + 2.0 * v * v) + 2.0 * intr.p2 * u * v
        x_new = np.stack([(xd - du) / radial, (yd - dv) / radial], axis=-1)
        step = np.max(np.abs(x_new - x)) if x.size else 0.0
        x = x_new
        if step < tol:
            break
    else:
        if not np.all(np.isfinite(x)) or np.max(np.abs(distort_normalized(x, intr) - distorted)) > 1e-9:
            raise NoConvergence("distortion inversion did not converge")
    if not np.all(np.isfinite(x)):
        raise NoConvergence("distortion inversion diverged")
    return x


def compose_relative(pose_a, pose_b):
    """Pose of camera b expressed in the frame of camera a."""
    return CameraPose(pose_b.R @ pose_a.R.T, pose_a.R @ (pose_b.T - pose_a.T))


def apply_similarity(pose, R_w, t_w, scale=1.0):
    """Pose after mapping the world by ``X' = scale * R_w X + t_w``."""
    return CameraPose(pose.R @ R_w.T, scale * R_w @ pose.T + t_w)


def homogeneous(x):
    x = np.asarray(x, dtype=float)
    return np.concatenate([x, np.ones(x.shape[:-1] + (1,))], axis=-1)
