"""Synthetic scenes with exact ground truth.

Every ground-truth point gets one random integer descriptor prototype; each
observation of the point carries the prototype plus a small jitter, so the
ratio test is meaningful without a real detector. Outlier features get
random positions and fresh descriptors. Pixel noise is Gaussian truncated
at three standard deviations.
"""
from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraIntrinsics, CameraPose, denormalize, distort_normalized
from .matching import DESCRIPTOR_DIM, FeatureSet

DEFAULT_INTRINSICS = CameraIntrinsics(fx=800.0, fy=800.0, cx=320.0, cy=240.0)
IMAGE_SIZE = (640, 480)
JITTER_FRACTION = 0.04


@dataclass(eq=False)
class SyntheticScene:
    intrinsics: CameraIntrinsics
    gt_poses: list
    gt_points: np.ndarray
    features: list
    point_ids: list
    outlier_rate: float = 0.0
    noise_sigma: float = 0.0
    rng_seed: int = 0
    image_size: tuple = IMAGE_SIZE
    names: list = field(default_factory=list)

    @property
    def n_cameras(self):
        return len(self.gt_poses)


def look_at(center, target, down=(0.0, 1.0, 0.0)):
    """Pose at ``center`` whose optical axis passes through ``target``."""
    center = np.asarray(center, dtype=float)
    z = np.asarray(target, dtype=float) - center
    z /= np.linalg.norm(z)
    x = np.cross(down, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return CameraPose(np.vstack([x, y, z]), center)


def _truncated_noise(rng, sigma, n):
    """Isotropic Gaussian pixel offsets, redrawn until shorter than 3 sigma."""
    out = rng.normal(scale=sigma, size=(n, 2))
    bad = np.linalg.norm(out, axis=1) > 3.0 * sigma
    while np.any(bad):
        out[bad] = rng.normal(scale=sigma, size=(int(bad.sum()), 2))
        bad = np.linalg.norm(out, axis=1) > 3.0 * sigma
    return out


def _render(rng, intr, poses, points, noise_sigma, outlier_rate, image_size):
    width, height = image_size
    n_pts = len(points)
    prototypes = rng.integers(0, 256, size=(n_pts, DESCRIPTOR_DIM)).astype(float)
    proto_norm = np.linalg.norm(prototypes, axis=1)
    features, point_ids = [], []
    for img, pose in enumerate(poses):
        P = pose.to_camera(points)
        z = P[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = P[:, :2] / z[:, None]
        pix = denormalize(distort_normalized(x, intr), intr)
        visible = (z > 0) & (pix[:, 0] >= 0) & (pix[:, 0] < width) & (pix[:, 1] >= 0) & (pix[:, 1] < height)
        ids = np.flatnonzero(visible)
        pix = pix[ids]
        if noise_sigma > 0:
            pix = pix + _truncated_noise(rng, noise_sigma, len(pix))

        direction = rng.normal(size=(len(ids), DESCRIPTOR_DIM))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        mag = rng.uniform(0.0, JITTER_FRACTION, size=len(ids)) * proto_norm[ids]
        desc = np.clip(np.round(prototypes[ids] + mag[:, None] * direction), 0, 255)

        n_out = int(round(outlier_rate / (1.0 - outlier_rate) * len(ids))) if outlier_rate > 0 else 0
        out_pix = np.column_stack([rng.uniform(0, width, n_out), rng.uniform(0, height, n_out)])
        out_desc = rng.integers(0, 256, size=(n_out, DESCRIPTOR_DIM)).astype(float)

        all_pix = np.vstack([pix, out_pix])
        all_desc = np.vstack([desc, out_desc])
        all_ids = np.concatenate([ids, np.full(n_out, -1)])
        order = rng.permutation(len(all_ids))
        fs = FeatureSet.from_pixels(img, all_pix[order], all_desc[order], intr,
                                    scales=np.ones(len(order)), orientations=np.zeros(len(order)),
                                    name=f"img_{img:03d}")
        features.append(fs)
        point_ids.append(all_ids[order])
    return features, point_ids


def generate_ring(n_cameras=10, step_deg=7.5, n_points=500, noise_sigma=0.0, outlier_rate=0.0,
                  seed=0, radius=5.0, cloud_radius=1.0, intrinsics=DEFAULT_INTRINSICS):
    """Cameras on a horizontal circle around a random point cloud."""
    if n_cameras < 2:
        raise ValueError("need at least two cameras")
    if not 0 <= outlier_rate < 1:
        raise ValueError("outlier_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n_points, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    points = d * cloud_radius * rng.uniform(0, 1, size=(n_points, 1)) ** (1 / 3)
    centroid = points.mean(axis=0)
    poses = []
    for i in range(n_cameras):
        a = np.radians(i * step_deg)
        c = centroid + radius * np.array([np.sin(a), 0.0, -np.cos(a)])
        poses.append(look_at(c, centroid))
    features, point_ids = _render(rng, intrinsics, poses, points, noise_sigma, outlier_rate, IMAGE_SIZE)
    return SyntheticScene(intrinsics, poses, points, features, point_ids, outlier_rate,
                          noise_sigma, seed, IMAGE_SIZE, [f.name for f in features])


def generate_wall(n_cameras=8, step=0.5, n_points=400, noise_sigma=0.0, outlier_rate=0.0,
                  seed=0, distance=5.0, relief=0.0, size=(4.0, 3.0), intrinsics=DEFAULT_INTRINSICS):
    """Cameras translating laterally in front of a (possibly planar) wall."""
    if n_cameras < 2:
        raise ValueError("need at least two cameras")
    if not 0 <= outlier_rate < 1:
        raise ValueError("outlier_rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    w, h = size
    span = step * (n_cameras - 1)
    points = np.column_stack([
        rng.uniform(-w / 2, w / 2 + span, n_points),
        rng.uniform(-h / 2, h / 2, n_points),
        relief * rng.uniform(-1.0, 1.0, n_points),
    ])
    poses = []
    for i in range(n_cameras):
        c = np.array([i * step, 0.0, -distance])
        poses.append(look_at(c, np.array([i * step + 0.3 * step, 0.0, 0.0])))
    features, point_ids = _render(rng, intrinsics, poses, points, noise_sigma, outlier_rate, IMAGE_SIZE)
    return SyntheticScene(intrinsics, poses, points, features, point_ids, outlier_rate,
                          noise_sigma, seed, IMAGE_SIZE, [f.name for f in features])
