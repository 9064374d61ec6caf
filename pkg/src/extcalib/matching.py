"""Feature sets, descriptor matching and guided matching.

Feature files use the line-oriented keypoint format of the original SIFT
tool: a header ``N 128``, then for every keypoint a line ``x y scale
orientation`` followed by 128 integer descriptor entries (wrapped over
several lines). Files ending in ``.gz`` are read and written compressed.
"""
import gzip
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionMismatch, ParseError
from .geometry import undistort_normalize
from .triangulation import Observation, midpoint_rays, ray_directions, reprojection_errors

DESCRIPTOR_DIM = 128


@dataclass(frozen=True, eq=False)
class FeatureSet:
    image_id: int
    pixels: np.ndarray
    x: np.ndarray
    descriptors: np.ndarray
    scales: np.ndarray = None
    orientations: np.ndarray = None
    name: str = ""

    def __post_init__(self):
        n = len(self.pixels)
        pixels = np.asarray(self.pixels, dtype=float).reshape(n, 2)
        x = np.asarray(self.x, dtype=float).reshape(n, 2)
        desc = np.asarray(self.descriptors, dtype=float).reshape(n, -1) if n else np.zeros((0, DESCRIPTOR_DIM))
        if desc.shape[1] != DESCRIPTOR_DIM:
            raise DimensionMismatch(f"descriptor length {desc.shape[1]} != {DESCRIPTOR_DIM}")
        scales = np.ones(n) if self.scales is None else np.asarray(self.scales, dtype=float).reshape(n)
        orient = np.zeros(n) if self.orientations is None else np.asarray(self.orientations, dtype=float).reshape(n)
        for name, val in (("pixels", pixels), ("x", x), ("descriptors", desc),
                          ("scales", scales), ("orientations", orient)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)

    def __len__(self):
        return len(self.pixels)

    def observation(self, i):
        return Observation(self.image_id, int(i), self.x[i], self.descriptors[i])

    @classmethod
    def from_pixels(cls, image_id, pixels, descriptors, intr, **kw):
        pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
        return cls(image_id, pixels, undistort_normalize(pixels, intr), descriptors, **kw)


@dataclass(frozen=True)
class PutativeMatch:
    feature_a: int
    feature_b: int
    distance: float


@dataclass(frozen=True)
class Match2D3D:
    feature: int
    point: int
    distance: float


def _ratio_filter(D, theta):
    """Row-wise nearest neighbour passing ``second >= theta * nearest``."""
    if D.shape[1] == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int), np.zeros(0)
    nearest = np.argmin(D, axis=1)
    d1 = D[np.arange(len(D)), nearest]
    if D.shape[1] > 1:
        d2 = np.partition(D, 1, axis=1)[:, 1]
    else:
        d2 = np.full(len(D), np.inf)
    keep = (d2 >= theta * d1) & (d2 > 0)
    rows = np.flatnonzero(keep)
    return rows, nearest[rows], d1[rows]


def match_ratio_test(fa, fb, theta=1.25):
    """Putative matches from every feature of ``fa`` to its nearest neighbour in ``fb``."""
    if len(fa) == 0 or len(fb) == 0:
        return []
    D = cdist(fa.descriptors, fb.descriptors)
    rows, cols, dist = _ratio_filter(D, theta)
    return [PutativeMatch(int(a), int(b), float(d)) for a, b, d in zip(rows, cols, dist)]


def point_distances(descriptors, model_points):
    """(n_features, n_points) matrix of the best distance to each point's support."""
    owners, pool = [], []
    for j, pt in enumerate(model_points):
        for obs in pt.support.values():
            owners.append(j)
            pool.append(obs.descriptor)
    out = np.full((len(descriptors), len(model_points)), np.inf)
    if not pool or len(descriptors) == 0:
        return out
    D = cdist(descriptors, np.asarray(pool, dtype=float))
    owners = np.asarray(owners)
    order = np.argsort(owners, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(owners[order]) != 0])
    mins = np.minimum.reduceat(D[:, order], starts, axis=1)
    out[:, owners[order][starts]] = mins
    return out


def match_2d3d(features, model_points, theta=1.25):
    """Ratio-test matches between image features and model points."""
    if len(features) == 0 or not model_points:
        return []
    D = point_distances(features.descriptors, model_points)
    rows, cols, dist = _ratio_filter(D, theta)
    return [Match2D3D(int(f), int(p), float(d)) for f, p, d in zip(rows, cols, dist)]


def guided_candidates(descriptors, xs, pose, candidate_images, k, tau_desc, tau_reproj):
    """Vectorized guided matching of many query features.

    Returns, per query, a list of ``(image_id, feature_id, distance)`` for
    features among the ``k`` nearest in each candidate image that pass the
    descriptor threshold and whose two-view triangulation with the query
    reprojects below ``tau_reproj`` in both views.
    """
    descriptors = np.asarray(descriptors, dtype=float).reshape(-1, DESCRIPTOR_DIM)
    xs = np.asarray(xs, dtype=float).reshape(-1, 2)
    q = len(descriptors)
    found = [[] for _ in range(q)]
    if k <= 0 or q == 0:
        return found
    Dq = ray_directions(pose, xs)
    for fs, cpose in candidate_images:
        if len(fs) == 0 or np.linalg.norm(cpose.T - pose.T) == 0:
            continue
        kk = min(k, len(fs))
        D = cdist(descriptors, fs.descriptors)
        nn = np.argpartition(D, kk - 1, axis=1)[:, :kk] if kk < len(fs) else np.tile(np.arange(len(fs)), (q, 1))
        dist = np.take_along_axis(D, nn, axis=1)
        ok = dist < tau_desc
        if not np.any(ok):
            continue
        qi, ci = np.nonzero(ok)
        fid = nn[qi, ci]
        xc = fs.x[fid]
        X, _ = midpoint_rays(pose.T, Dq[qi], cpose.T, ray_directions(cpose, xc))
        e1 = reprojection_errors(pose, X, xs[qi])
        e2 = reprojection_errors(cpose, X, xc)
        good = np.isfinite(X).all(axis=1) & (e1 < tau_reproj) & (e2 < tau_reproj)
        for a, f, d in zip(qi[good], fid[good], dist[qi[good], ci[good]]):
            found[a].append((fs.image_id, int(f), float(d)))
    for lst in found:
        lst.sort(key=lambda t: (t[2], t[0], t[1]))
    return found


def guided_match(fk, candidate_images, current_pose, k=20, tau_desc=np.inf, tau_reproj=2e-3):
    """Observations in already posed images compatible with observation ``fk``."""
    lookup = {fs.image_id: fs for fs, _ in candidate_images}
    hits = guided_candidates(fk.descriptor, fk.x, current_pose, candidate_images,
                             k, tau_desc, tau_reproj)[0]
    return [lookup[img].observation(f) for img, f, _ in hits]


def _open(path, mode):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t")
    return open(path, mode)


def read_keypoints(path):
    """Raw (pixels, scales, orientations, descriptors) from a keypoint file."""
    try:
        with _open(path, "r") as fh:
            tokens = fh.read().split()
    except (OSError, UnicodeDecodeError, EOFError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if len(tokens) < 2:
        raise ParseError(f"{path}: missing header")
    try:
        n, dim = int(tokens[0]), int(tokens[1])
    except ValueError:
        raise ParseError(f"{path}: malformed header") from None
    if dim != DESCRIPTOR_DIM:
        raise DimensionMismatch(f"{path}: descriptor length {dim} != {DESCRIPTOR_DIM}")
    per = 4 + dim
    body = tokens[2:]
    if n < 0 or len(body) != n * per:
        raise ParseError(f"{path}: expected {n} keypoints of {per} values, got {len(body)} values")
    try:
        rows = np.array(body, dtype=float).reshape(n, per)
    except ValueError:
        raise ParseError(f"{path}: non-numeric value") from None
    desc = rows[:, 4:]
    if not np.all(np.isfinite(rows)) or np.any(desc != np.round(desc)):
        raise ParseError(f"{path}: descriptor entries must be integers")
    return rows[:, 0:2], rows[:, 2], rows[:, 3], desc


def load_features(path, intr, image_id=0, name=None):
    pixels, scales, orient, desc = read_keypoints(path)
    return FeatureSet.from_pixels(image_id, pixels, desc, intr, scales=scales,
                                  orientations=orient, name=name or "")


def write_features(path, features):
    with _open(path, "w") as fh:
        fh.write(f"{len(features)} {DESCRIPTOR_DIM}\n")
        for p, s, o, d in zip(features.pixels, features.scales, features.orientations,
                              features.descriptors):
            fh.write(" ".join(repr(float(v)) for v in (p[0], p[1], s, o)) + "\n")
            ints = [str(int(round(v))) for v in d]
            for i in range(0, DESCRIPTOR_DIM, 20):
                fh.write(" " + " ".join(ints[i:i + 20]) + "\n")
