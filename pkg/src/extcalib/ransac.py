"""RANSAC for relative pose (five-point) and absolute pose (P3P)."""
import logging
import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import CalibrationError, NoConsensus, NotEnoughMatches
from .five_point import decompose_essential, sampson_error, solve_essential_5pt
from .geometry import homogeneous
from .p3p import solve_p3p_finsterwalder
from .triangulation import reprojection_errors

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 1000
    inlier_threshold: float = 1e-3
    confidence: float = 0.999
    min_inliers: int = 15
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not self.inlier_threshold > 0:
            raise ValueError("inlier_threshold must be positive")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass
class ConsensusResult:
    model: Any
    inlier_indices: np.ndarray
    iterations_run: int
    essential: np.ndarray = None


def required_iterations(n_inliers, n_total, sample_size, confidence):
    w = n_inliers / n_total
    p_good = w ** sample_size
    if p_good >= 1.0:
        return 0
    if p_good <= 0.0:
        return math.inf
    return math.ceil(math.log(1.0 - confidence) / math.log(1.0 - p_good))


def _run(n, sample_size, params, hypothesize, score, tiebreak=None, min_iterations=1):
    """Generic loop: ``hypothesize(idx)`` -> models, ``score(model)`` -> inlier mask.

    Equal inlier counts keep the incumbent unless ``tiebreak(model, mask)``
    is given and ranks the challenger strictly higher. At least
    ``min_iterations`` samples are drawn even when the adaptive bound is lower.
    """
    rng = np.random.default_rng(params.rng_seed)
    best_model, best_mask, best_count = None, None, -1
    best_tb = None
    limit = params.max_iterations
    it = 0
    while it < limit:
        it += 1
        idx = rng.choice(n, size=sample_size, replace=False)
        try:
            models = hypothesize(idx)
        except CalibrationError:
            continue
        for model in models:
            mask = score(model)
            count = int(np.count_nonzero(mask))
            if count == best_count and tiebreak is not None:
                if best_tb is None:
                    best_tb = tiebreak(best_model, best_mask)
                tb = tiebreak(model, mask)
                if tb > best_tb:
                    best_model, best_mask, best_tb = model, mask, tb
            elif count > best_count:
                best_model, best_mask, best_count, best_tb = model, mask, count, None
                limit = min(params.max_iterations,
                            max(min_iterations,
                                required_iterations(count, n, sample_size, params.confidence)))
    return best_model, best_mask, best_count, it


def ransac_relative_pose(xa, xb, params=RansacParams()):
    """Essential matrix and relative pose of camera b from putative matches.

    ``xa``, ``xb`` are (n, 2) normalized coordinates. A match is an inlier
    when its Sampson error is below ``inlier_threshold ** 2``.
    """
    xa = np.asarray(xa, dtype=float).reshape(-1, 2)
    xb = np.asarray(xb, dtype=float).reshape(-1, 2)
    n = len(xa)
    if n < 5:
        raise NotEnoughMatches(f"{n} matches, need at least 5")
    thr2 = params.inlier_threshold ** 2

    def hypothesize(idx):
        return solve_essential_5pt(xa[idx], xb[idx])

    def score(E):
        return sampson_error(E, xa, xb) < thr2

    def parallax(E, mask):
        # a plane admits two exact decompositions; the spurious one puts the
        # scene far away, so prefer the wider median triangulation angle
        inl = np.flatnonzero(mask)
        try:
            pose = decompose_essential(E, xa[inl], xb[inl])
        except CalibrationError:
            return -np.inf
        da = homogeneous(xa[inl])
        db = homogeneous(xb[inl]) @ pose.R
        cos = np.sum(da * db, axis=1) / (np.linalg.norm(da, axis=1) * np.linalg.norm(db, axis=1))
        return -float(np.median(cos))

    # a single sample does not always return both planar twins, so keep
    # drawing a few even when every match is already an inlier
    E, mask, count, iters = _run(n, 5, params, hypothesize, score, parallax, min_iterations=10)
    if E is None or count < params.min_inliers:
        raise NoConsensus(f"best consensus {max(count, 0)} < {params.min_inliers}")
    inliers = np.flatnonzero(mask)
    pose = decompose_essential(E, xa[inliers], xb[inliers])
    log.debug("relative pose: %d/%d inliers after %d iterations", count, n, iters)
    return ConsensusResult(pose, inliers, iters, essential=E)


def ransac_absolute_pose(x, X, params=RansacParams()):
    """Camera pose from 2D-3D correspondences; every P3P candidate is scored on all of them."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    X = np.asarray(X, dtype=float).reshape(-1, 3)
    n = len(x)
    if n < 3:
        raise NotEnoughMatches(f"{n} correspondences, need at least 3")

    def hypothesize(idx):
        return solve_p3p_finsterwalder(x[idx], X[idx])

    def score(pose):
        return reprojection_errors(pose, X, x) < params.inlier_threshold

    pose, mask, count, iters = _run(n, 3, params, hypothesize, score)
    if pose is None or count < params.min_inliers:
        raise NoConsensus(f"best consensus {max(count, 0)} < {params.min_inliers}")
    log.debug("absolute pose: %d/%d inliers after %d iterations", count, n, iters)
    return ConsensusResult(pose, np.flatnonzero(mask), iters)
