"""Pose error measures against ground truth.

Rotation error is the angle of ``R_gt^T R_est``. Translation error is the
angle between ground-truth and estimated translation directions relative
to the first camera. Camera-centre error is measured after scaling the
estimated centres by the ratio of centroid spreads of the two clouds and
is expressed in units of the first ground-truth baseline.
"""
import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBaseline, DegenerateCloud, MissingGroundTruth, ZeroVector
from .geometry import apply_similarity, compose_relative


def rotation_error(R_gt, R_est):
    """Angle in degrees of the rotation aligning ``R_est`` with ``R_gt``.

    Equal to ``acos((tr(M) - 1) / 2)`` for ``M = R_gt^T R_est``; taking the
    sine from the skew part keeps full precision near 0 and 180 degrees.
    """
    M = np.asarray(R_gt, dtype=float).T @ np.asarray(R_est, dtype=float)
    c = (np.trace(M) - 1.0) / 2.0
    s = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    return float(np.degrees(np.arctan2(s, c)))


def translation_angle_error(T_gt, T_est):
    T_gt = np.asarray(T_gt, dtype=float)
    T_est = np.asarray(T_est, dtype=float)
    if np.linalg.norm(T_gt) == 0 or np.linalg.norm(T_est) == 0:
        raise ZeroVector("translation vector has zero length")
    # same angle as acos of the normalized dot product, without its loss of precision near 0
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(T_gt, T_est)), T_gt @ T_est)))


def horn_scale(gt_centers, est_centers):
    gt = np.asarray(gt_centers, dtype=float).reshape(-1, 3)
    est = np.asarray(est_centers, dtype=float).reshape(-1, 3)
    if len(gt) != len(est) or len(gt) < 2:
        raise ValueError("need two equal-length clouds of at least two centres")
    num = np.sum((gt - gt.mean(axis=0)) ** 2)
    den = np.sum((est - est.mean(axis=0)) ** 2)
    if den == 0:
        raise DegenerateCloud("estimated centres coincide")
    return float(np.sqrt(num / den))


def camera_center_error(gt_centers, est_centers, s):
    """Per-camera ``|s * est - gt|`` over the first ground-truth baseline."""
    gt = np.asarray(gt_centers, dtype=float).reshape(-1, 3)
    est = np.asarray(est_centers, dtype=float).reshape(-1, 3)
    if len(gt) < 2:
        raise ValueError("need at least two ground-truth centres")
    alpha = np.linalg.norm(gt[0] - gt[1])
    if alpha == 0:
        raise DegenerateBaseline("first two ground-truth centres coincide")
    return np.linalg.norm(s * est - gt, axis=1) / alpha


def align_to_gt(poses, gt_first_pose):
    """Apply the rigid motion taking ``poses[0]`` onto ``gt_first_pose`` to every pose."""
    first = poses[0]
    A = gt_first_pose.R.T @ first.R
    b = gt_first_pose.T - A @ first.T
    return [apply_similarity(p, A, b) for p in poses]


def relative_translation(first, pose):
    rel = compose_relative(first, pose)
    return rel.t


@dataclass
class PoseErrorReport:
    image_ids: list
    r_err: np.ndarray
    t_err: np.ndarray
    c_err: np.ndarray
    scale: float

    def rows(self):
        return list(zip(self.image_ids, self.r_err, self.t_err, self.c_err))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scale", repr(float(self.scale))])
            w.writerow(["image_id", "R_err_deg", "T_err_deg", "C_err"])
            for row in self.rows():
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def evaluate_poses(image_ids, est_poses, gt_poses):
    """Errors of ``est_poses`` against ``gt_poses`` (same order, first entry is the reference).

    Centre errors are taken relative to the first camera, the point the two
    reconstructions share after alignment, so a uniform rescaling of the
    estimate about it is absorbed by the scale.
    """
    if len(est_poses) != len(gt_poses):
        raise MissingGroundTruth("pose counts differ")
    if len(est_poses) < 2:
        raise ValueError("need at least two cameras")
    aligned = align_to_gt(list(est_poses), gt_poses[0])
    origin = gt_poses[0].T
    gt_c = np.array([p.T for p in gt_poses]) - origin
    est_c = np.array([p.T for p in aligned]) - origin
    s = horn_scale(gt_c, est_c)
    c_err = camera_center_error(gt_c, est_c, s)
    r_err, t_err = [], []
    for g, e in zip(gt_poses, aligned):
        r_err.append(rotation_error(g.R, e.R))
        tg = relative_translation(gt_poses[0], g)
        te = relative_translation(aligned[0], e)
        if np.linalg.norm(tg) == 0 and np.linalg.norm(te) == 0:
            t_err.append(0.0)
        else:
            t_err.append(translation_angle_error(tg, te))
    return PoseErrorReport(list(image_ids), np.array(r_err), np.array(t_err), c_err, s)


def evaluate(rec, gt):
    """Errors of a reconstruction; ``gt`` maps (or indexes) image id to pose."""
    ids = list(rec.registered)
    try:
        gt_poses = [gt[i] for i in ids]
    except (KeyError, IndexError):
        raise MissingGroundTruth("a registered image has no ground-truth pose") from None
    return evaluate_poses(ids, [rec.poses[i] for i in ids], gt_poses)
