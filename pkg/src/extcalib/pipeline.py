"""Incremental reconstruction: two-view initialization, then one image at a time."""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import matching
from .bundle import BaProblem, bundle_adjust
from .errors import CalibrationError, InitFailed, RegistrationFailed
from .geometry import CameraPose
from .ransac import RansacParams, ransac_absolute_pose, ransac_relative_pose
from .triangulation import (ModelPoint, depths, midpoint_rays, ray_directions,
                            reprojection_errors, triangulate_nview)

log = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    relative_ransac: RansacParams = field(default_factory=lambda: RansacParams(max_iterations=2000))
    absolute_ransac: RansacParams = field(default_factory=lambda: RansacParams(max_iterations=1000, inlier_threshold=2e-3))
    theta: float = 1.25
    tau_desc: float = None
    tau_desc_factor: float = 0.35
    tau_reproj: float = 2e-3
    guided_k: int = 20
    window: int = 5
    min_init_parallax_deg: float = 1.0
    min_init_points: int = 10
    ba_max_iters: int = 50
    ba_gradient_tol: float = 1e-14
    freeze_old_cameras: bool = False

    def __post_init__(self):
        for name in ("theta", "tau_reproj", "tau_desc_factor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_desc is not None and not self.tau_desc > 0:
            raise ValueError("tau_desc must be positive")

    def resolve_tau_desc(self, feature_sets):
        if self.tau_desc is not None:
            return self.tau_desc
        desc = [fs.descriptors for fs in feature_sets if len(fs)]
        if not desc:
            return np.inf
        return self.tau_desc_factor * float(np.mean(np.linalg.norm(np.vstack(desc), axis=1)))


@dataclass(eq=False)
class Reconstruction:
    poses: dict = field(default_factory=dict)
    points: list = field(default_factory=list)
    registered: list = field(default_factory=list)
    features: dict = field(default_factory=dict)
    failed: list = field(default_factory=list)
    ba_reports: list = field(default_factory=list)
    tau_desc: float = np.inf

    def owner_map(self):
        """image_id -> {feature_id: point index}."""
        owners = {img: {} for img in self.registered}
        for j, pt in enumerate(self.points):
            for img, obs in pt.support.items():
                owners.setdefault(img, {})[obs.feature_id] = j
        return owners

    def point_array(self):
        return np.array([p.X for p in self.points]).reshape(-1, 3)


def _bundle(rec, cfg, free_images=None):
    """Bundle adjust the reconstruction in place."""
    cam_index = {img: i for i, img in enumerate(rec.registered)}
    cams, pts, xy = [], [], []
    for j, pt in enumerate(rec.points):
        for img, obs in pt.support.items():
            cams.append(cam_index[img])
            pts.append(j)
            xy.append(obs.x)
    if not rec.points:
        return None
    fixed = {0}
    if free_images is not None:
        fixed |= {cam_index[img] for img in rec.registered if img not in free_images}
    problem = BaProblem([rec.poses[img] for img in rec.registered], rec.point_array(),
                        cams, pts, xy, fixed)
    refined, report = bundle_adjust(problem, cfg.ba_max_iters, cfg.ba_gradient_tol)
    for i, img in enumerate(rec.registered):
        rec.poses[img] = refined.poses[i]
    for j, pt in enumerate(rec.points):
        pt.X = refined.points[j]
    rec.ba_reports.append(report)
    return report


def _recheck_support(rec, cfg):
    """Drop support entries that are no longer geometrically compatible."""
    removed = 0
    for pt in rec.points:
        for img in list(pt.support):
            obs = pt.support[img]
            if not reprojection_errors(rec.poses[img], pt.X, obs.x) < cfg.tau_reproj:
                del pt.support[img]
                removed += 1
    return removed


def init_pair(f1, f2, cfg=None):
    """Two-view reconstruction from the first two images of a sequence."""
    cfg = cfg or PipelineConfig()
    if len(f1) == 0 or len(f2) == 0:
        raise InitFailed("empty feature set")
    rec = Reconstruction(tau_desc=cfg.resolve_tau_desc([f1, f2]))
    matches = matching.match_ratio_test(f1, f2, cfg.theta)
    if len(matches) < 5:
        raise InitFailed(f"only {len(matches)} putative matches")
    ia = np.array([m.feature_a for m in matches])
    ib = np.array([m.feature_b for m in matches])
    try:
        result = ransac_relative_pose(f1.x[ia], f2.x[ib], cfg.relative_ransac)
    except CalibrationError as exc:
        raise InitFailed(f"relative pose failed: {exc}") from exc
    pose1, pose2 = CameraPose.identity(), result.model
    ia, ib = ia[result.inlier_indices], ib[result.inlier_indices]

    X, sin_angle = midpoint_rays(pose1.T, ray_directions(pose1, f1.x[ia]),
                                 pose2.T, ray_directions(pose2, f2.x[ib]))
    parallax = np.degrees(np.arcsin(np.clip(sin_angle, 0.0, 1.0)))
    if not np.median(parallax) >= cfg.min_init_parallax_deg:
        raise InitFailed(f"median parallax {np.median(parallax):.3g} deg is too small")
    desc_dist = np.linalg.norm(f1.descriptors[ia] - f2.descriptors[ib], axis=1)
    ok = ((reprojection_errors(pose1, X, f1.x[ia]) < cfg.tau_reproj)
          & (reprojection_errors(pose2, X, f2.x[ib]) < cfg.tau_reproj)
          & (desc_dist < rec.tau_desc) & (parallax > 0))

    rec.features = {f1.image_id: f1, f2.image_id: f2}
    rec.poses = {f1.image_id: pose1, f2.image_id: pose2}
    rec.registered = [f1.image_id, f2.image_id]
    for a, b, Xj in zip(ia[ok], ib[ok], X[ok]):
        pt = ModelPoint(Xj.copy())
        pt.add(f1.observation(a))
        pt.add(f2.observation(b))
        rec.points.append(pt)

    # guided matching for pairs the ratio test or RANSAC missed
    used_a = set(ia[ok].tolist())
    used_b = set(ib[ok].tolist())
    rest = np.array([i for i in range(len(f1)) if i not in used_a], dtype=int)
    if rest.size:
        hits = matching.guided_candidates(f1.descriptors[rest], f1.x[rest], pose1, [(f2, pose2)],
                                          cfg.guided_k, rec.tau_desc, cfg.tau_reproj)
        order = sorted((h[0][2], q) for q, h in enumerate(hits) if h)
        for _, q in order:
            for _, fb, _ in hits[q]:
                if fb in used_b:
                    continue
                a = int(rest[q])
                try:
                    Xj = triangulate_nview([pose1, pose2], [f1.x[a], f2.x[fb]])
                except CalibrationError:
                    continue
                used_b.add(fb)
                pt = ModelPoint(Xj)
                pt.add(f1.observation(a))
                pt.add(f2.observation(fb))
                rec.points.append(pt)
                break

    if len(rec.points) < cfg.min_init_points:
        raise InitFailed(f"only {len(rec.points)} points triangulated")
    try:
        _bundle(rec, cfg)
    except CalibrationError as exc:
        raise InitFailed(f"bundle adjustment failed: {exc}") from exc
    _recheck_support(rec, cfg)
    rec.points = [p for p in rec.points if p.n_support >= 2]
    log.info("initialized with %d points from %d/%d putative matches",
             len(rec.points), len(result.inlier_indices), len(matches))
    return rec


def _extend_and_create(rec, fn, pose, cfg, owned):
    """Guided matching of the unassigned features of ``fn`` against nearby images."""
    window = [img for img in rec.registered if img != fn.image_id][-cfg.window:]
    candidates = [(rec.features[img], rec.poses[img]) for img in window]
    owners = rec.owner_map()
    free = np.array([i for i in range(len(fn)) if i not in owned], dtype=int)
    if free.size == 0 or not candidates:
        return 0, 0
    hits = matching.guided_candidates(fn.descriptors[free], fn.x[free], pose, candidates,
                                      cfg.guided_k, rec.tau_desc, cfg.tau_reproj)
    extended = created = 0
    claimed = set()
    order = sorted((h[0][2], q) for q, h in enumerate(hits) if h)
    for _, q in order:
        f = int(free[q])
        obs_new = fn.observation(f)
        # at most one feature per image, best descriptor distance first
        per_image = {}
        for img, fid, _ in hits[q]:
            if (img, fid) not in claimed and img not in per_image:
                per_image[img] = fid

        owner = None
        for img, fid in per_image.items():
            j = owners.get(img, {}).get(fid)
            if j is not None and fn.image_id not in rec.points[j].support:
                owner = j
                break
        if owner is not None:
            pt = rec.points[owner]
            if reprojection_errors(pose, pt.X, obs_new.x) < cfg.tau_reproj:
                pt.add(obs_new)
                owners.setdefault(fn.image_id, {})[f] = owner
                extended += 1
            continue

        fresh = {img: fid for img, fid in per_image.items() if fid not in owners.get(img, {})}
        if len(fresh) < 2:
            continue
        obs = [rec.features[img].observation(fid) for img, fid in fresh.items()]
        views = [pose] + [rec.poses[o.image_id] for o in obs]
        xs = [obs_new.x] + [o.x for o in obs]
        try:
            X = triangulate_nview(views, xs)
        except CalibrationError:
            continue
        if not all(reprojection_errors(v, X, x) < cfg.tau_reproj for v, x in zip(views, xs)):
            continue
        pt = ModelPoint(X)
        pt.add(obs_new)
        for o in obs:
            pt.add(o)
            claimed.add((o.image_id, o.feature_id))
            owners.setdefault(o.image_id, {})[o.feature_id] = len(rec.points)
        owners.setdefault(fn.image_id, {})[f] = len(rec.points)
        rec.points.append(pt)
        created += 1
    return extended, created


def register_image(rec, fn, cfg=None):
    """Add image ``fn`` to the reconstruction (in place) and return it."""
    cfg = cfg or PipelineConfig()
    if len(rec.registered) < 2:
        raise ValueError("reconstruction must be initialized first")
    if fn.image_id in rec.poses:
        raise ValueError(f"image {fn.image_id} is already registered")
    matches = matching.match_2d3d(fn, rec.points, cfg.theta)
    if len(matches) < 3:
        raise RegistrationFailed(f"image {fn.image_id}: only {len(matches)} 2D-3D matches")
    fi = np.array([m.feature for m in matches])
    pj = np.array([m.point for m in matches])
    try:
        result = ransac_absolute_pose(fn.x[fi], rec.point_array()[pj], cfg.absolute_ransac)
    except CalibrationError as exc:
        raise RegistrationFailed(f"image {fn.image_id}: absolute pose failed: {exc}") from exc
    pose = result.model

    rec.features[fn.image_id] = fn
    rec.poses[fn.image_id] = pose
    rec.registered.append(fn.image_id)

    # RANSAC inliers extend the support of their points, one feature per point
    owned = set()
    best = {}
    for k in result.inlier_indices:
        f, j = int(fi[k]), int(pj[k])
        err = reprojection_errors(pose, rec.points[j].X, fn.x[f])
        if err < cfg.tau_reproj and (j not in best or err < best[j][1]):
            best[j] = (f, err)
    for j, (f, _) in sorted(best.items()):
        rec.points[j].add(fn.observation(f))
        owned.add(f)

    n_before = len(rec.points)
    extended, created = _extend_and_create(rec, fn, pose, cfg, owned)

    free_images = {fn.image_id} if cfg.freeze_old_cameras else None
    try:
        _bundle(rec, cfg, free_images)
    except CalibrationError as exc:
        for pt in rec.points:
            pt.support.pop(fn.image_id, None)
        rec.points = rec.points[:n_before]
        del rec.features[fn.image_id], rec.poses[fn.image_id]
        rec.registered.pop()
        raise RegistrationFailed(f"image {fn.image_id}: bundle adjustment failed: {exc}") from exc

    dropped = _recheck_support(rec, cfg)
    n_points = len(rec.points)
    rec.points = [p for p in rec.points if p.n_support >= 3]
    log.info("registered image %d: %d inliers, %d extended, %d new, %d support entries and "
             "%d points pruned", fn.image_id, len(result.inlier_indices), extended, created,
             dropped, n_points - len(rec.points))
    return rec


def run_sequence(features, cfg=None):
    """Reconstruct an ordered sequence; failed registrations are recorded and skipped."""
    cfg = cfg or PipelineConfig()
    features = list(features)
    if len(features) < 2:
        raise InitFailed("need at least two images")
    rec = init_pair(features[0], features[1], cfg)
    for fn in features[2:]:
        try:
            register_image(rec, fn, cfg)
        except RegistrationFailed as exc:
            log.warning("skipping image %d: %s", fn.image_id, exc)
            rec.failed.append((fn.image_id, str(exc)))
    return rec


def points_in_front(rec):
    """True when every support entry sees its point at positive depth."""
    return all(depths(rec.poses[img], p.X) > 0 for p in rec.points for img in p.support)
