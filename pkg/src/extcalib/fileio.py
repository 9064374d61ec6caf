"""Camera file formats, estimated-pose files and PLY export.

Middlebury ``*_par.txt``: a count line, then per image ``name k11..k33
r11..r33 t1 t2 t3`` with ``x = K [R | t] X``.

Strecha ``*.camera``: three K rows, a distortion row, three rows of the
camera-to-world rotation, the camera centre and a ``width height`` row.

Estimated poses: one ``<name>.pose`` file per image holding the three rows
of R followed by the camera centre T, plus ``manifest.txt``.
"""
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError
from .geometry import CameraIntrinsics, CameraPose
from .matching import write_features


@dataclass(eq=False)
class GroundTruthCamera:
    name: str
    K: np.ndarray
    pose: CameraPose
    source: str
    distortion: np.ndarray = field(default_factory=lambda: np.zeros(3))
    width: int = 0
    height: int = 0


def _floats(tokens, path, what):
    try:
        vals = np.array([float(t) for t in tokens])
    except ValueError:
        raise ParseError(f"{path}: non-numeric {what}") from None
    if not np.all(np.isfinite(vals)):
        raise ParseError(f"{path}: non-finite {what}")
    return vals


def _rotation(R, path, tol=1e-6):
    """Nearest proper rotation; files store only a few digits in practice."""
    R = R.reshape(3, 3)
    if np.linalg.norm(R.T @ R - np.eye(3)) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise ParseError(f"{path}: rotation is not orthonormal")
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def _lines(path):
    try:
        text = Path(path).read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return [ln.split() for ln in text.splitlines() if ln.strip()]


def load_middlebury_par(path):
    lines = _lines(path)
    if not lines:
        raise ParseError(f"{path}: empty file")
    try:
        n = int(lines[0][0])
    except ValueError:
        raise ParseError(f"{path}: bad count line") from None
    if len(lines[0]) != 1 or n != len(lines) - 1:
        raise ParseError(f"{path}: count {lines[0]} does not match {len(lines) - 1} camera lines")
    cams = []
    for row in lines[1:]:
        if len(row) != 22:
            raise ParseError(f"{path}: camera line has {len(row)} fields, expected 22")
        vals = _floats(row[1:], path, "camera entry")
        K = vals[:9].reshape(3, 3)
        R = _rotation(vals[9:18], path)
        t = vals[18:21]
        cams.append(GroundTruthCamera(row[0], K, CameraPose(R, -R.T @ t), "middlebury"))
    return cams


def write_middlebury_par(path, cams):
    with open(path, "w") as fh:
        fh.write(f"{len(cams)}\n")
        for c in cams:
            vals = np.concatenate([np.ravel(c.K), np.ravel(c.pose.R), c.pose.t])
            fh.write(c.name + " " + " ".join(repr(float(v)) for v in vals) + "\n")


def load_strecha_camera(path, name=None):
    lines = _lines(path)
    if len(lines) != 9:
        raise ParseError(f"{path}: expected 9 non-empty lines, found {len(lines)}")
    for i in (0, 1, 2, 3, 4, 5, 6, 7):
        if len(lines[i]) != 3:
            raise ParseError(f"{path}: line {i + 1} must hold 3 values")
    if len(lines[8]) != 2:
        raise ParseError(f"{path}: resolution line must hold width and height")
    K = _floats(sum(lines[0:3], []), path, "K").reshape(3, 3)
    dist = _floats(lines[3], path, "distortion")
    R_c2w = _rotation(_floats(sum(lines[4:7], []), path, "rotation"), path)
    C = _floats(lines[7], path, "centre")
    try:
        width, height = int(lines[8][0]), int(lines[8][1])
    except ValueError:
        raise ParseError(f"{path}: resolution must be integers") from None
    if width <= 0 or height <= 0:
        raise ParseError(f"{path}: resolution must be positive")
    if name is None:
        name = Path(path).name
        if name.endswith(".camera"):
            name = name[:-len(".camera")]
    return GroundTruthCamera(name, K, CameraPose(R_c2w.T, C), "strecha", dist, width, height)


def write_strecha_camera(path, cam):
    def row(v):
        return " ".join(repr(float(x)) for x in v) + "\n"

    dist = np.zeros(3) if cam.distortion is None else cam.distortion
    with open(path, "w") as fh:
        for r in cam.K:
            fh.write(row(r))
        fh.write(row(dist))
        for r in cam.pose.R.T:
            fh.write(row(r))
        fh.write(row(cam.pose.T))
        fh.write(f"{int(cam.width)} {int(cam.height)}\n")


def load_strecha_dir(path):
    files = sorted(Path(path).glob("*.camera"))
    if not files:
        raise ParseError(f"{path}: no .camera files")
    return [load_strecha_camera(f) for f in files]


def write_intrinsics(path, intr):
    with open(path, "w") as fh:
        for r in intr.K:
            fh.write(" ".join(repr(float(x)) for x in r) + "\n")
        fh.write(" ".join(repr(float(x)) for x in intr.distortion) + "\n")


def read_intrinsics(path):
    """Three rows of K, optionally followed by ``k1 k2 p1 p2``."""
    lines = _lines(path)
    if len(lines) not in (3, 4) or any(len(r) != 3 for r in lines[:3]):
        raise ParseError(f"{path}: expected three rows of K and an optional distortion row")
    K = _floats(sum(lines[:3], []), path, "K").reshape(3, 3)
    dist = _floats(lines[3], path, "distortion") if len(lines) == 4 else np.zeros(4)
    if len(dist) > 4:
        raise ParseError(f"{path}: at most four distortion coefficients")
    try:
        return CameraIntrinsics.from_matrix(K, dist)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_pose_file(path, pose):
    with open(path, "w") as fh:
        for r in pose.R:
            fh.write(" ".join(repr(float(x)) for x in r) + "\n")
        fh.write(" ".join(repr(float(x)) for x in pose.T) + "\n")


def read_pose_file(path):
    lines = _lines(path)
    if len(lines) != 4 or any(len(r) != 3 for r in lines):
        raise ParseError(f"{path}: expected 3 rows of R and one row of T")
    vals = _floats(sum(lines, []), path, "pose")
    return CameraPose(_rotation(vals[:9], path), vals[9:])


def write_poses(out_dir, names, rec):
    """Pose files for registered images plus a manifest of every input image."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    failed = dict(rec.failed)
    with open(out / "manifest.txt", "w") as fh:
        for image_id, name in enumerate(names):
            if image_id in rec.poses:
                write_pose_file(out / f"{name}.pose", rec.poses[image_id])
                fh.write(f"{image_id} {name} registered\n")
            else:
                reason = failed.get(image_id, "not processed").replace("\n", " ")
                fh.write(f"{image_id} {name} failed {reason}\n")


def read_poses(est_dir):
    """Ordered list of (image_id, name, pose or None) from a pose directory."""
    est = Path(est_dir)
    rows = _lines(est / "manifest.txt")
    out = []
    for r in rows:
        if len(r) < 3:
            raise ParseError(f"{est}/manifest.txt: malformed line {' '.join(r)}")
        try:
            image_id = int(r[0])
        except ValueError:
            raise ParseError(f"{est}/manifest.txt: bad image id {r[0]}") from None
        pose = read_pose_file(est / f"{r[1]}.pose") if r[2] == "registered" else None
        out.append((image_id, r[1], pose))
    return out


def export_ply(rec, path):
    """ASCII PLY: model points in grey, camera centres in red."""
    pts = rec.point_array()
    cams = np.array([rec.poses[i].T for i in rec.registered]).reshape(-1, 3)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(pts) + len(cams)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for p in pts:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} 128 128 128\n")
        for c in cams:
            fh.write(f"{float(c[0])!r} {float(c[1])!r} {float(c[2])!r} 255 0 0\n")


def export_scene(scene, out_dir):
    """Write a synthetic scene as feature files, intrinsics and ground truth in both formats."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    (out / "gt_strecha").mkdir(exist_ok=True)
    write_intrinsics(out / "intrinsics.txt", scene.intrinsics)
    cams = []
    for name, fs, pose in zip(scene.names, scene.features, scene.gt_poses):
        write_features(out / "features" / f"{name}.key", fs)
        cam = GroundTruthCamera(name, scene.intrinsics.K, pose, "synthetic",
                                np.zeros(3), *scene.image_size)
        write_strecha_camera(out / "gt_strecha" / f"{name}.camera", cam)
        cams.append(cam)
    write_middlebury_par(out / "gt_par.txt", cams)
    return out
