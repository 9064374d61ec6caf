import numpy as np
import pytest

from extcalib.errors import ParseError
from extcalib.fileio import (GroundTruthCamera, export_ply, load_middlebury_par, load_strecha_camera,
                             read_intrinsics, read_pose_file, write_intrinsics, write_middlebury_par,
                             write_pose_file, write_strecha_camera)
from extcalib.geometry import CameraIntrinsics, CameraPose
from extcalib.pipeline import Reconstruction
from extcalib.triangulation import ModelPoint

from conftest import random_pose

K = np.array([[700.0, 0, 320], [0, 710, 240], [0, 0, 1]])


def par_line(name, K, R, t):
    return name + " " + " ".join(str(v) for v in np.concatenate([K.ravel(), R.ravel(), t])) + "\n"


def test_middlebury_examples(tmp_path):
    p = tmp_path / "par.txt"
    p.write_text("2\n" + par_line("a.png", np.eye(3), np.eye(3), np.zeros(3))
                 + par_line("b.png", np.eye(3), np.eye(3), np.array([0, 0, -5.0])))
    a, b = load_middlebury_par(p)
    assert np.array_equal(a.pose.R, np.eye(3)) and np.array_equal(a.pose.T, np.zeros(3))
    assert b.pose.T == pytest.approx([0, 0, 5])
    assert a.name == "a.png" and a.source == "middlebury"


def test_middlebury_round_trip(tmp_path, rng):
    cams = [GroundTruthCamera(f"v{i:02d}.png", K, random_pose(rng, scale=3), "synthetic") for i in range(8)]
    p = tmp_path / "par.txt"
    write_middlebury_par(p, cams)
    for a, b in zip(cams, load_middlebury_par(p)):
        assert a.name == b.name and np.abs(a.K - b.K).max() < 1e-9
        assert np.abs(a.pose.R - b.pose.R).max() < 1e-9 and np.abs(a.pose.T - b.pose.T).max() < 1e-9


def strecha_text(R_c2w=np.eye(3), C=np.zeros(3), res="3072 2048"):
    rows = [K[0], K[1], K[2], [0, 0, 0], *R_c2w, C]
    return "\n".join(" ".join(str(v) for v in r) for r in rows) + "\n" + res + "\n"


def test_strecha_identity_and_round_trip(tmp_path, rng):
    p = tmp_path / "a.png.camera"
    p.write_text(strecha_text())
    cam = load_strecha_camera(p)
    assert np.array_equal(cam.pose.R, np.eye(3)) and np.array_equal(cam.pose.T, np.zeros(3))
    assert cam.name == "a.png" and (cam.width, cam.height) == (3072, 2048)
    for i in range(10):
        src = GroundTruthCamera(f"c{i}", K, random_pose(rng, scale=5), "synthetic", np.zeros(3), 640, 480)
        q = tmp_path / f"c{i}.camera"
        write_strecha_camera(q, src)
        back = load_strecha_camera(q)
        assert np.abs(back.pose.R - src.pose.R).max() < 1e-9 and np.abs(back.pose.T - src.pose.T).max() < 1e-9
        assert (back.width, back.height) == (640, 480)


def test_strecha_stores_camera_to_world_rotation(tmp_path, rng):
    pose = random_pose(rng)
    p = tmp_path / "x.camera"
    p.write_text(strecha_text(pose.R.T, pose.T))
    back = load_strecha_camera(p)
    assert np.abs(back.pose.R - pose.R).max() < 1e-12


MALFORMED_STRECHA = [
    strecha_text(res="3072"),
    strecha_text(res="3072 2048 1"),
    strecha_text(res="0 2048"),
    strecha_text(res="3072.5 2048"),
    strecha_text(R_c2w=2 * np.eye(3)),
    strecha_text().replace("700.0", "seven"),
    strecha_text().replace("700.0", "nan"),
    "\n".join(strecha_text().splitlines()[:7]) + "\n",
    "",
]


@pytest.mark.parametrize("text", MALFORMED_STRECHA)
def test_strecha_malformed(tmp_path, text):
    p = tmp_path / "bad.camera"
    p.write_text(text)
    with pytest.raises(ParseError):
        load_strecha_camera(p)


MALFORMED_PAR = [
    "",
    "x\n",
    "2\n" + par_line("a", np.eye(3), np.eye(3), np.zeros(3)),
    "1\n" + par_line("a", np.eye(3), np.eye(3), np.zeros(3)).replace(" 0.0\n", "\n"),
    "1\n" + par_line("a", np.eye(3), 3 * np.eye(3), np.zeros(3)),
    "1\n" + par_line("a", np.eye(3), np.eye(3), np.zeros(3)).replace("1.0", "one", 1),
]


@pytest.mark.parametrize("text", MALFORMED_PAR)
def test_middlebury_malformed(tmp_path, text):
    p = tmp_path / "bad_par.txt"
    p.write_text(text)
    with pytest.raises(ParseError):
        load_middlebury_par(p)


def test_missing_file_is_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_middlebury_par(tmp_path / "none.txt")


def test_pose_file_round_trip(tmp_path, rng):
    for i in range(20):
        pose = random_pose(rng, scale=10)
        p = tmp_path / f"{i}.pose"
        write_pose_file(p, pose)
        back = read_pose_file(p)
        assert np.abs(back.R - pose.R).max() < 1e-12 and np.abs(back.T - pose.T).max() < 1e-12


def test_intrinsics_round_trip(tmp_path):
    intr = CameraIntrinsics(700.0, 690.0, 320.5, 240.25, k1=-0.1, k2=0.01, p1=1e-4, p2=-2e-4)
    p = tmp_path / "K.txt"
    write_intrinsics(p, intr)
    assert read_intrinsics(p) == intr
    p.write_text("1 0 0\n0 1 0\n")
    with pytest.raises(ParseError):
        read_intrinsics(p)


def small_reconstruction(rng, n_points):
    rec = Reconstruction()
    rec.poses = {0: CameraPose.identity(), 1: CameraPose(np.eye(3), np.array([1.0, 0, 0]))}
    rec.registered = [0, 1]
    rec.points = [ModelPoint(rng.normal(size=3)) for _ in range(n_points)]
    return rec


def test_ply_counts_and_third_party_parse(tmp_path, rng):
    plyfile = pytest.importorskip("plyfile")
    p = tmp_path / "m.ply"
    export_ply(small_reconstruction(rng, 0), p)
    assert plyfile.PlyData.read(str(p))["vertex"].count == 2
    rec = small_reconstruction(rng, 7)
    export_ply(rec, p)
    v = plyfile.PlyData.read(str(p))["vertex"]
    assert v.count == 9
    red = (v["red"] == 255) & (v["green"] == 0)
    assert red.sum() == 2
    assert np.array_equal(np.column_stack([v["x"], v["y"], v["z"]])[~red], rec.point_array())
