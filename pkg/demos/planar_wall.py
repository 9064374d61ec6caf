"""
A flat wall is not a degenerate scene
=====================================

Methods that estimate a fundamental matrix break down when every point
lies on a plane. With calibrated cameras the essential matrix is still
determined, up to the two-fold ambiguity a plane induces. Here a strictly
planar wall is reconstructed from a sideways-moving camera.
"""
import numpy as np

from extcalib.evaluation import evaluate
from extcalib.five_point import essential_from_pose, solve_essential_5pt
from extcalib.geometry import compose_relative, project
from extcalib.pipeline import init_pair, run_sequence
from extcalib.synthetic import generate_wall

scene = generate_wall(n_cameras=8, step=0.5, n_points=400, relief=0.0, seed=3)
print("depth spread of the wall:", np.ptp(scene.gt_points[:, 2]))

###############################################################################
# Five coplanar points still give the true essential matrix among the candidates

g0, g1 = scene.gt_poses[:2]
X = scene.gt_points[:5]
rel = compose_relative(g0, g1)
xa, xb = project(g0, X), project(g1, X)
E_true = essential_from_pose(rel)
E_true /= np.linalg.norm(E_true)
cands = solve_essential_5pt(xa, xb)
best = min(min(np.abs(E - E_true).max(), np.abs(E + E_true).max()) for E in cands)
print(f"{len(cands)} candidates from five coplanar points, closest is {best:.1e} from the truth")

###############################################################################
# Two-view initialization and the full sequence

rec = init_pair(scene.features[0], scene.features[1])
print(f"init: {len(rec.points)} points")
rec = run_sequence(scene.features)
rep = evaluate(rec, scene.gt_poses)
print(f"sequence: {len(rec.registered)}/{scene.n_cameras} registered, "
      f"max R_err {rep.r_err.max():.1e} deg, max C_err {rep.c_err.max():.1e}")
