"""
Minimal solvers on a random instance
====================================

Five correspondences fix the essential matrix up to a finite set of
candidates, and three 2D-3D correspondences fix an absolute pose up to
four. This script builds one random scene, runs both solvers and shows
that the true answer is among the candidates.
"""
import numpy as np

from extcalib.five_point import decompose_essential, essential_from_pose, solve_essential_5pt
from extcalib.geometry import CameraPose, project, random_rotation
from extcalib.p3p import disambiguate_pose, solve_p3p_finsterwalder

rng = np.random.default_rng(7)

# a second camera rotated by up to ~30 degrees and shifted by about a unit
pose = CameraPose(random_rotation(rng, 0.5), np.array([1.0, 0.2, -0.1]))
X = np.column_stack([rng.uniform(-1.5, 1.5, (20, 2)), rng.uniform(4, 8, 20)])
xa = project(CameraPose.identity(), X)
xb = project(pose, X)

###############################################################################
# Relative pose from five pairs

candidates = solve_essential_5pt(xa[:5], xb[:5])
E_true = essential_from_pose(pose)
E_true /= np.linalg.norm(E_true)
print(f"five-point: {len(candidates)} candidate essential matrices")
for E in candidates:
    err = min(np.abs(E - E_true).max(), np.abs(E + E_true).max())
    print(f"  distance to truth {err:.2e}")

# the cheirality vote over all twenty pairs picks the factorization
best = min(candidates, key=lambda E: min(np.abs(E - E_true).max(), np.abs(E + E_true).max()))
rel = decompose_essential(best, xa, xb)
print("recovered rotation error", np.abs(rel.R - pose.R).max())
print("recovered direction     ", rel.T, "true", pose.T / np.linalg.norm(pose.T))

###############################################################################
# Absolute pose from three points, disambiguated by the rest

sols = solve_p3p_finsterwalder(xb[:3], X[:3])
print(f"\nP3P: {len(sols)} physical solutions")
for s in sols:
    print(f"  centre {np.round(s.T, 6)}")
chosen = disambiguate_pose(sols, xb[3:], X[3:], tol=1e-6)
print("chosen centre", chosen.T, "true", pose.T)
