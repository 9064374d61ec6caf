"""Oracle checks runnable without pytest (``extcalib selftest``)."""
import time

import numpy as np
from scipy.spatial.transform import Rotation

from .bundle import BaProblem, apply_update, residuals, residuals_and_jacobian
from .evaluation import evaluate, horn_scale, rotation_error
from .five_point import essential_from_pose, solve_essential_5pt
from .geometry import CameraPose, project, random_rotation
from .p3p import solve_p3p_finsterwalder
from .pipeline import run_sequence
from .synthetic import generate_ring


def _random_pair(rng):
    pose = CameraPose(random_rotation(rng, 0.5), rng.normal(size=3))
    X = rng.uniform([-1, -1, 3], [1, 1, 6], size=(5, 3))
    return pose, X


def check_five_point(trials, rng):
    worst = 0.0
    for _ in range(trials):
        pose, X = _random_pair(rng)
        Es = solve_essential_5pt(project(CameraPose.identity(), X), project(pose, X))
        E = essential_from_pose(pose)
        E /= np.linalg.norm(E)
        worst = max(worst, min((min(np.abs(c - E).max(), np.abs(c + E).max()) for c in Es), default=np.inf))
    return worst < 1e-6, f"worst essential-matrix error {worst:.2e}"


def check_p3p(trials, rng):
    worst = 0.0
    for _ in range(trials):
        R = random_rotation(rng)
        pose = CameraPose(R, rng.normal(size=3))
        Pc = rng.uniform([-1, -1, 2], [1, 1, 6], size=(3, 3))
        X = Pc @ R + pose.T
        sols = solve_p3p_finsterwalder(Pc[:, :2] / Pc[:, 2:], X)
        worst = max(worst, min(max(np.abs(s.R - R).max(), np.abs(s.T - pose.T).max()) for s in sols))
    return worst < 1e-6, f"worst pose error {worst:.2e}"


def check_jacobian(trials, rng):
    worst = 0.0
    for _ in range(trials):
        X = rng.uniform([-1, -1, 4], [1, 1, 6], size=(8, 3))
        poses = [CameraPose.identity(), CameraPose(random_rotation(rng, 0.2), rng.normal(size=3) * 0.3)]
        cam = np.repeat([0, 1], 8)
        pt = np.tile(np.arange(8), 2)
        xy = np.vstack([project(p, X) for p in poses]) + rng.normal(size=(16, 2)) * 1e-3
        prob = BaProblem(poses, X, cam, pt, xy)
        _, J = residuals_and_jacobian(prob)
        J = J.toarray()
        h = 1e-7
        Jn = np.empty_like(J)
        for k in range(J.shape[1]):
            d = np.zeros(J.shape[1])
            d[k] = h
            Jn[:, k] = (residuals(apply_update(prob, d)) - residuals(apply_update(prob, -d))) / (2 * h)
        worst = max(worst, np.abs(J - Jn).max() / np.abs(Jn).max())
    return worst < 1e-5, f"worst relative Jacobian discrepancy {worst:.2e}"


def check_metrics(trials, rng):
    worst = 0.0
    for _ in range(trials):
        A, B = random_rotation(rng), random_rotation(rng)
        q = np.degrees(np.linalg.norm(Rotation.from_matrix(A.T @ B).as_rotvec()))
        worst = max(worst, abs(rotation_error(A, B) - q) if q < 179 else 0.0)
        gt, est = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
        ref = np.sqrt(sum(np.sum((g - gt.mean(0)) ** 2) for g in gt) / sum(np.sum((e - est.mean(0)) ** 2) for e in est))
        worst = max(worst, abs(horn_scale(gt, est) - ref))
    return worst < 1e-6, f"worst metric disagreement {worst:.2e}"


def check_ring(_trials, _rng):
    scene = generate_ring(10, 7.5, 200, seed=1)
    rec = run_sequence(scene.features)
    rep = evaluate(rec, scene.gt_poses)
    ok = len(rec.registered) == 10 and rep.c_err.max() < 1e-8 and rep.r_err.max() < 1e-5
    return ok, f"{len(rec.registered)}/10 registered, max C_err {rep.c_err.max():.2e}"


CHECKS = [
    ("five-point completeness", check_five_point, 200),
    ("P3P completeness", check_p3p, 200),
    ("BA Jacobian vs finite differences", check_jacobian, 5),
    ("metric formulas", check_metrics, 200),
    ("noiseless ring end to end", check_ring, 1),
]


def run_selftest(quick=True, seed=0):
    rng = np.random.default_rng(seed)
    all_ok = True
    for name, fn, trials in CHECKS:
        t0 = time.perf_counter()
        try:
            ok, msg = fn(trials if quick else trials * 10, rng)
        except Exception as exc:  # report and keep going
            ok, msg = False, f"{type(exc).__name__}: {exc}"
        all_ok &= ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {msg} ({time.perf_counter() - t0:.1f}s)")
    return all_ok
