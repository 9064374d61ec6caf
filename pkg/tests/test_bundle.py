import numpy as np
import pytest

from extcalib.bundle import BaProblem, apply_update, bundle_adjust, residuals, residuals_and_jacobian
from extcalib.errors import InvalidProblem
from extcalib.geometry import CameraPose, project, random_rotation

from conftest import points_in_front


def make_problem(rng, n_cams=3, n_pts=30, noise=0.0, fixed=(0,)):
    poses = [CameraPose.identity()] + [
        CameraPose(random_rotation(rng, 0.15), rng.normal(size=3) * 0.4) for _ in range(n_cams - 1)]
    X = points_in_front(rng, n_pts, near=4.0, far=7.0, spread=1.0)
    cam = np.repeat(np.arange(n_cams), n_pts)
    pt = np.tile(np.arange(n_pts), n_cams)
    xy = np.vstack([project(p, X) for p in poses])
    xy = xy + rng.normal(scale=noise, size=xy.shape) if noise else xy
    return BaProblem(poses, X, cam, pt, xy, set(fixed))


def numeric_jacobian(problem, h=1e-7):
    n = problem.n_params
    cols = []
    for k in range(n):
        d = np.zeros(n)
        d[k] = h
        cols.append((residuals(apply_update(problem, d)) - residuals(apply_update(problem, -d))) / (2 * h))
    return np.column_stack(cols)


def test_jacobian_matches_finite_differences(rng):
    for _ in range(20):
        prob = make_problem(rng, n_cams=3, n_pts=6, noise=1e-3)
        prob.points = prob.points + rng.normal(scale=0.05, size=prob.points.shape)
        _, J = residuals_and_jacobian(prob)
        Jn = numeric_jacobian(prob)
        assert np.abs(J.toarray() - Jn).max() / np.abs(Jn).max() < 1e-5


def test_fixed_cameras_have_no_columns(rng):
    prob = make_problem(rng, n_cams=3, n_pts=5, fixed=(0, 2))
    _, J = residuals_and_jacobian(prob)
    assert J.shape[1] == 6 + 3 * 5
    r = residuals(prob)
    assert np.abs(r).max() < 1e-15


def test_zero_residual_is_fixed_point(rng):
    prob = make_problem(rng)
    out, rep = bundle_adjust(prob)
    assert rep.converged and rep.iterations == 0
    assert all(np.array_equal(a.R, b.R) and np.array_equal(a.T, b.T) for a, b in zip(out.poses, prob.poses))
    assert np.array_equal(out.points, prob.points)


def test_perturbed_points_converge(rng):
    prob = make_problem(rng, n_cams=2, n_pts=50)
    prob.points = prob.points + rng.normal(scale=1e-3, size=prob.points.shape)
    out, rep = bundle_adjust(prob)
    assert rep.final_rmse < 1e-8
    assert out.poses[0] == CameraPose.identity()


def test_noisy_cost_monotone(rng):
    for _ in range(10):
        prob = make_problem(rng, noise=1e-3)
        prob.points = prob.points + rng.normal(scale=1e-2, size=prob.points.shape)
        out, rep = bundle_adjust(prob, gradient_tol=1e-12)
        assert rep.final_rmse <= rep.initial_rmse
        assert all(b <= a for a, b in zip(rep.cost_history, rep.cost_history[1:]))
        assert np.array_equal(out.poses[0].R, np.eye(3)) and np.array_equal(out.poses[0].T, np.zeros(3))


def test_stationary_at_convergence(rng):
    prob = make_problem(rng, noise=1e-3)
    prob.poses[1] = CameraPose(prob.poses[1].R, prob.poses[1].T + 0.01)
    out, rep = bundle_adjust(prob, max_iters=200, gradient_tol=1e-9)
    assert rep.converged
    r, J = residuals_and_jacobian(out)
    assert np.abs(J.T @ r).max() < 1e-9


def test_invalid_problems(rng):
    prob = make_problem(rng, n_cams=2, n_pts=4)
    with pytest.raises(InvalidProblem):
        bundle_adjust(BaProblem(prob.poses, prob.points, prob.obs_camera, prob.obs_point, prob.obs_xy, set()))
    with pytest.raises(InvalidProblem):
        bundle_adjust(BaProblem(prob.poses, prob.points, prob.obs_camera + 5, prob.obs_point, prob.obs_xy))
