import numpy as np
import pytest

from extcalib.geometry import CameraPose, random_rotation


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_pose(rng, max_angle=np.pi, scale=1.0):
    return CameraPose(random_rotation(rng, max_angle), rng.normal(size=3) * scale)


def points_in_front(rng, n, pose=None, near=3.0, far=8.0, spread=1.5):
    """World points at depth [near, far] in front of ``pose`` (identity by default)."""
    P = np.column_stack([rng.uniform(-spread, spread, (n, 2)), rng.uniform(near, far, n)])
    if pose is None:
        return P
    return P @ pose.R + pose.T


def align_sign(A, B):
    """Max elementwise difference between A and B up to sign, after Frobenius normalization."""
    A = A / np.linalg.norm(A)
    B = B / np.linalg.norm(B)
    return min(np.abs(A - B).max(), np.abs(A + B).max())


def two_view_scene(rng, n, max_angle=0.6):
    """Random second pose and ``n`` points in front of both it and the identity camera."""
    while True:
        pose = random_pose(rng, max_angle)
        X = points_in_front(rng, n)
        if np.all(pose.to_camera(X)[:, 2] > 0.5):
            return pose, X


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion number, ok, detail)`` for the end-of-run summary."""
    def record(n, ok, detail):
        ACCEPTANCE_LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
