"""Shared helpers and independent oracles used across the test modules."""

import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from articulate.cli import _rules_default
from hypothesis import strategies as st

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


RULES = _rules_default()


def rodrigues(axis, angle):
    """Rotation matrix from axis-angle, written independently of the package."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle) * kx + (1 - math.cos(angle)) * kx @ kx


def random_rotation_matrix(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def matrix_angle(a, b):
    """Geodesic angle between rotation matrices; atan2 keeps small angles accurate."""
    m = a.T @ b
    s = np.linalg.norm([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) / 2
    c = (np.trace(m) - 1) / 2
    return math.atan2(s, c)


finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vectors = st.tuples(finite, finite, finite).map(np.array)
unit_vectors = (
    st.tuples(finite, finite, finite)
    .filter(lambda v: np.linalg.norm(v) > 1e-2)
    .map(lambda v: np.array(v) / np.linalg.norm(v))
)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.VERDICTS):
        ok, detail = mod.VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
