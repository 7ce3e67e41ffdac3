"""Backend parity: the compiled kernels must match the pure-Python twin
bit for bit, since suite determinism is defined over their outputs."""

import math
import random

import pytest

from crashbench import _kernels_py as pykern
from crashbench import kernels


def _compiled():
    try:
        from crashbench import _kernels as ckern
    except ImportError:
        pytest.skip("compiled kernels not built")
    return ckern


def test_active_backend_reported():
    assert kernels.BACKEND in ("compiled", "python")


def test_wrap_angle_range_and_boundaries():
    for a in (-10.0, -math.pi, -1e-9, 0.0, 1e-9, math.pi, 10.0, 1e6):
        w = pykern.wrap_angle(a)
        assert -math.pi < w <= math.pi
    assert pykern.wrap_angle(math.pi) == math.pi
    assert pykern.wrap_angle(-math.pi) == math.pi
    assert pykern.wrap_angle(0.0) == 0.0
    assert pykern.wrap_angle(3 * math.pi) == pytest.approx(math.pi, abs=1e-12)


def test_wrap_angle_identity_inside_range():
    rng = random.Random(7)
    for _ in range(200):
        a = rng.uniform(-math.pi + 1e-12, math.pi)
        assert pykern.wrap_angle(a) == a


def test_bicycle_step_backend_parity():
    ckern = _compiled()
    rng = random.Random(42)
    for _ in range(500):
        args = (
            rng.uniform(-100, 100),
            rng.uniform(-100, 100),
            rng.uniform(-math.pi, math.pi),
            rng.uniform(0, 25),
            rng.uniform(-0.78, 0.78),
            rng.uniform(-7, 3),
            rng.choice([0.01, 0.1, 0.5]),
            rng.choice([1, 10, 50]),
            2.588,
            30.0,
        )
        assert ckern.bicycle_step(*args) == pykern.bicycle_step(*args)


def test_obb_gap_backend_parity():
    ckern = _compiled()
    rng = random.Random(43)
    for _ in range(2000):
        args = tuple(
            rng.uniform(lo, hi)
            for lo, hi in (
                (-10, 10), (-10, 10), (-math.pi, math.pi), (0.3, 3), (0.3, 2),
                (-10, 10), (-10, 10), (-math.pi, math.pi), (0.3, 3), (0.3, 2),
            )
        )
        assert ckern.obb_max_gap(*args) == pykern.obb_max_gap(*args)


def test_wrap_angle_backend_parity():
    ckern = _compiled()
    rng = random.Random(44)
    for _ in range(1000):
        a = rng.uniform(-50, 50)
        assert ckern.wrap_angle(a) == pykern.wrap_angle(a)
