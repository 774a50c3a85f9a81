import math

import mpmath as mp
import numpy as np
import pytest

from nmts.core import Box, StepSchedule, project, two_timescale_step
from nmts.errors import TrajectoryAborted

mp.mp.dps = 30


def polylog(alpha0=20.0, a=2 / 3, beta0=0.1, b=1.0, **kw):
    return StepSchedule(kind="poly-log", alpha0=alpha0, a=a, beta0=beta0, b=b, **kw)


def poly(alpha0=1.0, a=2 / 3, beta0=1.0, b=1.0, **kw):
    return StepSchedule(kind="polynomial", alpha0=alpha0, a=a, beta0=beta0, b=b, **kw)


class TestStepSchedule:
    def test_polylog_alpha_k1(self):
        # independent high-precision evaluation of 20 / (1*ln 2)^(2/3)
        expected = float(20 / (mp.log(2)) ** (mp.mpf(2) / 3))
        assert polylog().alpha_at(1) == pytest.approx(expected, rel=1e-15)
        assert polylog().alpha_at(1) == pytest.approx(25.535616946045724, rel=1e-12)

    def test_polynomial_alpha(self):
        sched = poly()
        assert sched.alpha_at(1) == 1.0
        assert sched.alpha_at(8) == pytest.approx(0.25, rel=1e-15)

    def test_beta_values(self):
        assert poly(beta0=1.0, b=1.0).beta_at(10) == pytest.approx(0.1, rel=1e-15)
        expected = float(mp.mpf("0.1") / mp.log(2))
        assert polylog(beta0=0.1).beta_at(1) == pytest.approx(expected, rel=1e-15)

    def test_ratio_decays(self):
        sched = polylog()
        assert sched.beta_at(10**6) / sched.alpha_at(10**6) < sched.beta_at(10) / sched.alpha_at(10)

    @pytest.mark.parametrize("sched", [polylog(), poly(beta0=0.25)])
    def test_timescale_separation_on_grid(self, sched):
        ks = np.unique(np.geomspace(1, 10**7, 400).astype(np.int64))
        ratios = np.array([sched.beta_at(int(k)) / sched.alpha_at(int(k)) for k in ks])
        assert np.all(np.diff(ratios) < 0)
        assert ratios[-1] < 1e-2 * ratios[0]

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            polylog().alpha_at(0)
        with pytest.raises(ValueError):
            polylog(start_index=50).beta_at(49)
        assert polylog(start_index=50).beta_at(50) > 0

    @pytest.mark.parametrize(
        "kw",
        [
            dict(a=0.5),             # a at the open boundary
            dict(a=1.0, b=1.0),      # no separation
            dict(b=1.2),             # b out of range
            dict(alpha0=0.0),
            dict(beta0=-1.0),
            dict(start_index=0),
        ],
    )
    def test_invalid_parameters(self, kw):
        base = dict(kind="polynomial", alpha0=1.0, a=2 / 3, beta0=1.0, b=1.0)
        base.update(kw)
        with pytest.raises(ValueError):
            StepSchedule(**base)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            StepSchedule(kind="exponential", alpha0=1, a=0.7, beta0=1, b=1)


class TestProjection:
    def test_interior_point_fixed(self):
        res = project(Box([0.5], [2.0]), [1.3])
        assert res.point[0] == 1.3
        assert res.correction[0] == 0.0
        assert not res.active

    def test_upper_clamp(self):
        res = project(Box([0.5], [2.0]), [2.5])
        assert res.point[0] == 2.0
        assert res.correction[0] == -0.5
        assert res.active

    def test_componentwise_clamp(self):
        res = project(Box([-1.0, 0.01], [10.0, 2.0]), [-3.0, 1.0])
        np.testing.assert_array_equal(res.point, [-1.0, 1.0])
        np.testing.assert_array_equal(res.correction, [2.0, 0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project(Box([0.0], [1.0]), [0.5, 0.5])

    def test_invalid_bounds(self):
        with pytest.raises(ValueError):
            Box([1.0], [0.0])

    def test_idempotence_fuzz(self, rng):
        for _ in range(2000):
            dim = int(rng.integers(1, 5))
            lo = rng.normal(size=dim) * 5
            hi = lo + rng.uniform(0.0, 10.0, size=dim)
            box = Box(lo, hi)
            x = rng.normal(size=dim) * 20
            once = project(box, x)
            twice = project(box, once.point)
            assert not twice.active
            np.testing.assert_array_equal(twice.point, once.point)
            np.testing.assert_array_equal(once.correction, once.point - x)

    def test_normal_cone_direction(self, rng):
        box = Box([-1.0, 0.01], [10.0, 2.0])
        for _ in range(500):
            x = rng.normal(size=2) * 15
            res = project(box, x)
            feasible = rng.uniform(box.lower, box.upper, size=(50, 2))
            # the applied displacement never points further into the box than
            # any feasible point: correction . (y - point) <= 0 componentwise
            for i in range(2):
                if res.correction[i] != 0.0:
                    assert np.all(res.correction[i] * (feasible[:, i] - res.point[i]) <= 1e-12)


class TestTwoTimescaleStep:
    def test_zero_drift_fixed_point(self):
        sched = poly(alpha0=0.5, beta0=0.5)
        box = Box([-10.0], [10.0])
        fast, slow, proj = two_timescale_step([1.0, 2.0], [0.3], [0.0, 0.0], [0.0], 1, sched, box)
        np.testing.assert_array_equal(fast, [1.0, 2.0])
        np.testing.assert_array_equal(slow, [0.3])
        assert not proj.active

    def test_fast_update_arithmetic(self):
        sched = poly(alpha0=0.5, beta0=0.5)
        fast, _, _ = two_timescale_step([1.0], [0.0], [2.0], [0.0], 1, sched, Box([-1.0], [1.0]))
        assert fast[0] == 2.0

    def test_interior_slow_update_unconstrained(self):
        sched = poly(alpha0=0.5, beta0=0.01)
        _, slow, proj = two_timescale_step([0.0], [0.5], [0.0], [1.0], 5, sched, Box([0.0], [1.0]))
        assert proj.correction[0] == 0.0
        assert slow[0] == pytest.approx(0.5 + sched.beta_at(5), rel=1e-15)

    def test_deterministic(self):
        sched = polylog()
        args = ([0.1, 0.2], [0.7], [1.0, -1.0], [0.5], 3, sched, Box([0.0], [1.0]))
        first = two_timescale_step(*args)
        second = two_timescale_step(*args)
        np.testing.assert_array_equal(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_drift_aborts(self, bad):
        sched = poly()
        with pytest.raises(TrajectoryAborted) as err:
            two_timescale_step([0.0], [0.5], [bad], [0.0], 2, sched, Box([0.0], [1.0]))
        assert err.value.iteration == 2
        with pytest.raises(TrajectoryAborted):
            two_timescale_step([0.0], [0.5], [0.0], [bad], 2, sched, Box([0.0], [1.0]))
