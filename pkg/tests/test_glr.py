import numpy as np
import pytest

from nmts import streams
from nmts.errors import GlrSingularityError
from nmts.glr import (
    ModelDerivatives,
    batch_estimates,
    glr_density_grad_sample,
    glr_density_sample,
    glr_sample,
    psi,
)
from nmts.models import get_model

LOCATION = get_model("location")
LINLAT = get_model("linear-latent")


class TestPsi:
    def test_location_closed_form(self):
        assert psi(LOCATION.derivatives(), [0.5], [0.0]) == pytest.approx(-0.5, abs=1e-15)

    def test_linear_latent_closed_form(self):
        assert psi(LINLAT.derivatives(), [0.3, -1.2], [1.0]) == pytest.approx(-0.3, abs=1e-15)

    def test_unit_slope_collapse(self, rng):
        # with dg/dx1 = 1 and no curvature, psi reduces to dlogf/dx1
        for _ in range(50):
            x = rng.normal(size=2)
            th = rng.uniform(0.5, 2.0, size=1)
            derivs = LINLAT.derivatives()
            assert psi(derivs, x, th) == pytest.approx(derivs.dlogf_dx1(x, th), abs=1e-15)

    def test_zero_slope_raises(self):
        derivs = ModelDerivatives(
            g=lambda x, th: 0.0,
            dg_dx1=lambda x, th: 0.0,
            d2g_dx1x1=lambda x, th: 0.0,
            dg_dtheta=lambda x, th: np.array([1.0]),
            d2g_dtheta_dx1=lambda x, th: np.array([0.0]),
            dlogf_dx1=lambda x, th: 0.0,
            dlogf_dtheta=lambda x, th: np.array([0.0]),
            dpsi_dx1=lambda x, th: 0.0,
            dpsi_dtheta=lambda x, th: np.array([0.0]),
        )
        with pytest.raises(GlrSingularityError):
            psi(derivs, [0.0], [0.0])


class TestDensitySample:
    def test_inside_indicator(self):
        assert glr_density_sample(LOCATION.derivatives(), [0.5], 1.0, [0.0]) == pytest.approx(-0.5)

    def test_outside_indicator(self):
        assert glr_density_sample(LOCATION.derivatives(), [1.5], 1.0, [0.0]) == 0.0

    def test_monte_carlo_mean_matches_density(self):
        # oracle: the analytic normal density at (theta, y) = (0.3, 1.0)
        rng = streams.make_generator(42)
        x = LOCATION.latent_sample(rng, 10**6)
        inside = LOCATION.sim_values(x, 0.3) <= 1.0
        samples = np.where(inside, LOCATION.density_payoff(x, 0.3), 0.0)
        target = float(LOCATION.density(1.0, 0.3))
        assert target == pytest.approx(0.3122539333667612, rel=1e-12)
        se = samples.std(ddof=1) / np.sqrt(len(samples))
        assert abs(samples.mean() - target) < 3 * se


class TestDensityGradSample:
    def test_location_value(self):
        out = glr_density_grad_sample(LOCATION.derivatives(), [0.5], 1.0, [0.0])
        assert out.shape == (1,)
        assert out[0] == pytest.approx(0.75, abs=1e-15)

    def test_linear_latent_value(self):
        out = glr_density_grad_sample(LINLAT.derivatives(), [0.3, -1.2], 0.0, [1.0])
        assert out[0] == pytest.approx(-1.092, abs=1e-12)

    def test_indicator_zero_gives_zero_vector(self):
        out = glr_density_grad_sample(LINLAT.derivatives(), [5.0, 5.0], 0.0, [1.0])
        np.testing.assert_array_equal(out, [0.0])

    def test_weight_readings_differ(self):
        # the two readings of the braced-term weight disagree whenever
        # dg/dtheta != dg/dx1; for this model they are x2 and 1
        derivs = LINLAT.derivatives()
        default = glr_density_grad_sample(derivs, [0.3, -1.2], 0.0, [1.0])
        printed = glr_density_grad_sample(derivs, [0.3, -1.2], 0.0, [1.0], grad_weight="dg_dx1")
        assert default[0] == pytest.approx(-1.092)
        assert printed[0] == pytest.approx(0.91)

    def test_default_reading_unbiased_alternative_not(self):
        # Monte Carlo check that only the dg/dtheta weighting reproduces the
        # analytic derivative of the output density
        rng = streams.make_generator(43)
        n = 200_000
        x = LINLAT.latent_sample(rng, n)
        y, th = 0.5, 1.0
        inside = LINLAT.sim_values(x, th) <= y
        target = float(LINLAT.density_grad(y, th))

        default = np.where(inside, x[:, 1] * (1.0 - x[:, 0] ** 2), 0.0)
        se = default.std(ddof=1) / np.sqrt(n)
        assert abs(default.mean() - target) < 4 * se

        printed = np.where(inside, 1.0 - x[:, 0] ** 2, 0.0)
        se_p = printed.std(ddof=1) / np.sqrt(n)
        assert abs(printed.mean() - target) > 10 * se_p

    def test_bad_weight_name(self):
        with pytest.raises(ValueError):
            glr_density_grad_sample(LINLAT.derivatives(), [0.0, 0.0], 0.0, [1.0], grad_weight="nope")


class TestClosedFormAgreement:
    @pytest.mark.parametrize("model", [LOCATION, LINLAT])
    def test_generic_matches_vectorized_payoffs(self, model, rng):
        derivs = model.derivatives()
        n = 10_000
        x = model.latent_sample(np.random.default_rng(5), n)
        ys = rng.normal(scale=2.0, size=n)
        ths = rng.uniform(0.5, 2.0, size=n)
        for i in range(n):
            th = np.array([ths[i]])
            inside = model.sim_values(x[i : i + 1], th) <= ys[i]
            closed_g2 = float(model.density_payoff(x[i : i + 1], th)[0]) if inside[0] else 0.0
            closed_g1 = model.density_grad_payoff(x[i : i + 1], th)[0] if inside[0] else np.zeros(1)
            sample = glr_sample(derivs, x[i], ys[i], th)
            assert abs(sample.g2 - closed_g2) <= 1e-12
            assert abs(sample.g1[0] - closed_g1[0]) <= 1e-12


class TestBatchEstimates:
    def test_single_draw_single_observation(self):
        seed = 99
        est = batch_estimates(LINLAT, streams.make_generator(seed), 1, [0.4], [1.0])
        x = LINLAT.latent_sample(streams.make_generator(seed), 1)
        sample = glr_sample(LINLAT.derivatives(), x[0], 0.4, [1.0])
        assert est.g2_mean[0] == pytest.approx(sample.g2, abs=1e-15)
        assert est.g1_mean[0, 0] == pytest.approx(sample.g1[0], abs=1e-15)
        assert est.n_inner == 1

    def test_matches_naive_average(self, rng):
        # oracle: direct per-observation averaging without the binning trick
        seed = 1234
        y = rng.normal(scale=1.5, size=17)
        est = batch_estimates(LINLAT, streams.make_generator(seed), 500, y, [0.9])
        x = LINLAT.latent_sample(streams.make_generator(seed), 500)
        s = LINLAT.sim_values(x, 0.9)
        w2 = LINLAT.density_payoff(x, 0.9)
        w1 = LINLAT.density_grad_payoff(x, 0.9)[:, 0]
        for t, yt in enumerate(y):
            inside = s <= yt
            assert est.g2_mean[t] == pytest.approx(np.where(inside, w2, 0).mean(), rel=1e-12, abs=1e-15)
            assert est.g1_mean[t, 0] == pytest.approx(np.where(inside, w1, 0).mean(), rel=1e-12, abs=1e-15)

    def test_mean_over_batches_matches_density(self):
        y = np.array([-0.5, 0.2, 1.0])
        total = np.zeros(3)
        reps = 200
        for r in range(reps):
            est = batch_estimates(LOCATION, streams.make_generator(7, r), 5000, y, [0.3])
            total += est.g2_mean
        mean = total / reps
        target = LOCATION.density(y, 0.3)
        assert np.max(np.abs(mean - target)) < 4 * np.sqrt(1.0 / (reps * 5000))

    def test_variance_scales_inversely_with_batch_size(self):
        y = np.array([0.5])
        def batch_var(n_inner, reps=300, tag=0):
            vals = [
                batch_estimates(LINLAT, streams.make_generator(11, tag, r), n_inner, y, [1.0]).g2_mean[0]
                for r in range(reps)
            ]
            return np.var(vals, ddof=1)

        ratio = batch_var(100, tag=1) / batch_var(10_000, tag=2)
        assert 60 < ratio < 160

    def test_indicator_support(self):
        # an observation below every simulated value receives exactly zero
        seed = 3
        x = LINLAT.latent_sample(streams.make_generator(seed), 200)
        s = LINLAT.sim_values(x, 1.0)
        y = np.array([s.min() - 1.0, s.min() - 0.5])
        est = batch_estimates(LINLAT, streams.make_generator(seed), 200, y, [1.0])
        np.testing.assert_array_equal(est.g2_mean, [0.0, 0.0])
        np.testing.assert_array_equal(est.g1_mean, np.zeros((2, 1)))

    def test_second_moments_stable_over_domain(self):
        for model, grid in ((LINLAT, [0.5, 1.0, 2.0]), (LOCATION, [-1.0, 0.3, 1.0])):
            moments = []
            for th in grid:
                x = model.latent_sample(streams.make_generator(21), 100_000)
                inside = model.sim_values(x, th) <= 1.0
                g2 = np.where(inside, model.density_payoff(x, th), 0.0)
                g1 = np.where(inside, model.density_grad_payoff(x, th)[:, 0], 0.0)
                moments.append((np.mean(g1**2), np.mean(g2**2)))
            arr = np.array(moments)
            assert np.all(np.isfinite(arr))
            assert arr.max() < 20.0

    def test_invalid_inner_count(self):
        with pytest.raises(ValueError):
            batch_estimates(LOCATION, streams.make_generator(1), 0, [0.0], [0.0])

    def test_non_finite_payoff_raises(self):
        class BrokenModel:
            n_latent = 1

            def latent_sample(self, rng, n):
                return rng.standard_normal((n, 1))

            def sim_values(self, x, theta):
                return x[:, 0]

            def density_payoff(self, x, theta):
                out = -x[:, 0]
                out[0] = np.inf
                return out

            def density_grad_payoff(self, x, theta):
                return np.zeros((len(x), 1))

        with pytest.raises(GlrSingularityError):
            batch_estimates(BrokenModel(), streams.make_generator(1), 10, [0.0], [0.0])
