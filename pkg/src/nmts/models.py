"""Bundled stochastic simulators with analytic oracles.

Two scalar-parameter models are included; both admit exact densities, scores,
and point/posterior estimates, which makes them the test bed for everything
the ratio-free drivers claim.

``LinearLatentModel``
    Y = X1 + theta * X2 with X1, X2 iid standard normal.  Output density is
    N(0, 1 + theta^2); the maximizing theta has the closed form
    sqrt(mean(Y^2) - 1).

``LocationModel``
    Y = X + theta with X standard normal.  Output density is phi(y - theta);
    with a standard normal prior on theta the posterior after n observations
    is N(n/(1+n) * ybar, 1/(1+n)).

Each model also supplies the two ingredient sets the estimator layer needs:
pointwise partial derivatives (``derivatives()``, feeding the generic
single-run formulas) and vectorized closed-form payoffs (``density_payoff``,
``density_grad_payoff``, feeding ``glr.batch_estimates``).  The two routes are
held to agree by tests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .errors import DegenerateDataError
from .glr import ModelDerivatives

_SQRT2PI = math.sqrt(2.0 * math.pi)


def _norm_pdf(z):
    return np.exp(-0.5 * np.square(z)) / _SQRT2PI


@dataclass(frozen=True)
class ObservationSet:
    """Observed outputs with their generating parameter and seed.

    Regenerating with the same seed reproduces ``values`` bit-exactly.
    """

    values: np.ndarray
    theta_true: float
    seed: int

    def __post_init__(self):
        vals = np.atleast_1d(np.asarray(self.values, dtype=float))
        if vals.ndim != 1 or vals.shape[0] < 1:
            raise ValueError("observations must be a nonempty 1-d array")
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path) -> None:
        """One value per line, header row carrying theta_true and seed."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow([f"value;theta_true={self.theta_true!r};seed={self.seed}"])
            for v in self.values:
                writer.writerow([repr(float(v))])

    @classmethod
    def from_csv(cls, path) -> "ObservationSet":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        header = rows[0][0].split(";")
        theta_true = float(header[1].split("=", 1)[1])
        seed = int(header[2].split("=", 1)[1])
        values = np.array([float(r[0]) for r in rows[1:]])
        return cls(values=values, theta_true=theta_true, seed=seed)


class LocationModel:
    """Shift model Y = X + theta, X ~ N(0,1)."""

    name = "location"
    dim_theta = 1
    n_latent = 1

    def latent_sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, 1))

    def sim_values(self, x: np.ndarray, theta) -> np.ndarray:
        return x[:, 0] + _scalar(theta)

    def density_payoff(self, x: np.ndarray, theta) -> np.ndarray:
        # psi(x) reduces to -x for this model
        return -x[:, 0]

    def density_grad_payoff(self, x: np.ndarray, theta) -> np.ndarray:
        return (1.0 - np.square(x[:, 0]))[:, None]

    def density(self, y, theta):
        return _norm_pdf(np.asarray(y, dtype=float) - _scalar(theta))

    def density_grad(self, y, theta):
        z = np.asarray(y, dtype=float) - _scalar(theta)
        return z * _norm_pdf(z)

    def score(self, y, theta):
        return np.asarray(y, dtype=float) - _scalar(theta)

    def mle(self, values: np.ndarray) -> float:
        return float(np.mean(values))

    def derivatives(self) -> ModelDerivatives:
        return ModelDerivatives(
            g=lambda x, th: float(x[0] + th[0]),
            dg_dx1=lambda x, th: 1.0,
            d2g_dx1x1=lambda x, th: 0.0,
            dg_dtheta=lambda x, th: np.array([1.0]),
            d2g_dtheta_dx1=lambda x, th: np.array([0.0]),
            dlogf_dx1=lambda x, th: float(-x[0]),
            dlogf_dtheta=lambda x, th: np.array([0.0]),
            dpsi_dx1=lambda x, th: -1.0,
            dpsi_dtheta=lambda x, th: np.array([0.0]),
        )


class LinearLatentModel:
    """Two-latent model Y = X1 + theta * X2, X1, X2 iid N(0,1)."""

    name = "linear-latent"
    dim_theta = 1
    n_latent = 2

    def latent_sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, 2))

    def sim_values(self, x: np.ndarray, theta) -> np.ndarray:
        return x[:, 0] + _scalar(theta) * x[:, 1]

    def density_payoff(self, x: np.ndarray, theta) -> np.ndarray:
        return -x[:, 0]

    def density_grad_payoff(self, x: np.ndarray, theta) -> np.ndarray:
        return (x[:, 1] * (1.0 - np.square(x[:, 0])))[:, None]

    def density(self, y, theta):
        s2 = 1.0 + _scalar(theta) ** 2
        y = np.asarray(y, dtype=float)
        return _norm_pdf(y / math.sqrt(s2)) / math.sqrt(s2)

    def density_grad(self, y, theta):
        th = _scalar(theta)
        s2 = 1.0 + th * th
        y = np.asarray(y, dtype=float)
        return self.density(y, th) * th * (np.square(y) - s2) / (s2 * s2)

    def score(self, y, theta):
        th = _scalar(theta)
        s2 = 1.0 + th * th
        return th * (np.square(np.asarray(y, dtype=float)) - s2) / (s2 * s2)

    def mle(self, values: np.ndarray) -> float:
        m2 = float(np.mean(np.square(values)))
        if m2 <= 1.0:
            raise DegenerateDataError(
                f"mean squared observation {m2:.6f} <= 1; closed-form estimate undefined"
            )
        return math.sqrt(m2 - 1.0)

    def derivatives(self) -> ModelDerivatives:
        return ModelDerivatives(
            g=lambda x, th: float(x[0] + th[0] * x[1]),
            dg_dx1=lambda x, th: 1.0,
            d2g_dx1x1=lambda x, th: 0.0,
            dg_dtheta=lambda x, th: np.array([float(x[1])]),
            d2g_dtheta_dx1=lambda x, th: np.array([0.0]),
            dlogf_dx1=lambda x, th: float(-x[0]),
            dlogf_dtheta=lambda x, th: np.array([0.0]),
            dpsi_dx1=lambda x, th: -1.0,
            dpsi_dtheta=lambda x, th: np.array([0.0]),
        )


MODELS = {m.name: m for m in (LocationModel(), LinearLatentModel())}


def get_model(name: str):
    try:
        return MODELS[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; available: {sorted(MODELS)}") from None


def _scalar(theta) -> float:
    arr = np.atleast_1d(np.asarray(theta, dtype=float))
    return float(arr[0])


def simulate_observations(model, theta_true: float, t_obs: int, seed: int) -> ObservationSet:
    """Draw ``t_obs`` independent outputs at ``theta_true``."""
    if t_obs < 1:
        raise ValueError(f"t_obs must be >= 1, got {t_obs}")
    rng = streams.make_generator(streams.OBS, seed)
    x = model.latent_sample(rng, t_obs)
    values = model.sim_values(x, theta_true)
    return ObservationSet(values=values, theta_true=float(theta_true), seed=int(seed))


def analytic_density(model, y, theta):
    """Exact output density p(y; theta)."""
    return model.density(y, theta)


def analytic_density_grad(model, y, theta):
    """Exact d/d theta of the output density."""
    return model.density_grad(y, theta)


def analytic_mle(model, observations) -> float:
    """Closed-form maximizer of the log-likelihood for the bundled models."""
    values = observations.values if isinstance(observations, ObservationSet) else np.asarray(observations, dtype=float)
    return model.mle(values)


def conjugate_posterior(observations) -> tuple[float, float]:
    """Posterior (mean, variance) of the location parameter under a standard
    normal prior: N(n/(1+n) * ybar, 1/(1+n))."""
    values = observations.values if isinstance(observations, ObservationSet) else np.asarray(observations, dtype=float)
    n = values.shape[0]
    if n < 1:
        raise ValueError("need at least one observation")
    ybar = float(np.mean(values))
    return n / (1.0 + n) * ybar, 1.0 / (1.0 + n)


def prior_logpdf_grad(theta) -> float:
    """Score of the standard normal prior: -theta."""
    return -_scalar(theta)
