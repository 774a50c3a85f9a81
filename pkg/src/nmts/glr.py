"""Single-run unbiased estimators of an intractable output density and its
parameter gradient.

For a simulator ``Y = g(X; theta)`` with latent density ``f``, the density of
the output at an observed value ``y`` and its theta-gradient are estimated
from a single latent draw ``x`` by

    G2(x, y, theta) = 1{g(x;theta) <= y} * psi(x;theta)
    G1(x, y, theta) = 1{g(x;theta) <= y} * (d log f/d theta + d psi/d theta
                        - (dg/dx1)^(-1) [ d^2 g/(d theta d x1)
                          + W * { d psi/dx1 + psi * (d log f/dx1
                                  - (d^2 g/dx1^2)(dg/dx1)^(-1)) } ])

with

    psi(x;theta) = (dg/dx1)^(-1) (d log f/dx1 - (d^2 g/dx1^2)(dg/dx1)^(-1)),

where x1 is the first latent coordinate and the weight ``W`` on the braced
term is ``dg/dtheta`` by default.  Some statements of the gradient estimator
print ``dg/dx1`` in that position instead; that reading is dimensionally
inconsistent for vector-valued theta and fails unbiasedness on the bundled
models, but it is kept available behind ``grad_weight="dg_dx1"`` so the
discrepancy stays observable (see the unit tests).

Both estimators are unbiased: E[G2] = p(y;theta) and E[G1] = grad_theta
p(y;theta).  Ratio-free drivers consume their batch means through
:func:`batch_estimates`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import GlrSingularityError

GRAD_WEIGHTS = ("dg_dtheta", "dg_dx1")


@dataclass(frozen=True)
class ModelDerivatives:
    """Partial-derivative evaluators a simulator must supply.

    Every callable takes ``(x, theta)`` with ``x`` a latent point of shape
    ``(n_latent,)`` and ``theta`` of shape ``(d,)``.  Scalar-valued entries
    return floats; theta-derivatives return arrays of shape ``(d,)``.
    ``dg_dx1`` must be nonzero almost everywhere on the sampling support.
    """

    g: Callable[[np.ndarray, np.ndarray], float]
    dg_dx1: Callable[[np.ndarray, np.ndarray], float]
    d2g_dx1x1: Callable[[np.ndarray, np.ndarray], float]
    dg_dtheta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    d2g_dtheta_dx1: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dlogf_dx1: Callable[[np.ndarray, np.ndarray], float]
    dlogf_dtheta: Callable[[np.ndarray, np.ndarray], np.ndarray]
    dpsi_dx1: Callable[[np.ndarray, np.ndarray], float]
    dpsi_dtheta: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GlrSample:
    """One latent draw's pair of estimates: gradient vector and density scalar."""

    g1: np.ndarray
    g2: float


@dataclass(frozen=True)
class BatchEstimate:
    """Per-observation batch means of the two estimators.

    ``g1_mean`` has shape (T, d), ``g2_mean`` shape (T,).  All T observations
    are averaged against the same ``n_inner`` latent draws.
    """

    g1_mean: np.ndarray
    g2_mean: np.ndarray
    n_inner: int


def _slope(model: ModelDerivatives, x: np.ndarray, theta: np.ndarray) -> float:
    v = model.dg_dx1(x, theta)
    if v == 0.0 or not np.isfinite(v):
        raise GlrSingularityError(f"dg_dx1 is {v} at x={x}, theta={theta}")
    return v


def psi(model: ModelDerivatives, x: np.ndarray, theta: np.ndarray) -> float:
    """Density-estimator weight psi(x;theta)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    gx = _slope(model, x, theta)
    return (model.dlogf_dx1(x, theta) - model.d2g_dx1x1(x, theta) / gx) / gx


def glr_density_sample(model: ModelDerivatives, x: np.ndarray, y: float, theta: np.ndarray) -> float:
    """Single-run estimate of p(y;theta): indicator times psi."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if model.g(x, theta) > y:
        return 0.0
    return psi(model, x, theta)


def glr_density_grad_sample(
    model: ModelDerivatives,
    x: np.ndarray,
    y: float,
    theta: np.ndarray,
    grad_weight: str = "dg_dtheta",
) -> np.ndarray:
    """Single-run estimate of grad_theta p(y;theta), shape (d,).

    ``grad_weight`` selects the factor multiplying the braced psi-derivative
    term; leave at the default unless deliberately probing the alternative
    reading.
    """
    if grad_weight not in GRAD_WEIGHTS:
        raise ValueError(f"grad_weight must be one of {GRAD_WEIGHTS}, got {grad_weight!r}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    d = theta.shape[0]
    if model.g(x, theta) > y:
        return np.zeros(d)
    gx = _slope(model, x, theta)
    psi_val = (model.dlogf_dx1(x, theta) - model.d2g_dx1x1(x, theta) / gx) / gx
    braced = model.dpsi_dx1(x, theta) + psi_val * (
        model.dlogf_dx1(x, theta) - model.d2g_dx1x1(x, theta) / gx
    )
    if grad_weight == "dg_dtheta":
        weight = np.atleast_1d(np.asarray(model.dg_dtheta(x, theta), dtype=float))
    else:
        weight = gx
    bracket = np.atleast_1d(np.asarray(model.d2g_dtheta_dx1(x, theta), dtype=float)) + weight * braced
    out = (
        np.atleast_1d(np.asarray(model.dlogf_dtheta(x, theta), dtype=float))
        + np.atleast_1d(np.asarray(model.dpsi_dtheta(x, theta), dtype=float))
        - bracket / gx
    )
    if not np.all(np.isfinite(out)):
        raise GlrSingularityError(f"non-finite gradient sample at x={x}, theta={theta}")
    return out


def glr_sample(model: ModelDerivatives, x: np.ndarray, y: float, theta: np.ndarray) -> GlrSample:
    """Both estimators for one latent draw."""
    return GlrSample(
        g1=glr_density_grad_sample(model, x, y, theta),
        g2=glr_density_sample(model, x, y, theta),
    )


def batch_estimates(model, rng: np.random.Generator, n_inner: int, observations, theta) -> BatchEstimate:
    """Batch means of G1 and G2 for every observation, sharing one latent batch.

    ``model`` is a bundled simulator exposing the vectorized closed forms
    ``latent_sample(rng, n)``, ``sim_values(x, theta)``, ``density_payoff(x,
    theta)`` and ``density_grad_payoff(x, theta)`` (see ``nmts.models``).  The
    same ``n_inner`` draws are reused across all T observations, so only one
    pass over the latent batch is needed: samples are binned against the
    sorted observations and prefix sums replace the T-fold indicator scan.
    The result is the exact arithmetic mean per observation, independent of
    the binning, up to summation order.

    Parameters
    ----------
    rng : np.random.Generator
        Stream consumed by exactly ``n_inner * model.n_latent`` standard
        normal draws.
    """
    if n_inner < 1:
        raise ValueError(f"n_inner must be >= 1, got {n_inner}")
    y = np.atleast_1d(np.asarray(observations, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    t_obs = y.shape[0]

    x = model.latent_sample(rng, n_inner)
    s = model.sim_values(x, theta)
    w2 = model.density_payoff(x, theta)
    w1 = model.density_grad_payoff(x, theta)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(w2)) and np.all(np.isfinite(w1))):
        raise GlrSingularityError(f"non-finite estimator payoff at theta={theta}")

    order = np.argsort(y, kind="stable")
    y_sorted = y[order]
    # sample i contributes to every observation with y >= s_i (ties included)
    first_bin = np.searchsorted(y_sorted, s, side="left")

    g2_sorted = np.cumsum(np.bincount(first_bin, weights=w2, minlength=t_obs + 1)[:t_obs]) / n_inner
    d = w1.shape[1]
    g1_sorted = np.empty((t_obs, d))
    for j in range(d):
        g1_sorted[:, j] = (
            np.cumsum(np.bincount(first_bin, weights=w1[:, j], minlength=t_obs + 1)[:t_obs]) / n_inner
        )

    g2_mean = np.empty(t_obs)
    g2_mean[order] = g2_sorted
    g1_mean = np.empty((t_obs, d))
    g1_mean[order] = g1_sorted
    return BatchEstimate(g1_mean=g1_mean, g2_mean=g2_mean, n_inner=n_inner)
