"""Posterior-density estimation via a reparameterized Gaussian variational
family, frozen outer samples, and the ratio-free coupled recursion.

The evidence lower bound L(lambda) = E_q[log p(y|theta) + log p(theta) -
log q_lambda(theta)] is maximized over lambda = (mu, sigma) with theta(u;
lambda) = mu + sigma*u, u ~ N(0,1).  Freezing M outer draws u_1..u_M turns the
objective into the surrogate

    Lhat_M(lambda) = (1/M) sum_m [ log p(y | theta(u_m;lambda))
                                   + log p(theta(u_m;lambda))
                                   - log q_lambda(theta(u_m;lambda)) ],

whose maximizer lambda_bar_M is the run's limit point.  Each outer sample m
carries a fast tracker block D[m] (shape (T, d)) estimating the likelihood
score at theta(u_m; lambda_k); the slow iterate ascends the assembled drift

    s = (1/M) sum_m  J_m ( sum_t D[m,t] + prior_score_m - variational_score_m )

with J_m = (1, u_m) the reparameterization Jacobian, projected onto the
feasible box.  The single-timescale baseline replaces sum_t D[m,t] by the
plug-in ratio sum_t g1[m,t]/g2[m,t].

Only the location model ships analytic likelihood scores, so the surrogate
oracles (and hence the run metrics) require it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import glr, streams
from .core import Box, StepSchedule, project, two_timescale_step
from .errors import ConfigError, TrajectoryAborted
from .models import ObservationSet, conjugate_posterior, get_model, prior_logpdf_grad
from .records import RunRecord, default_checkpoints

_LOG_SQRT2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianVariational:
    """Variational family member N(mu, sigma^2); lambda = (mu, sigma)."""

    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma])


@dataclass(frozen=True)
class OuterSamples:
    """Reparameterization draws fixed before the iteration starts."""

    u: np.ndarray
    seed: int

    def __post_init__(self):
        u = np.atleast_1d(np.asarray(self.u, dtype=float))
        object.__setattr__(self, "u", u)
        # freeze-once contract: no mutation across the run
        self.u.setflags(write=False)

    def __len__(self) -> int:
        return self.u.shape[0]


def sample_outer(m_outer: int, seed: int) -> OuterSamples:
    """Draw ``m_outer`` frozen outer samples from the OUTER stream of ``seed``."""
    if m_outer < 1:
        raise ValueError(f"m_outer must be >= 1, got {m_outer}")
    rng = streams.make_generator(streams.OUTER, seed)
    return OuterSamples(u=rng.standard_normal(m_outer), seed=int(seed))


@dataclass(frozen=True)
class PdeState:
    """Slow iterate lambda, per-outer-sample tracker blocks, schedule index."""

    lam: np.ndarray
    d_blocks: np.ndarray
    k: int
    proj_correction: np.ndarray | None = None


@dataclass(frozen=True)
class SlowDriftTerms:
    """Per-block Jacobians and scores plus the assembled slow drift.

    ``a`` has shape (M, l, d), ``b`` and ``c`` shape (M, d); ``s`` is the
    length-l block-sum assembly (1/M) sum_m a[m] @ (sum_t D[m,t] + b[m] - c[m])
    evaluated with the tracker blocks passed in (never a materialized dense
    selector matrix).
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class PdeConfig:
    """Inputs of one posterior-estimation run."""

    model: str
    observations: ObservationSet
    schedule: StepSchedule
    box: Box
    lambda0: np.ndarray
    m_outer: int
    n_inner: int
    iterations: int
    seed: int
    d0: np.ndarray | None = None

    def __post_init__(self):
        lam0 = np.atleast_1d(np.asarray(self.lambda0, dtype=float))
        object.__setattr__(self, "lambda0", lam0)
        mdl = get_model(self.model)
        if self.model != "location":
            raise ConfigError("posterior-estimation metrics require the location model")
        if lam0.shape != (2,):
            raise ConfigError(f"lambda0 must have shape (2,), got {lam0.shape}")
        if self.box.dim != 2:
            raise ConfigError(f"variational box must be 2-dimensional, got {self.box.dim}")
        if not self.box.has_interior():
            raise ConfigError("variational box needs a nonempty interior")
        if not self.box.contains(lam0):
            raise ConfigError(f"lambda0={lam0} lies outside the feasible box")
        if not self.box.lower[1] > 0:
            raise ConfigError("sigma lower bound must be positive")
        if self.m_outer < 1:
            raise ConfigError(f"m_outer must be >= 1, got {self.m_outer}")
        if self.n_inner < 1:
            raise ConfigError(f"n_inner must be >= 1, got {self.n_inner}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.d0 is not None:
            d0 = np.asarray(self.d0, dtype=float)
            want = (self.m_outer, len(self.observations), mdl.dim_theta)
            if d0.shape != want:
                raise ConfigError(f"d0 shape {d0.shape} != (M, T, d) = {want}")
            object.__setattr__(self, "d0", d0)

    @property
    def t_obs(self) -> int:
        return len(self.observations)


def reparam(u: float, lam) -> tuple[float, np.ndarray]:
    """theta(u; lambda) = mu + sigma*u and its Jacobian (1, u)."""
    lam = np.asarray(lam, dtype=float)
    return float(lam[0] + lam[1] * u), np.array([1.0, float(u)])


def variational_score(theta: float, lam) -> float:
    """d/d theta of log q_lambda at theta: -(theta - mu)/sigma^2."""
    lam = np.asarray(lam, dtype=float)
    if not lam[1] > 0:
        raise ValueError(f"sigma must be positive, got {lam[1]}")
    return -(float(theta) - lam[0]) / (lam[1] * lam[1])


def init_state(config: PdeConfig) -> PdeState:
    mdl = get_model(config.model)
    d0 = (
        config.d0
        if config.d0 is not None
        else np.zeros((config.m_outer, config.t_obs, mdl.dim_theta))
    )
    return PdeState(lam=config.lambda0.copy(), d_blocks=d0.copy(), k=config.schedule.start_index)


def assemble_slow_drift(lam: np.ndarray, outer: OuterSamples, d_blocks: np.ndarray) -> SlowDriftTerms:
    """Block-sum assembly of the slow drift from the given tracker blocks."""
    m_outer, _, d = d_blocks.shape
    a = np.empty((m_outer, 2, d))
    b = np.empty((m_outer, d))
    c = np.empty((m_outer, d))
    s = np.zeros(2)
    for m in range(m_outer):
        theta_m, jac = reparam(outer.u[m], lam)
        a[m] = jac[:, None]
        b[m] = prior_logpdf_grad(theta_m)
        c[m] = variational_score(theta_m, lam)
        # sequential reductions keep the compiled path bit-compatible
        block = np.cumsum(d_blocks[m], axis=0)[-1] + b[m] - c[m]
        s = s + a[m] @ block
    return SlowDriftTerms(a=a, b=b, c=c, s=s / m_outer)


def nmts_pde_update(state: PdeState, ests: list[glr.BatchEstimate], outer: OuterSamples, config: PdeConfig) -> PdeState:
    """Apply one coupled update from per-block batch estimates.

    The slow drift is assembled from the tracker blocks before their fast
    update, pairing the slow iterate with the pre-update tracker.
    """
    d = state.d_blocks
    terms = assemble_slow_drift(state.lam, outer, d)
    fast_drift = np.empty_like(d)
    for m in range(len(outer)):
        fast_drift[m] = ests[m].g1_mean - ests[m].g2_mean[:, None] * d[m]
    fast_next, slow_next, proj = two_timescale_step(
        d.ravel(), state.lam, fast_drift.ravel(), terms.s, state.k, config.schedule, config.box
    )
    return PdeState(
        lam=slow_next,
        d_blocks=fast_next.reshape(d.shape),
        k=state.k + 1,
        proj_correction=proj.correction,
    )


def sts_pde_update(state: PdeState, ests: list[glr.BatchEstimate], outer: OuterSamples, config: PdeConfig) -> PdeState:
    """Apply one plug-in ratio update from per-block batch estimates."""
    s = np.zeros(2)
    for m in range(len(outer)):
        theta_m, jac = reparam(outer.u[m], state.lam)
        ratio_sum = np.zeros(ests[m].g1_mean.shape[1])
        for t in range(config.t_obs):
            g2 = ests[m].g2_mean[t]
            if g2 == 0.0:
                if np.any(ests[m].g1_mean[t] != 0.0):
                    raise TrajectoryAborted(
                        state.k, f"zero density estimate with nonzero gradient at observation {t}", block=m
                    )
                continue
            ratio_sum = ratio_sum + ests[m].g1_mean[t] / g2
        block = ratio_sum + prior_logpdf_grad(theta_m) - variational_score(theta_m, state.lam)
        s = s + jac[:, None] @ block
    s = s / len(outer)
    if not np.all(np.isfinite(s)):
        raise TrajectoryAborted(state.k, "non-finite ratio drift")
    _, slow_next, proj = two_timescale_step(
        state.d_blocks.ravel(),
        state.lam,
        np.zeros(state.d_blocks.size),
        s,
        state.k,
        config.schedule,
        config.box,
    )
    return replace(state, lam=slow_next, k=state.k + 1, proj_correction=proj.correction)


def _draw_block_estimates(state: PdeState, outer: OuterSamples, config: PdeConfig, rng: np.random.Generator) -> list[glr.BatchEstimate]:
    model = get_model(config.model)
    ests = []
    for m in range(len(outer)):
        theta_m, _ = reparam(outer.u[m], state.lam)
        ests.append(
            glr.batch_estimates(model, rng, config.n_inner, config.observations.values, theta_m)
        )
    return ests


def nmts_pde_step(state: PdeState, outer: OuterSamples, config: PdeConfig, rng: np.random.Generator) -> PdeState:
    """Draw fresh inner batches for every block, then apply the coupled update."""
    return nmts_pde_update(state, _draw_block_estimates(state, outer, config, rng), outer, config)


def sts_pde_step(state: PdeState, outer: OuterSamples, config: PdeConfig, rng: np.random.Generator) -> PdeState:
    return sts_pde_update(state, _draw_block_estimates(state, outer, config, rng), outer, config)


def elbo_saa(lam, outer: OuterSamples, observations) -> float:
    """Frozen-sample surrogate objective Lhat_M(lambda) for the location model."""
    lam = np.asarray(lam, dtype=float)
    y = observations.values if isinstance(observations, ObservationSet) else np.asarray(observations, dtype=float)
    mu, sigma = lam
    total = 0.0
    for u in outer.u:
        theta = mu + sigma * u
        loglik = float(np.sum(-0.5 * np.square(y - theta))) - len(y) * _LOG_SQRT2PI
        logprior = -0.5 * theta * theta - _LOG_SQRT2PI
        logq = -math.log(sigma) - 0.5 * u * u - _LOG_SQRT2PI
        total += loglik + logprior - logq
    return total / len(outer)


def elbo_grad_saa(lam, outer: OuterSamples, observations, path_only: bool = False) -> np.ndarray:
    """Gradient of the frozen-sample surrogate, using analytic likelihood scores.

    With ``path_only=True`` the direct d/d lambda of -log q_lambda(theta) at
    fixed theta is dropped, keeping only the term that flows through the
    reparameterization map.  The dropped term has mean zero over u, and the
    coupled recursion's assembled drift estimates exactly the path-only field,
    so tracking residuals are measured against it.  The default (total)
    gradient is the exact gradient of :func:`elbo_saa` and defines the
    surrogate optimum.
    """
    lam = np.asarray(lam, dtype=float)
    y = observations.values if isinstance(observations, ObservationSet) else np.asarray(observations, dtype=float)
    mu, sigma = lam
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    t_obs = y.shape[0]
    ysum = float(np.sum(y))
    grad = np.zeros(2)
    for u in outer.u:
        theta = mu + sigma * u
        bracket = (ysum - t_obs * theta) - theta + u / sigma
        grad += np.array([1.0, u]) * bracket
        if not path_only:
            grad += np.array([-u / sigma, (1.0 - u * u) / sigma])
    return grad / len(outer)


def surrogate_optimum(
    outer: OuterSamples,
    observations,
    box: Box,
    lambda0=(0.0, 1.0),
    tol: float = 1e-10,
    max_iter: int = 10**6,
) -> np.ndarray:
    """Maximize the frozen-sample surrogate by projected gradient ascent.

    Deterministic: backtracking (Armijo) line search on :func:`elbo_saa`,
    stopping when the unit-step projected-gradient residual
    ``|| Pi(lam + grad) - lam ||`` drops below ``tol``.  At an interior
    optimum this coincides with the gradient norm; on the boundary it is the
    correct stationarity measure (a plain gradient norm need not vanish
    there, e.g. the degenerate single-sample surrogate pushes sigma into the
    upper bound).
    """
    lam = project(box, np.asarray(lambda0, dtype=float)).point
    val = elbo_saa(lam, outer, observations)
    step = 1.0
    for _ in range(max_iter):
        grad = elbo_grad_saa(lam, outer, observations)
        residual = np.linalg.norm(project(box, lam + grad).point - lam)
        if residual < tol:
            return lam
        for _ in range(200):
            cand = project(box, lam + step * grad).point
            cand_val = elbo_saa(cand, outer, observations)
            if cand_val >= val + 1e-4 * float(grad @ (cand - lam)):
                break
            step *= 0.5
        lam, val = cand, cand_val
        step = min(step * 1.5, 1e3)
    raise RuntimeError(
        f"surrogate ascent did not reach residual {tol} within {max_iter} steps "
        f"(last residual {residual:.3e} at lambda={lam})"
    )


def run_pde(
    config: PdeConfig,
    variant: str,
    checkpoints: np.ndarray | None = None,
    engine: str = "jit",
) -> RunRecord:
    """Iterate ``config.iterations`` steps and record metrics at checkpoints.

    Recorded columns: ``mu``, ``sigma``, ``mean_abs_err`` (|mu - posterior
    mean|), ``var_abs_err`` (|sigma^2 - posterior variance|), ``sk_residual``
    (Euclidean distance between the assembled slow drift and the path-only
    surrogate gradient at the current state), ``max_block_residual`` (largest
    entrywise deviation of any tracker block from the analytic score stack at
    its block parameter), and ``proj_active``.  Tracker columns are NaN for
    the ratio baseline.
    """
    if variant not in ("nmts", "sts"):
        raise ValueError(f"variant must be 'nmts' or 'sts', got {variant!r}")
    if engine not in ("jit", "python"):
        raise ValueError(f"engine must be 'jit' or 'python', got {engine!r}")
    ck = default_checkpoints(config.iterations) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if ck.ndim != 1 or ck.shape[0] == 0 or np.any(np.diff(ck) <= 0) or ck[0] < 1 or ck[-1] > config.iterations:
        raise ValueError("checkpoints must be strictly increasing within [1, iterations]")

    post_mean, post_var = conjugate_posterior(config.observations)
    outer = sample_outer(config.m_outer, config.seed)
    rng = streams.make_generator(streams.INNER, config.seed)

    if engine == "jit":
        from ._kernels import run_pde_kernel

        mu_ck, sg_ck, sk_ck, block_ck, proj_ck, abort_iter = run_pde_kernel(config, variant, ck, rng, outer)
        abort = None if abort_iter < 0 else {"iteration": int(abort_iter), "reason": "non-finite update"}
        n_ok = int(np.searchsorted(ck, abort_iter)) if abort else len(ck)
    else:
        model = get_model(config.model)
        state = init_state(config)
        mu_ck = np.full(len(ck), np.nan)
        sg_ck = np.full(len(ck), np.nan)
        sk_ck = np.full(len(ck), np.nan)
        block_ck = np.full(len(ck), np.nan)
        proj_ck = np.full(len(ck), np.nan)
        abort = None
        n_ok = len(ck)
        ci = 0
        try:
            for j in range(1, config.iterations + 1):
                ests = _draw_block_estimates(state, outer, config, rng)
                if variant == "nmts":
                    state = nmts_pde_update(state, ests, outer, config)
                else:
                    state = sts_pde_update(state, ests, outer, config)
                if ci < len(ck) and j == ck[ci]:
                    mu_ck[ci] = state.lam[0]
                    sg_ck[ci] = state.lam[1]
                    if variant == "nmts":
                        terms = assemble_slow_drift(state.lam, outer, state.d_blocks)
                        oracle = elbo_grad_saa(state.lam, outer, config.observations, path_only=True)
                        sk_ck[ci] = float(np.linalg.norm(terms.s - oracle))
                        block_ck[ci] = _max_block_residual(model, state, outer, config)
                    proj_ck[ci] = 1.0 if np.any(state.proj_correction) else 0.0
                    ci += 1
        except TrajectoryAborted as exc:
            abort = {"iteration": exc.iteration, "reason": exc.reason}
            n_ok = ci

    record = RunRecord(
        kind="pde",
        variant=variant,
        model=config.model,
        seed=config.seed,
        ks=ck,
        columns={
            "mu": mu_ck,
            "sigma": sg_ck,
            "mean_abs_err": np.abs(mu_ck - post_mean),
            "var_abs_err": np.abs(np.square(sg_ck) - post_var),
            "sk_residual": sk_ck,
            "max_block_residual": block_ck,
            "proj_active": proj_ck,
        },
        meta=_meta(config, variant, engine),
        abort=abort,
    )
    if abort:
        record.truncate_to(n_ok)
    return record


def _max_block_residual(model, state: PdeState, outer: OuterSamples, config: PdeConfig) -> float:
    worst = 0.0
    for m in range(len(outer)):
        theta_m, _ = reparam(outer.u[m], state.lam)
        stack = np.asarray(model.score(config.observations.values, theta_m), dtype=float).reshape(-1, 1)
        worst = max(worst, float(np.max(np.abs(state.d_blocks[m] - stack))))
    return worst


def _meta(config: PdeConfig, variant: str, engine: str) -> dict:
    return {
        "kind": "pde",
        "variant": variant,
        "model": config.model,
        "schedule": (config.schedule.kind, config.schedule.alpha0, config.schedule.a,
                     config.schedule.beta0, config.schedule.b, config.schedule.start_index),
        "box": (tuple(config.box.lower), tuple(config.box.upper)),
        "lambda0": tuple(config.lambda0),
        "m_outer": config.m_outer,
        "n_inner": config.n_inner,
        "iterations": config.iterations,
        "t_obs": config.t_obs,
        "obs_seed": config.observations.seed,
        "obs_theta_true": config.observations.theta_true,
        "seed": config.seed,
    }
