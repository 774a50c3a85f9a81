"""Point-estimation drivers: the ratio-free coupled recursion and the
single-timescale ratio baseline.

Per iteration k, both variants draw one shared latent batch and form the
per-observation batch means g1[t] (gradient estimate, (T, d)) and g2[t]
(density estimate, (T,)).

Ratio-free (NMTS)
    D[t] <- D[t] + alpha_k * (g1[t] - g2[t] * D[t])        (fast tracker)
    theta <- Pi_Theta(theta + beta_k * sum_t D[t])          (slow iterate)

    The slow update consumes the tracker values from before the fast update,
    and the tracker converges to the per-observation score stack
    p'(Y_t;theta)/p(Y_t;theta) without ever dividing estimates.

Single-timescale (STS)
    theta <- Pi_Theta(theta + beta_k * sum_t g1[t]/g2[t])

    The plug-in ratio carries an O(1/sqrt(N)) bias and is numerically fragile
    when g2[t] is near zero.  An observation whose batch produced exactly zero
    for both estimators (no latent draw hit its indicator support, so there is
    no information about it this round) contributes zero; a genuinely
    non-finite drift still aborts the run.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import glr, streams
from .core import Box, StepSchedule, two_timescale_step
from .errors import ConfigError, TrajectoryAborted
from .models import ObservationSet, analytic_mle, get_model
from .records import RunRecord, default_checkpoints


@dataclass(frozen=True)
class MleConfig:
    """Inputs of one estimation run."""

    model: str
    observations: ObservationSet
    schedule: StepSchedule
    box: Box
    theta0: np.ndarray
    n_inner: int
    iterations: int
    seed: int
    d0: np.ndarray | None = None

    def __post_init__(self):
        theta0 = np.atleast_1d(np.asarray(self.theta0, dtype=float))
        object.__setattr__(self, "theta0", theta0)
        mdl = get_model(self.model)
        if theta0.shape[0] != mdl.dim_theta:
            raise ConfigError(f"theta0 has dimension {theta0.shape[0]}, model expects {mdl.dim_theta}")
        if self.box.dim != theta0.shape[0]:
            raise ConfigError(f"box dimension {self.box.dim} does not match theta0")
        if not self.box.contains(theta0):
            raise ConfigError(f"theta0={theta0} lies outside the feasible box")
        if self.n_inner < 1:
            raise ConfigError(f"n_inner must be >= 1, got {self.n_inner}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        t_obs = len(self.observations)
        if self.d0 is not None:
            d0 = np.asarray(self.d0, dtype=float)
            if d0.shape != (t_obs, theta0.shape[0]):
                raise ConfigError(f"d0 shape {d0.shape} != (T, d) = ({t_obs}, {theta0.shape[0]})")
            object.__setattr__(self, "d0", d0)

    @property
    def t_obs(self) -> int:
        return len(self.observations)

    @property
    def dim(self) -> int:
        return self.theta0.shape[0]


@dataclass(frozen=True)
class MleState:
    """Slow iterate, fast tracker stack, and the next schedule index.

    ``proj_correction`` echoes the displacement the last projection applied
    (diagnostic only; zero vector when the update stayed interior).
    """

    theta: np.ndarray
    d_tracker: np.ndarray
    k: int
    proj_correction: np.ndarray | None = None


def init_state(config: MleConfig) -> MleState:
    d0 = config.d0 if config.d0 is not None else np.zeros((config.t_obs, config.dim))
    return MleState(theta=config.theta0.copy(), d_tracker=d0.copy(), k=config.schedule.start_index)


def nmts_mle_update(state: MleState, est: glr.BatchEstimate, config: MleConfig) -> MleState:
    """Apply one coupled update from precomputed batch estimates."""
    d = state.d_tracker
    fast_drift = est.g1_mean - est.g2_mean[:, None] * d
    # sequential reduction keeps the compiled trajectory path bit-compatible
    slow_drift = np.cumsum(d, axis=0)[-1]
    fast_next, slow_next, proj = two_timescale_step(
        d.ravel(), state.theta, fast_drift.ravel(), slow_drift, state.k, config.schedule, config.box
    )
    return MleState(
        theta=slow_next,
        d_tracker=fast_next.reshape(d.shape),
        k=state.k + 1,
        proj_correction=proj.correction,
    )


def sts_mle_update(state: MleState, est: glr.BatchEstimate, config: MleConfig) -> MleState:
    """Apply one plug-in ratio update from precomputed batch estimates."""
    drift = np.zeros(config.dim)
    for t in range(config.t_obs):
        g2 = est.g2_mean[t]
        if g2 == 0.0:
            if np.any(est.g1_mean[t] != 0.0):
                raise TrajectoryAborted(state.k, f"zero density estimate with nonzero gradient at observation {t}")
            continue
        drift = drift + est.g1_mean[t] / g2
    if not np.all(np.isfinite(drift)):
        raise TrajectoryAborted(state.k, "non-finite ratio drift")
    _, slow_next, proj = two_timescale_step(
        state.d_tracker.ravel(),
        state.theta,
        np.zeros(state.d_tracker.size),
        drift,
        state.k,
        config.schedule,
        config.box,
    )
    return replace(state, theta=slow_next, k=state.k + 1, proj_correction=proj.correction)


def nmts_mle_step(state: MleState, config: MleConfig, rng: np.random.Generator) -> MleState:
    """Draw a fresh inner batch, then apply the coupled update."""
    est = glr.batch_estimates(
        get_model(config.model), rng, config.n_inner, config.observations.values, state.theta
    )
    return nmts_mle_update(state, est, config)


def sts_mle_step(state: MleState, config: MleConfig, rng: np.random.Generator) -> MleState:
    est = glr.batch_estimates(
        get_model(config.model), rng, config.n_inner, config.observations.values, state.theta
    )
    return sts_mle_update(state, est, config)


def _score_stack(model, values: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.asarray(model.score(values, theta), dtype=float).reshape(len(values), -1)


def run_mle(
    config: MleConfig,
    variant: str,
    checkpoints: np.ndarray | None = None,
    engine: str = "jit",
    freeze_theta: bool = False,
) -> RunRecord:
    """Iterate ``config.iterations`` steps and record metrics at checkpoints.

    Recorded columns: ``theta`` (the iterate), ``abs_err`` (distance to the
    closed-form maximizer of the observed data), ``tracking_residual``
    (sup-norm of D minus the analytic score stack at the current iterate; NaN
    for the ratio baseline, which has no tracker), and ``proj_active``.

    ``engine="jit"`` runs a compiled trajectory kernel (scalar-parameter
    models); ``engine="python"`` composes the per-step functions and is the
    reference path.  Both consume the same stream and agree to rounding.
    ``freeze_theta`` suppresses the slow update, leaving theta at theta0; this
    isolates the fast recursion for score-tracking diagnostics.

    A :class:`TrajectoryAborted` from the update is caught and recorded on the
    returned record rather than raised.
    """
    if variant not in ("nmts", "sts"):
        raise ValueError(f"variant must be 'nmts' or 'sts', got {variant!r}")
    if engine not in ("jit", "python"):
        raise ValueError(f"engine must be 'jit' or 'python', got {engine!r}")
    if freeze_theta and variant != "nmts":
        raise ConfigError("freeze_theta applies to the tracker variant only")
    model = get_model(config.model)
    ck = default_checkpoints(config.iterations) if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if ck.ndim != 1 or ck.shape[0] == 0 or np.any(np.diff(ck) <= 0) or ck[0] < 1 or ck[-1] > config.iterations:
        raise ValueError("checkpoints must be strictly increasing within [1, iterations]")

    try:
        theta_hat = analytic_mle(model, config.observations)
    except Exception:
        theta_hat = np.nan

    rng = streams.make_generator(streams.INNER, config.seed)
    if engine == "jit" and config.dim == 1:
        from ._kernels import run_mle_kernel

        theta_ck, resid_ck, proj_ck, abort_iter = run_mle_kernel(
            model, config, variant, ck, rng, freeze_theta
        )
        abort = None if abort_iter < 0 else {"iteration": int(abort_iter), "reason": "non-finite update"}
        n_ok = int(np.searchsorted(ck, abort_iter)) if abort else len(ck)
        theta_rows = theta_ck
        resid_rows = resid_ck
        proj_rows = proj_ck
    else:
        state = init_state(config)
        theta_rows = np.full(len(ck), np.nan)
        resid_rows = np.full(len(ck), np.nan)
        proj_rows = np.full(len(ck), np.nan)
        abort = None
        n_ok = len(ck)
        ci = 0
        try:
            for j in range(1, config.iterations + 1):
                est = glr.batch_estimates(model, rng, config.n_inner, config.observations.values, state.theta)
                if variant == "nmts":
                    nxt = nmts_mle_update(state, est, config)
                    if freeze_theta:
                        nxt = replace(nxt, theta=state.theta, proj_correction=np.zeros(config.dim))
                    state = nxt
                else:
                    state = sts_mle_update(state, est, config)
                if ci < len(ck) and j == ck[ci]:
                    theta_rows[ci] = state.theta[0]
                    if variant == "nmts":
                        resid = np.max(np.abs(state.d_tracker - _score_stack(model, config.observations.values, state.theta)))
                        resid_rows[ci] = resid
                    proj_rows[ci] = 1.0 if np.any(state.proj_correction) else 0.0
                    ci += 1
        except TrajectoryAborted as exc:
            abort = {"iteration": exc.iteration, "reason": exc.reason}
            n_ok = ci

    record = RunRecord(
        kind="mle",
        variant=variant,
        model=config.model,
        seed=config.seed,
        ks=ck,
        columns={
            "theta": theta_rows,
            "abs_err": np.abs(theta_rows - theta_hat),
            "tracking_residual": resid_rows,
            "proj_active": proj_rows,
        },
        meta=_meta(config, variant, engine, freeze_theta),
        abort=abort,
    )
    if abort:
        record.truncate_to(n_ok)
    return record


def _meta(config: MleConfig, variant: str, engine: str, freeze_theta: bool) -> dict:
    return {
        "kind": "mle",
        "variant": variant,
        "model": config.model,
        "schedule": (config.schedule.kind, config.schedule.alpha0, config.schedule.a,
                     config.schedule.beta0, config.schedule.b, config.schedule.start_index),
        "box": (tuple(config.box.lower), tuple(config.box.upper)),
        "theta0": tuple(config.theta0),
        "n_inner": config.n_inner,
        "iterations": config.iterations,
        "t_obs": config.t_obs,
        "obs_seed": config.observations.seed,
        "obs_theta_true": config.observations.theta_true,
        "freeze_theta": freeze_theta,
        "seed": config.seed,
    }
