"""Convergence-rate analytics over collections of seeded runs.

Turns checkpointed trajectories into the quantities the experiments assert:
mean-absolute-error curves with standard errors, ordinary-least-squares
slopes on log-log tails, and asymptotic-bias plateau levels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .records import RunRecord


@dataclass(frozen=True)
class ErrorSeries:
    """Per-checkpoint mean absolute error across replications.

    ``stderr`` is the standard error of the mean (NaN when fewer than two
    replications contributed).
    """

    ks: np.ndarray
    mae: np.ndarray
    stderr: np.ndarray
    n_reps: int

    def __post_init__(self):
        ks = np.asarray(self.ks, dtype=np.int64)
        mae = np.asarray(self.mae, dtype=float)
        stderr = np.asarray(self.stderr, dtype=float)
        if not (ks.shape == mae.shape == stderr.shape) or ks.ndim != 1:
            raise ValueError("ks, mae, stderr must be 1-d arrays of equal length")
        if np.any(np.diff(ks) <= 0):
            raise ValueError("checkpoints must be strictly increasing")
        object.__setattr__(self, "ks", ks)
        object.__setattr__(self, "mae", mae)
        object.__setattr__(self, "stderr", stderr)

    @property
    def stderr_defined(self) -> bool:
        return self.n_reps >= 2

    def restrict(self, k_lo: int, k_hi: int) -> "ErrorSeries":
        keep = (self.ks >= k_lo) & (self.ks <= k_hi)
        return ErrorSeries(self.ks[keep], self.mae[keep], self.stderr[keep], self.n_reps)


@dataclass(frozen=True)
class SlopeFit:
    """OLS fit of log(mae) against log(k) over a tail window."""

    slope: float
    intercept: float
    window: tuple[int, int]
    r2: float
    n_points: int


def aggregate_mae(records: list[RunRecord], column: str = "abs_err") -> ErrorSeries:
    """Mean and standard error of ``column`` across replications.

    All records must share their configuration fingerprint (everything except
    seed); aborted records are not accepted here, filter them upstream.
    Aggregation is a plain arithmetic mean, invariant to record order.
    """
    if not records:
        raise ValueError("no records to aggregate")
    fp = records[0].config_fingerprint()
    ks = records[0].ks
    for rec in records[1:]:
        if rec.config_fingerprint() != fp:
            raise ConfigError("records disagree on configuration; cannot aggregate")
        if not np.array_equal(rec.ks, ks):
            raise ConfigError("records disagree on checkpoints; cannot aggregate")
    rows = np.vstack([np.abs(rec.columns[column]) for rec in records])
    n = len(records)
    mae = rows.mean(axis=0)
    if n >= 2:
        stderr = rows.std(axis=0, ddof=1) / np.sqrt(n)
    else:
        stderr = np.full_like(mae, np.nan)
    return ErrorSeries(ks=ks, mae=mae, stderr=stderr, n_reps=n)


def loglog_slope(series: ErrorSeries, tail_fraction: float = 0.3) -> SlopeFit:
    """OLS slope of log mae vs log k over the final ``tail_fraction`` of
    checkpoints (at least 5 points)."""
    if not 0.0 < tail_fraction <= 1.0:
        raise ValueError(f"tail_fraction must lie in (0, 1], got {tail_fraction}")
    n = len(series.ks)
    n_tail = max(5, int(np.ceil(tail_fraction * n)))
    if n_tail > n:
        raise ValueError(f"need at least 5 checkpoints in the tail window, have {n}")
    ks = series.ks[n - n_tail:]
    mae = series.mae[n - n_tail:]
    if np.any(~np.isfinite(mae)) or np.any(mae <= 0.0):
        raise ValueError("mae must be finite and positive for a log-log fit")
    lx = np.log(ks.astype(float))
    ly = np.log(mae)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return SlopeFit(
        slope=float(slope),
        intercept=float(intercept),
        window=(int(ks[0]), int(ks[-1])),
        r2=r2,
        n_points=n_tail,
    )


def plateau_level(series: ErrorSeries) -> float:
    """Bias-floor estimate: mean mae over the last decile of checkpoints.

    Meaningful once the step-size term has decayed below the floor; callers
    choose run lengths accordingly.
    """
    n_tail = max(1, len(series.ks) // 10)
    return float(np.mean(series.mae[-n_tail:]))
