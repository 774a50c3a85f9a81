"""Step-size schedules, box projection, and the generic two-timescale update.

The coupled recursions driven by this module have the shape

    fast'  = fast + alpha_k * fast_drift
    slow'  = Pi_Box(slow + beta_k * slow_drift)

with step sizes alpha_k (fast) and beta_k (slow) drawn from a
:class:`StepSchedule`.  Timescale separation requires beta_k / alpha_k -> 0,
which the schedule enforces structurally through its exponents (b > a).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import TrajectoryAborted

SCHEDULE_KINDS = ("polynomial", "poly-log")


@dataclass(frozen=True)
class StepSchedule:
    """Decaying step-size pair with enforced timescale separation.

    ``polynomial``:  alpha_k = alpha0 / k**a,             beta_k = beta0 / k**b
    ``poly-log``:    alpha_k = alpha0 / (k*log(k+1))**a,  beta_k = beta0 / (k*log(k+1))**b

    with natural logarithms, exponents 1/2 < a < b <= 1, and the iteration
    counter k running from ``start_index`` upward.  ``start_index`` shifts the
    schedule origin; larger values tame the first steps without changing the
    asymptotic decay.
    """

    kind: str
    alpha0: float
    a: float
    beta0: float
    b: float
    start_index: int = 1

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if not self.beta0 > 0:
            raise ValueError(f"beta0 must be positive, got {self.beta0}")
        if not 0.5 < self.a <= 1.0:
            raise ValueError(f"fast exponent a must lie in (1/2, 1], got {self.a}")
        if not 0.5 < self.b <= 1.0:
            raise ValueError(f"slow exponent b must lie in (1/2, 1], got {self.b}")
        if not self.b > self.a:
            raise ValueError(f"timescale separation needs b > a, got a={self.a}, b={self.b}")
        if not (isinstance(self.start_index, int) and self.start_index >= 1):
            raise ValueError(f"start_index must be a positive integer, got {self.start_index}")

    def _base(self, k: int) -> float:
        if k < self.start_index:
            raise ValueError(f"iteration index {k} below schedule start_index {self.start_index}")
        if self.kind == "polynomial":
            return float(k)
        return k * math.log(k + 1.0)

    def alpha_at(self, k: int) -> float:
        """Fast step size at iteration ``k`` (k >= start_index)."""
        return self.alpha0 / self._base(k) ** self.a

    def beta_at(self, k: int) -> float:
        """Slow step size at iteration ``k`` (k >= start_index)."""
        return self.beta0 / self._base(k) ** self.b


def alpha_at(schedule: StepSchedule, k: int) -> float:
    return schedule.alpha_at(k)


def beta_at(schedule: StepSchedule, k: int) -> float:
    return schedule.beta_at(k)


@dataclass(frozen=True)
class Box:
    """Axis-aligned feasible region ``[lower[i], upper[i]]`` per component."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"box bounds must be 1-d arrays of equal length, got {lo.shape} vs {hi.shape}")
        if not np.all(lo <= hi):
            raise ValueError("box requires lower[i] <= upper[i] componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def contains(self, point: np.ndarray) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= self.lower) and np.all(p <= self.upper))

    def has_interior(self) -> bool:
        return bool(np.all(self.lower < self.upper))


@dataclass(frozen=True)
class ProjectionResult:
    """Projected point plus the displacement the projection applied.

    ``correction = point - input``; it is the realized normal-cone term of the
    projected update (zero iff the input was already feasible).
    """

    point: np.ndarray
    correction: np.ndarray

    @property
    def active(self) -> bool:
        return bool(np.any(self.correction != 0.0))


def project(box: Box, point: np.ndarray) -> ProjectionResult:
    """Euclidean projection onto a box: componentwise clamping."""
    p = np.atleast_1d(np.asarray(point, dtype=float))
    if p.shape != box.lower.shape:
        raise ValueError(f"dimension mismatch: point {p.shape} vs box {box.lower.shape}")
    clamped = np.minimum(np.maximum(p, box.lower), box.upper)
    return ProjectionResult(point=clamped, correction=clamped - p)


def two_timescale_step(
    fast_state: np.ndarray,
    slow_state: np.ndarray,
    fast_drift: np.ndarray,
    slow_drift: np.ndarray,
    k: int,
    schedule: StepSchedule,
    slow_box: Box,
) -> tuple[np.ndarray, np.ndarray, ProjectionResult]:
    """One coupled update; the slow iterate is projected back into its box.

    Raises :class:`TrajectoryAborted` on any non-finite drift component, which
    signals estimator blow-up upstream and is meant to stop the run loudly
    rather than clamp it silently.
    """
    fast = np.asarray(fast_state, dtype=float)
    slow = np.atleast_1d(np.asarray(slow_state, dtype=float))
    fd = np.asarray(fast_drift, dtype=float)
    sd = np.atleast_1d(np.asarray(slow_drift, dtype=float))
    if fd.shape != fast.shape:
        raise ValueError(f"fast drift shape {fd.shape} does not match state {fast.shape}")
    if sd.shape != slow.shape:
        raise ValueError(f"slow drift shape {sd.shape} does not match state {slow.shape}")
    if not np.all(np.isfinite(fd)):
        raise TrajectoryAborted(k, "non-finite fast drift")
    if not np.all(np.isfinite(sd)):
        raise TrajectoryAborted(k, "non-finite slow drift")
    fast_next = fast + schedule.alpha_at(k) * fd
    proj = project(slow_box, slow + schedule.beta_at(k) * sd)
    return fast_next, proj.point, proj
