"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """A configuration value violates a precondition of the module it feeds."""


class DegenerateDataError(ValueError):
    """Observed data admit no valid closed-form estimate (negative radicand)."""


class GlrSingularityError(ArithmeticError):
    """A single-run estimator hit a singular point (zero simulator slope or a
    non-finite value) and cannot produce a valid sample."""


class TrajectoryAborted(RuntimeError):
    """A stochastic-approximation run produced a non-finite update and stopped.

    Carries enough context to locate the failure in a long run.
    """

    def __init__(self, iteration: int, reason: str, block: int | None = None):
        self.iteration = int(iteration)
        self.block = block
        self.reason = reason
        where = f"iteration {iteration}"
        if block is not None:
            where += f", block {block}"
        super().__init__(f"run aborted at {where}: {reason}")
