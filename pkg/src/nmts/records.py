"""Per-replication trajectory records and their CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


def default_checkpoints(iterations: int, ratio: float = 1.3) -> np.ndarray:
    """Geometric checkpoint grid over [1, iterations], final step included.

    Powers of ``ratio`` give near-uniform coverage in log k without recording
    every iteration of a long run.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if ratio <= 1.0:
        raise ValueError(f"checkpoint ratio must exceed 1, got {ratio}")
    n = int(np.ceil(np.log(iterations) / np.log(ratio))) + 1 if iterations > 1 else 1
    grid = np.unique(np.round(ratio ** np.arange(n + 1)).astype(np.int64))
    grid = grid[(grid >= 1) & (grid <= iterations)]
    return np.unique(np.concatenate([grid, [iterations]]))


@dataclass
class RunRecord:
    """Checkpointed metrics for one seeded replication.

    ``ks`` holds the within-run iteration numbers at which rows were recorded;
    a row reflects the state after that many updates.  ``columns`` maps column
    name to an array aligned with ``ks``.  ``meta`` echoes the configuration
    (everything the aggregator must match across replications, plus the seed).
    ``abort`` is None for a clean run, else ``{"iteration": k, "reason": str}``
    and all rows past the abort are dropped.
    """

    kind: str
    variant: str
    model: str
    seed: int
    ks: np.ndarray
    columns: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    abort: dict | None = None

    def __post_init__(self):
        self.ks = np.asarray(self.ks, dtype=np.int64)
        for name, col in self.columns.items():
            arr = np.asarray(col, dtype=float)
            if arr.shape != self.ks.shape:
                raise ValueError(f"column {name!r} length {arr.shape} != checkpoints {self.ks.shape}")
            self.columns[name] = arr

    @property
    def column_names(self) -> list[str]:
        return list(self.columns)

    def config_fingerprint(self) -> dict:
        """Meta minus the per-replication fields; used for aggregation checks."""
        return {k: v for k, v in self.meta.items() if k not in ("seed", "rep")}

    def to_csv(self, path) -> None:
        names = self.column_names
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["k"] + names)
            for i, k in enumerate(self.ks):
                writer.writerow([int(k)] + [repr(float(self.columns[n][i])) for n in names])

    def truncate_to(self, n_rows: int) -> None:
        """Keep the first ``n_rows`` checkpoints (used after an abort)."""
        self.ks = self.ks[:n_rows]
        self.columns = {k: v[:n_rows] for k, v in self.columns.items()}
