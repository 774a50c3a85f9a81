"""Deterministic random streams.

All randomness in the package flows through counter-based Philox generators
keyed by small integer tuples, so every run is reproducible bit-for-bit from
its seed on a fixed numpy version, and distinct purposes (observation
generation, inner Monte Carlo batches, outer reparameterization samples)
never share a stream.

Seed splitting
--------------
A replicated experiment with ``base_seed`` s and replication index r uses the
replication seed ``s * 2**20 + r`` (injective for r < 2**20), so adding
replications never perturbs existing ones.  Each consumer then prefixes a
stream tag:

    observations      (OBS, seed)
    inner batches     (INNER, seed)
    outer samples     (OUTER, seed)
"""

from __future__ import annotations

import numpy as np

OBS = 1
INNER = 2
OUTER = 3

_MAX_REPS = 1 << 20


def make_generator(*key: int) -> np.random.Generator:
    """Philox generator keyed by an integer tuple via ``SeedSequence``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


def replication_seed(base_seed: int, rep: int) -> int:
    """Derived seed for replication ``rep`` of an experiment."""
    if not 0 <= rep < _MAX_REPS:
        raise ValueError(f"replication index {rep} outside [0, {_MAX_REPS})")
    return int(base_seed) * _MAX_REPS + int(rep)
