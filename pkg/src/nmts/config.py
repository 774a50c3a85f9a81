"""Experiment configuration: schema, validation, JSON loading."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .core import Box, StepSchedule
from .errors import ConfigError
from .models import get_model

EXPERIMENTS = ("mle", "pde", "rates-mle", "rates-pde", "glr-check")
VARIANTS = ("nmts", "sts", "both")
REDRAW_MODES = ("shared", "per-replication")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, validated up front.

    ``schedule`` is a mapping with keys kind/alpha0/a/beta0/b and optional
    start_index; ``box`` is ``[lower..., upper...]`` pairs as a two-row list.
    ``checkpoints`` maps {"kind": "geometric", "ratio": r} (default) or
    {"kind": "explicit", "values": [...]}.  ``redraw_observations`` decides
    whether every replication regenerates its own observation set or all
    replications share the one derived from ``base_seed``.
    """

    experiment: str
    variant: str = "both"
    model: str = "linear-latent"
    schedule: dict = field(default_factory=dict)
    box: list = field(default_factory=list)
    theta0: list = field(default_factory=lambda: [0.8])
    lambda0: list = field(default_factory=lambda: [0.0, 1.0])
    theta_true: float = 1.0
    t_obs: int = 100
    n_inner: int = 100
    m_outer: int = 10
    iterations: int = 10_000
    replications: int = 100
    base_seed: int = 101
    checkpoints: dict = field(default_factory=lambda: {"kind": "geometric", "ratio": 1.3})
    redraw_observations: str = "per-replication"
    out_dir: str | None = None

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        get_model(self.model)
        if self.redraw_observations not in REDRAW_MODES:
            raise ConfigError(f"redraw_observations must be one of {REDRAW_MODES}, got {self.redraw_observations!r}")
        for name in ("t_obs", "n_inner", "m_outer", "iterations", "replications"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.experiment != "glr-check":
            # constructing these validates their invariants and naming the
            # offending field is exactly what the error should do
            try:
                self.step_schedule()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"schedule: {exc}") from exc
            try:
                bx = self.feasible_box()
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"box: {exc}") from exc
            if self.driver() == "mle":
                start = np.asarray(self.theta0, dtype=float)
                if start.shape[0] != bx.dim or not bx.contains(start):
                    raise ConfigError(f"theta0={self.theta0} incompatible with box {self.box}")
            else:
                start = np.asarray(self.lambda0, dtype=float)
                if start.shape != (2,) or not bx.contains(start):
                    raise ConfigError(f"lambda0={self.lambda0} incompatible with box {self.box}")
                if self.model != "location":
                    raise ConfigError("posterior experiments require model='location'")
        ck = self.checkpoints
        kind = ck.get("kind")
        if kind == "geometric":
            if not float(ck.get("ratio", 1.3)) > 1.0:
                raise ConfigError("checkpoints: geometric ratio must exceed 1")
        elif kind == "explicit":
            vals = np.asarray(ck.get("values", []), dtype=np.int64)
            if vals.ndim != 1 or len(vals) == 0 or np.any(np.diff(vals) <= 0):
                raise ConfigError("checkpoints: explicit values must be strictly increasing")
            if vals[0] < 1 or vals[-1] > self.iterations:
                raise ConfigError("checkpoints: explicit values must lie within [1, iterations]")
        else:
            raise ConfigError(f"checkpoints: unknown kind {kind!r}")

    def driver(self) -> str:
        return "pde" if self.experiment in ("pde", "rates-pde") else "mle"

    def step_schedule(self) -> StepSchedule:
        return StepSchedule(**self.schedule)

    def feasible_box(self) -> Box:
        if len(self.box) != 2:
            raise ValueError("box must be [lower_list, upper_list]")
        return Box(lower=np.asarray(self.box[0], dtype=float), upper=np.asarray(self.box[1], dtype=float))

    def checkpoint_grid(self) -> np.ndarray:
        from .records import default_checkpoints

        if self.checkpoints["kind"] == "geometric":
            return default_checkpoints(self.iterations, float(self.checkpoints.get("ratio", 1.3)))
        return np.asarray(self.checkpoints["values"], dtype=np.int64)

    def to_dict(self) -> dict:
        return asdict(self)


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if "experiment" not in data:
        raise ConfigError("missing required key: experiment")
    return ExperimentConfig(**data)


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config file; unknown keys are rejected."""
    with open(path) as f:
        text = f.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return config_from_dict(data)
