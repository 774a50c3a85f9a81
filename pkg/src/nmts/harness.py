"""Experiment orchestration: seeded replications, artifact emission.

Directory layout produced by :func:`run_experiment` (under ``out_dir``):

    manifest.json                 config echo, seeds, versions, failures, timings
    runs/<variant>/rep_NNNN.csv   per-replication trajectory records
    aggregate_<variant>.csv       (k, mae, stderr) for the primary error metric
    aggregate_var_<variant>.csv   posterior-variance metric (pde only)
    summary.json                  final errors, slope fits, plateau levels
    observations.csv              the shared observation set (shared mode only)
    glr_check.csv                 estimator-vs-oracle table (glr-check only)

Every replication is isolated: replication r derives its own seed from the
base seed (``streams.replication_seed``), regenerates observations when the
config says so, and runs independently of worker scheduling, so outputs are
byte-identical across reruns and worker counts (manifest timing fields
excepted).
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, mle, pde, rates, streams
from .config import ExperimentConfig
from .models import ObservationSet, get_model, simulate_observations
from .records import RunRecord

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = 1

# estimator check points: (model, theta, y)
GLR_CHECK_POINTS = (
    ("location", 0.3, 1.0),
    ("linear-latent", 1.0, 0.5),
)


@dataclass
class Manifest:
    """Run metadata sufficient to re-run bit-exactly (timings aside)."""

    schema_version: int
    package_version: str
    config: dict
    variants: list[str]
    seeds: dict = field(default_factory=dict)
    obs_seeds: list[int] = field(default_factory=list)
    engine: str = "jit"
    workers: int = 1
    wall_seconds: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    started_at: float = 0.0
    finished_at: float = 0.0

    @property
    def n_runs(self) -> int:
        return len(self.variants) * self.config["replications"]

    @property
    def failure_fraction(self) -> float:
        return len(self.failures) / self.n_runs if self.n_runs else 0.0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2)


def _observations_for(config: ExperimentConfig, rep: int) -> ObservationSet:
    model = get_model(config.model)
    if config.redraw_observations == "shared":
        seed = config.base_seed
    else:
        seed = streams.replication_seed(config.base_seed, rep)
    return simulate_observations(model, config.theta_true, config.t_obs, seed)


def _driver_config(config: ExperimentConfig, rep: int):
    rep_seed = streams.replication_seed(config.base_seed, rep)
    obs = _observations_for(config, rep)
    if config.driver() == "mle":
        return mle.MleConfig(
            model=config.model,
            observations=obs,
            schedule=config.step_schedule(),
            box=config.feasible_box(),
            theta0=np.asarray(config.theta0, dtype=float),
            n_inner=config.n_inner,
            iterations=config.iterations,
            seed=rep_seed,
        )
    return pde.PdeConfig(
        model=config.model,
        observations=obs,
        schedule=config.step_schedule(),
        box=config.feasible_box(),
        lambda0=np.asarray(config.lambda0, dtype=float),
        m_outer=config.m_outer,
        n_inner=config.n_inner,
        iterations=config.iterations,
        seed=rep_seed,
    )


def _run_one(config: ExperimentConfig, variant: str, rep: int, engine: str) -> tuple[RunRecord, float]:
    t0 = time.perf_counter()
    drv = _driver_config(config, rep)
    ck = config.checkpoint_grid()
    if config.driver() == "mle":
        record = mle.run_mle(drv, variant, checkpoints=ck, engine=engine)
    else:
        record = pde.run_pde(drv, variant, checkpoints=ck, engine=engine)
    record.meta["rep"] = rep
    return record, time.perf_counter() - t0


def run_experiment(
    config: ExperimentConfig,
    out_dir,
    workers: int = 1,
    engine: str = "jit",
) -> Manifest:
    """Execute all replications of ``config`` and write every artifact.

    Per-replication failures (aborted trajectories or raised errors) are
    logged into the manifest and the remaining replications continue; the CLI
    turns a failure fraction above 10% into a nonzero exit status.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(
        schema_version=MANIFEST_SCHEMA,
        package_version=__version__,
        config=config.to_dict(),
        variants=["nmts", "sts"] if config.variant == "both" else [config.variant],
        engine=engine,
        workers=workers,
        started_at=time.time(),
    )

    if config.experiment == "glr-check":
        summary = _run_glr_check(config, out)
        manifest.finished_at = time.time()
        (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
        (out / "manifest.json").write_text(manifest.to_json())
        return manifest

    reps = list(range(config.replications))
    manifest.seeds = {str(r): streams.replication_seed(config.base_seed, r) for r in reps}
    if config.redraw_observations == "shared":
        obs = _observations_for(config, 0)
        obs.to_csv(out / "observations.csv")
        manifest.obs_seeds = [obs.seed]
    else:
        manifest.obs_seeds = [_observations_for(config, r).seed for r in reps]

    tasks = [(variant, rep) for variant in manifest.variants for rep in reps]
    results: dict[tuple[str, int], RunRecord] = {}
    if workers <= 1:
        for variant, rep in tasks:
            record, secs = _run_one(config, variant, rep, engine)
            results[(variant, rep)] = record
            manifest.wall_seconds[f"{variant}/{rep}"] = round(secs, 3)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                (variant, rep): pool.submit(_run_one, config, variant, rep, engine)
                for variant, rep in tasks
            }
            for (variant, rep), fut in futures.items():
                record, secs = fut.result()
                results[(variant, rep)] = record
                manifest.wall_seconds[f"{variant}/{rep}"] = round(secs, 3)

    summary: dict = {"experiment": config.experiment, "variants": {}}
    for variant in manifest.variants:
        run_dir = out / "runs" / variant
        run_dir.mkdir(parents=True, exist_ok=True)
        records = []
        for rep in reps:
            record = results[(variant, rep)]
            record.to_csv(run_dir / f"rep_{rep:04d}.csv")
            if record.abort is not None:
                manifest.failures.append({"variant": variant, "rep": rep, **record.abort})
                logger.warning("replication %s/%d aborted: %s", variant, rep, record.abort)
            else:
                records.append(record)
        summary["variants"][variant] = _summarize_variant(config, variant, records, out)

    manifest.finished_at = time.time()
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2))
    (out / "manifest.json").write_text(manifest.to_json())
    logger.info("experiment %s finished: %d/%d runs clean", config.experiment,
                manifest.n_runs - len(manifest.failures), manifest.n_runs)
    return manifest


def _write_series(series: rates.ErrorSeries, path: Path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["k", "mae", "stderr"])
        for i in range(len(series.ks)):
            writer.writerow([int(series.ks[i]), repr(float(series.mae[i])), repr(float(series.stderr[i]))])


def _summarize_variant(config: ExperimentConfig, variant: str, records: list[RunRecord], out: Path) -> dict:
    info: dict = {"replications_clean": len(records)}
    if not records:
        return info
    primary = "abs_err" if config.driver() == "mle" else "mean_abs_err"
    series = rates.aggregate_mae(records, column=primary)
    _write_series(series, out / f"aggregate_{variant}.csv")
    info["final_k"] = int(series.ks[-1])
    info["final_mae"] = float(series.mae[-1])
    info["final_stderr"] = float(series.stderr[-1])
    if config.driver() == "pde":
        var_series = rates.aggregate_mae(records, column="var_abs_err")
        _write_series(var_series, out / f"aggregate_var_{variant}.csv")
        info["final_var_mae"] = float(var_series.mae[-1])
    if config.experiment.startswith("rates"):
        fit = rates.loglog_slope(series)
        info["slope"] = fit.slope
        info["slope_window"] = list(fit.window)
        info["slope_r2"] = fit.r2
        info["plateau"] = rates.plateau_level(series)
        info["tail_fraction"] = 0.3
    return info


def _run_glr_check(config: ExperimentConfig, out: Path) -> dict:
    """Monte Carlo unbiasedness table for both estimators at pinned points."""
    from . import glr

    rows = []
    for model_name, theta, y in GLR_CHECK_POINTS:
        model = get_model(model_name)
        rng = streams.make_generator(streams.INNER, config.base_seed)
        x = model.latent_sample(rng, config.n_inner)
        inside = model.sim_values(x, theta) <= y
        g2 = np.where(inside, model.density_payoff(x, theta), 0.0)
        g1 = np.where(inside, model.density_grad_payoff(x, theta)[:, 0], 0.0)
        for name, samples, target in (
            ("g2", g2, float(model.density(y, theta))),
            ("g1", g1, float(model.density_grad(y, theta))),
        ):
            mean = float(np.mean(samples))
            se = float(np.std(samples, ddof=1) / np.sqrt(len(samples)))
            rows.append({
                "model": model_name,
                "theta": theta,
                "y": y,
                "estimator": name,
                "mean": mean,
                "stderr": se,
                "target": target,
                "z": (mean - target) / se,
            })
    with open(out / "glr_check.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    worst = max(abs(r["z"]) for r in rows)
    return {"experiment": "glr-check", "n_inner": config.n_inner, "rows": rows, "worst_abs_z": worst}
