"""Replicated runs of one scenario, written to an output directory."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import __version__, kernels
from .config import config_to_dict
from .metrics import RunResult
from .netsim import ConfigError, ScenarioConfig, run_scenario
from .results import aggregate, dump_json, write_run

EMIT_MODES = ("csv", "json", "both")


@dataclass
class RunManifest:
    scenario: ScenarioConfig
    replications: int = 20
    base_seed: int = 1
    output_dir: Optional[Path] = None
    emit: str = "both"
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.emit not in EMIT_MODES:
            raise ConfigError(f"emit must be one of {EMIT_MODES}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        self.scenario.validate()

    def replication_configs(self) -> list[ScenarioConfig]:
        return [self.scenario.with_(seed=self.base_seed + i, replication=i)
                for i in range(self.replications)]


def replication_dir(out: Path, i: int) -> Path:
    return Path(out) / f"rep_{i:03d}"


def _run_one(job) -> RunResult:
    cfg, out, emit = job
    result = run_scenario(cfg)
    # the worker that owns the simulation writes its files
    if out is not None:
        write_run(result, replication_dir(out, cfg.replication), emit)
    return result


def run_replications(manifest: RunManifest) -> list[RunResult]:
    jobs = [(c, manifest.output_dir, manifest.emit) for c in manifest.replication_configs()]
    if manifest.jobs == 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    # map() keeps submission order, so the aggregate does not depend on jobs
    with ProcessPoolExecutor(max_workers=min(manifest.jobs, len(jobs))) as pool:
        return list(pool.map(_run_one, jobs))


def execute(manifest: RunManifest) -> tuple[list[RunResult], dict]:
    if manifest.output_dir is not None:
        Path(manifest.output_dir).mkdir(parents=True, exist_ok=True)
    results = run_replications(manifest)
    agg = aggregate(results)
    if manifest.output_dir is not None:
        out = Path(manifest.output_dir)
        dump_json(agg, out / "aggregate.json")
        dump_json({
            "aqmsim_version": __version__,
            "kernel_backend": kernels.BACKEND,
            "replications": manifest.replications,
            "base_seed": manifest.base_seed,
            "emit": manifest.emit,
            "scenario": config_to_dict(manifest.scenario),
        }, out / "manifest.json")
    return results, agg


def load_aggregate(path: Path) -> dict:
    p = Path(path)
    if p.is_dir():
        p = p / "aggregate.json"
    return json.loads(p.read_text())
