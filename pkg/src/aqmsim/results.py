"""Run artifacts: per-replication CSV/JSON files and cross-replication aggregates."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import config_to_dict
from .metrics import (
    SCHEMA_VERSION,
    DropAttribution,
    RunResult,
    _attribution,
    delay_stats,
    download_stats,
)
from .aqm import DropCause

CDF_QUANTILES = tuple(i / 2 for i in range(201))  # 0, 0.5, ..., 100


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serialisable: {type(o)}")


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _write_int_columns(path: Path, header: str, *cols) -> None:
    with path.open("w", newline="") as fh:
        fh.write(header + "\n")
        if cols and len(cols[0]):
            np.savetxt(fh, np.column_stack(cols), fmt="%d", delimiter=",")


def write_run(result: RunResult, out_dir: Path, emit: str = "both") -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    if emit in ("csv", "both"):
        _write_int_columns(out_dir / "qdelay.csv", "time_ns,delay_ns", result.qdelay_t, result.qdelay_v)
        with (out_dir / "util.csv").open("w", newline="") as fh:
            fh.write("second,fraction\n")
            for i, u in enumerate(result.util):
                fh.write(f"{i},{u:.9f}\n")
        with (out_dir / "goodput.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["second", "class", "bps"])
            n = len(result.util)
            for sec in range(n):
                for name in result.classes:
                    w.writerow([sec, name, int(round(result.goodput[name][sec]))])
        with (out_dir / "drops.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_ns", "cause", "delay_at_drop_ns", "flow"])
            for d in result.drop_records:
                w.writerow([d.at, d.cause.value, d.queuing_delay_at_drop, d.flow_id])
        with (out_dir / "downloads.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["flow", "size_bytes", "duration_ns"])
            for r in result.downloads:
                w.writerow([r.flow, r.size_bytes, "" if r.duration is None else r.duration])
    if emit in ("json", "both"):
        dump_json(result.summary(), out_dir / "summary.json")


def _pooled_quantiles(sorted_samples: np.ndarray) -> list:
    if sorted_samples.shape[0] == 0:
        return []
    from . import kernels
    return [int(v) for v in kernels.nearest_rank(sorted_samples, CDF_QUANTILES)]


def aggregate(results: Sequence[RunResult]) -> dict:
    """Pool samples over replications and reduce them once."""
    if not results:
        raise ValueError("nothing to aggregate")
    first = results[0]
    classes = list(first.classes)
    apps = sorted({c.split("-")[0] for c in classes})

    def pooled(prefix=None):
        return np.sort(np.concatenate([r.qdelay_of(prefix) for r in results]))

    all_q = pooled()
    qdelay_by_class = {}
    quantiles = {"all": _pooled_quantiles(all_q)}
    for c in classes + [a for a in apps if a not in classes]:
        s = pooled(c)
        qdelay_by_class[c] = delay_stats(s)
        quantiles[c] = _pooled_quantiles(s)

    by_cause = {c: [] for c in DropCause}
    for r in results:
        for d in r.drop_records:
            by_cause[d.cause].append(d.queuing_delay_at_drop)
    attribution: DropAttribution = _attribution(by_cause)

    sizes = sorted({d.size_bytes for r in results for d in r.downloads})
    groups = sorted({d.flow.split("#")[0] for r in results for d in r.downloads})

    def pooled_dl(size, group=None):
        return np.concatenate([r.completed_downloads(size, group) for r in results])

    util = np.concatenate([r.util for r in results])
    scen = config_to_dict(first.config)
    scen.pop("seed")
    scen.pop("replication")
    return {
        "schema_version": SCHEMA_VERSION,
        "percentile_method": "nearest-rank",
        "replications": len(results),
        "seeds": [r.config.seed for r in results],
        "scenario": scen,
        "shape": {k: (list(v) if isinstance(v, tuple) else v) for k, v in first.config.shape().items()},
        "qdelay": delay_stats(all_q),
        "qdelay_by_class": qdelay_by_class,
        "qdelay_quantiles_ns": {"q": list(CDF_QUANTILES), **quantiles},
        "utilization": {"mean": float(util.mean()) if util.size else 0.0, "samples": int(util.size)},
        "goodput_bps": {c: float(np.mean([r.goodput[c].mean() for r in results])) for c in classes},
        "drops": attribution.as_dict(),
        "downloads": {
            "completed": sum(1 for r in results for d in r.downloads if d.duration is not None),
            "truncated": sum(1 for r in results for d in r.downloads if d.duration is None),
            "by_size": {str(s): download_stats(pooled_dl(s)) for s in sizes},
            "by_group_size": {g: {str(s): download_stats(pooled_dl(s, g)) for s in sizes} for g in groups},
        },
        "per_replication": [
            {
                "seed": r.config.seed,
                "events": r.events,
                "utilization_mean": float(r.util.mean()) if r.util.size else 0.0,
                "r_DD": r.attribution.r_DD,
                "conservation_ok": r.conservation_ok(),
            }
            for r in results
        ],
        "conservation_ok": all(r.conservation_ok() for r in results),
    }


class ShapeMismatch(ValueError):
    pass


def _delta(a, b):
    if a is None or b is None:
        return None
    return b - a


def _stat_deltas(a: dict, b: dict) -> dict:
    return {k: _delta(a.get(k), b.get(k)) for k in sorted(set(a) & set(b)) if k != "count"}


def compare(agg_a: dict, agg_b: dict) -> dict:
    """Differences ``B - A`` between two aggregates of the same scenario shape."""
    if agg_a.get("shape") != agg_b.get("shape"):
        diff = sorted(k for k in set(agg_a.get("shape", {})) | set(agg_b.get("shape", {}))
                      if agg_a.get("shape", {}).get(k) != agg_b.get("shape", {}).get(k))
        raise ShapeMismatch(f"scenario shapes differ in: {diff}")
    classes = sorted(set(agg_a["qdelay_by_class"]) & set(agg_b["qdelay_by_class"]))
    sizes = sorted(set(agg_a["downloads"]["by_size"]) & set(agg_b["downloads"]["by_size"]), key=int)
    da, db = agg_a["drops"], agg_b["drops"]
    return {
        "schema_version": SCHEMA_VERSION,
        "aqm": {"a": agg_a["scenario"]["aqm"], "b": agg_b["scenario"]["aqm"]},
        "qdelay_delta_ns": _stat_deltas(agg_a["qdelay"], agg_b["qdelay"]),
        "max_qdelay_delta_ns": _delta(agg_a["qdelay"].get("max_ns"), agg_b["qdelay"].get("max_ns")),
        "qdelay_by_class_delta_ns": {c: _stat_deltas(agg_a["qdelay_by_class"][c], agg_b["qdelay_by_class"][c])
                                     for c in classes},
        "utilization_mean_delta": agg_b["utilization"]["mean"] - agg_a["utilization"]["mean"],
        "goodput_bps_delta": {c: agg_b["goodput_bps"][c] - agg_a["goodput_bps"][c]
                              for c in sorted(set(agg_a["goodput_bps"]) & set(agg_b["goodput_bps"]))},
        "drop_ratio_delta": {k: _delta(da.get(k), db.get(k)) for k in ("r_DD", "r_RD", "r_BO", "r_CoDel")},
        "download_delta_ns": {s: _stat_deltas(agg_a["downloads"]["by_size"][s], agg_b["downloads"]["by_size"][s])
                              for s in sizes},
    }


def write_compare(agg_a: dict, agg_b: dict, report: dict, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(report, out_dir / "compare.json")
    qa, qb = agg_a["qdelay_quantiles_ns"], agg_b["qdelay_quantiles_ns"]
    keys = [k for k in qa if k != "q" and k in qb and qa[k] and qb[k]]
    with (out_dir / "cdf_overlay.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "fraction", "a_delay_ns", "b_delay_ns"])
        for k in keys:
            for q, va, vb in zip(qa["q"], qa[k], qb[k]):
                w.writerow([k, f"{q / 100:.3f}", va, vb])
    with (out_dir / "downloads_boxplot.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run", "size_bytes", "p5_ns", "p25_ns", "p50_ns", "p75_ns", "p95_ns"])
        for tag, agg in (("a", agg_a), ("b", agg_b)):
            for size, st in sorted(agg["downloads"]["by_size"].items(), key=lambda kv: int(kv[0])):
                if st.get("count"):
                    w.writerow([tag, size] + [st[f"p{q}_ns"] for q in (5, 25, 50, 75, 95)])
