"""Command line entry point: ``aqmsim run | compare | presets``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as cfgio
from .netsim import AQM_NAMES, PRESET_DEFAULTS, PRESET_NOTES, ConfigError, preset_config
from .results import ShapeMismatch, compare, write_compare
from .runner import EMIT_MODES, RunManifest, execute, load_aggregate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _ms(ns) -> str:
    return "n/a" if ns is None else f"{ns / 1e6:.1f} ms"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aqmsim", description="AQM bottleneck simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run seeded replications of one scenario")
    run.add_argument("--config", type=Path, help="JSON scenario file; flags below override it")
    run.add_argument("--preset", choices=sorted(PRESET_DEFAULTS))
    run.add_argument("--aqm", choices=AQM_NAMES)
    run.add_argument("--owd", help="bottleneck one-way delay, e.g. 48ms")
    run.add_argument("--duration", help="simulated time, e.g. 300s")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override any scenario field (repeatable)")
    run.add_argument("--reps", type=int, default=20)
    run.add_argument("--seed", type=int, default=1, help="base seed; replication i uses seed+i")
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--emit", choices=EMIT_MODES, default="both")
    run.add_argument("--jobs", type=int, default=1, help="replications run concurrently")

    cmp_ = sub.add_parser("compare", help="compare two run directories (B minus A)")
    cmp_.add_argument("run_a", type=Path)
    cmp_.add_argument("run_b", type=Path)
    cmp_.add_argument("--out", type=Path, required=True)

    sub.add_parser("presets", help="list the built-in scenario presets")
    return ap


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def scenario_from_args(args) -> "cfgio.ScenarioConfig":
    data: dict = {}
    if args.config is not None:
        data = json.loads(args.config.read_text())
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("preset", "aqm", "owd", "duration"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        data[k.strip()] = _parse_value(v.strip())
    data.setdefault("preset", "proof_of_concept")
    return cfgio.config_from_dict(data)


def cmd_run(args) -> int:
    scenario = scenario_from_args(args)
    manifest = RunManifest(scenario, args.reps, args.seed, args.out, args.emit, args.jobs)
    _, agg = execute(manifest)
    q, d = agg["qdelay"], agg["drops"]
    print(f"{scenario.preset} aqm={scenario.aqm} owd={cfgio.format_duration(scenario.owd)} "
          f"reps={args.reps} -> {args.out}")
    print(f"  qdelay p50 {_ms(q.get('p50_ns'))}  p90 {_ms(q.get('p90_ns'))}  max {_ms(q.get('max_ns'))}")
    print(f"  utilization {agg['utilization']['mean']:.3f}  drops {d['n_tot']} "
          f"(DD {d['n_DD']}, RD {d['n_RD']}, BO {d['n_BO']}, CoDel {d['n_CoDel']})")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = load_aggregate(args.run_a), load_aggregate(args.run_b)
    report = compare(a, b)
    write_compare(a, b, report, args.out)
    qd = report["qdelay_delta_ns"]
    print(f"B ({report['aqm']['b']}) minus A ({report['aqm']['a']})")
    print(f"  qdelay p50 {_ms(qd.get('p50_ns'))}  p90 {_ms(qd.get('p90_ns'))}  "
          f"max {_ms(report['max_qdelay_delta_ns'])}")
    print(f"  utilization {report['utilization_mean_delta']:+.4f}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in sorted(PRESET_DEFAULTS):
        print(f"{name}: {PRESET_NOTES[name]}")
        cfg = preset_config(name)
        d = cfgio.config_to_dict(cfg)
        for k in sorted(PRESET_DEFAULTS[name]):
            print(f"    {k} = {d[k]}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "compare": cmd_compare, "presets": cmd_presets}[args.command]
    try:
        return handler(args)
    except (ConfigError, ShapeMismatch) as exc:
        print(f"aqmsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"aqmsim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
