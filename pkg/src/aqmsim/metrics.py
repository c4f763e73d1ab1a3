"""Measurement taps, per-run reduction and drop attribution."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .aqm import DropCause, DropRecord
from .engine import NS_PER_S

SCHEMA_VERSION = 1
REPORT_PERCENTILES = (5, 25, 50, 75, 90, 95, 99)
DROP_PERCENTILES = (5, 50, 95)
CAUSE_KEYS = {
    DropCause.DETERMINISTIC: "DD",
    DropCause.RANDOM: "RD",
    DropCause.OVERFLOW: "BO",
    DropCause.CODEL: "CoDel",
}
_CAUSES = list(DropCause)
_CAUSE_CODE = {c: i for i, c in enumerate(_CAUSES)}


class EmptySeries(ValueError):
    pass


def percentile(samples: Sequence, q: float):
    """Nearest-rank percentile of an already sorted series (``q`` in [0, 100])."""
    if not 0 <= q <= 100:
        raise ValueError("q must be in [0, 100]")
    if len(samples) == 0:
        raise EmptySeries("percentile of an empty series")
    return kernels.nearest_rank(np.asarray(samples), [q])[0].item()


def percentiles(sorted_samples: np.ndarray, qs: Iterable[float] = REPORT_PERCENTILES) -> dict:
    qs = list(qs)
    if len(sorted_samples) == 0:
        raise EmptySeries("percentile of an empty series")
    vals = kernels.nearest_rank(sorted_samples, qs)
    return {f"p{q:g}": v.item() for q, v in zip(qs, vals)}


def cdf_export(samples) -> list[tuple]:
    """(value, cumulative fraction) at each distinct value."""
    arr = np.sort(np.asarray(samples))
    if arr.shape[0] == 0:
        raise EmptySeries("cdf of an empty series")
    vals, frac = kernels.ecdf(arr)
    return [(v.item(), float(f)) for v, f in zip(vals, frac)]


def utilization_sample(bits: float, link_rate: float, seconds: float = 1.0) -> float:
    if link_rate <= 0:
        raise ValueError("link_rate must be positive")
    return bits / (link_rate * seconds)


@dataclass
class DropAttribution:
    n_DD: int = 0
    n_RD: int = 0
    n_BO: int = 0
    n_CoDel: int = 0
    delay_at_drop: dict = field(default_factory=dict)

    @property
    def n_tot(self) -> int:
        return self.n_DD + self.n_RD + self.n_BO + self.n_CoDel

    def ratio(self, key: str) -> Optional[float]:
        if self.n_tot == 0:
            return None
        return getattr(self, f"n_{key}") / self.n_tot

    @property
    def r_DD(self):
        return self.ratio("DD")

    @property
    def r_RD(self):
        return self.ratio("RD")

    @property
    def r_BO(self):
        return self.ratio("BO")

    @property
    def r_CoDel(self):
        return self.ratio("CoDel")

    def as_dict(self) -> dict:
        d = {f"n_{k}": getattr(self, f"n_{k}") for k in ("DD", "RD", "BO", "CoDel")}
        d["n_tot"] = self.n_tot
        for k in ("DD", "RD", "BO", "CoDel"):
            d[f"r_{k}"] = self.ratio(k)
        d["delay_at_drop_ns"] = self.delay_at_drop
        return d


def attribute_drops(records: Iterable[DropRecord]) -> DropAttribution:
    by_cause: dict[DropCause, list[int]] = {c: [] for c in DropCause}
    for r in records:
        by_cause[DropCause(r.cause)].append(r.queuing_delay_at_drop)
    return _attribution(by_cause)


def _attribution(by_cause: dict) -> DropAttribution:
    att = DropAttribution()
    for cause, delays in by_cause.items():
        key = CAUSE_KEYS[cause]
        setattr(att, f"n_{key}", len(delays))
        if len(delays):
            arr = np.sort(np.asarray(delays, dtype=np.int64))
            att.delay_at_drop[key] = percentiles(arr, DROP_PERCENTILES)
    return att


class MetricCollector:
    """Append-only taps filled by the simulation's hot path."""

    def __init__(self) -> None:
        self.classes: list[str] = []
        # bottleneck queuing delay, per transmitted packet
        self.qd_t: list[int] = []
        self.qd_v: list[int] = []
        self.qd_c: list[int] = []
        # bottleneck transmission completions
        self.dep_t: list[int] = []
        self.dep_b: list[int] = []
        # receiver-side unique payload deliveries
        self.gp_t: list[int] = []
        self.gp_b: list[int] = []
        self.gp_c: list[int] = []
        # receiver-side one-way delay
        self.owd_t: list[int] = []
        self.owd_v: list[int] = []
        self.owd_c: list[int] = []
        self.drops: list[tuple] = []
        self.tick_times: list[int] = []

    def class_id(self, name: str) -> int:
        if name not in self.classes:
            self.classes.append(name)
        return self.classes.index(name)

    def record_drop(self, at: int, cause: DropCause, delay: int, flow: str, epoch: int) -> None:
        self.drops.append((at, cause, delay, flow, epoch))


def _arr(x) -> np.ndarray:
    return np.asarray(x, dtype=np.int64)


@dataclass
class RunResult:
    """Reduced outputs of one simulation run."""

    config: object
    classes: list
    qdelay_t: np.ndarray
    qdelay_v: np.ndarray
    qdelay_c: np.ndarray
    tx_start: np.ndarray
    tx_end: np.ndarray
    tx_bytes: np.ndarray
    util: np.ndarray
    goodput: dict  # class -> per-second bps array
    owd_t: np.ndarray
    owd_v: np.ndarray
    owd_c: np.ndarray
    drop_records: list
    drop_epochs: np.ndarray
    tick_times: np.ndarray
    downloads: list
    counters: dict
    events: int
    clock_ns: int
    _summary: Optional[dict] = None

    @classmethod
    def build(cls, cfg, m: MetricCollector, downloads, counters, events, clock_ns) -> "RunResult":
        n_sec = int(cfg.duration // NS_PER_S)
        dep_t = _arr(m.dep_t)
        tx_start = _arr(m.qd_t[: len(m.dep_t)])
        busy = kernels.busy_per_bin(tx_start, dep_t, NS_PER_S, n_sec)
        util = busy / NS_PER_S
        gp_t, gp_b, gp_c = _arr(m.gp_t), np.asarray(m.gp_b, dtype=np.float64), _arr(m.gp_c)
        goodput = {}
        for i, name in enumerate(m.classes):
            sel = gp_c == i
            goodput[name] = kernels.bin_sum(gp_t[sel], gp_b[sel] * 8.0, NS_PER_S, n_sec)
        drops = [DropRecord(t, c, d, f) for (t, c, d, f, _) in m.drops]
        return cls(
            config=cfg, classes=list(m.classes),
            qdelay_t=_arr(m.qd_t), qdelay_v=_arr(m.qd_v), qdelay_c=_arr(m.qd_c),
            tx_start=tx_start, tx_end=dep_t, tx_bytes=_arr(m.dep_b),
            util=util, goodput=goodput,
            owd_t=_arr(m.owd_t), owd_v=_arr(m.owd_v), owd_c=_arr(m.owd_c),
            drop_records=drops, drop_epochs=_arr([e for *_, e in m.drops]),
            tick_times=_arr(m.tick_times), downloads=downloads, counters=counters,
            events=events, clock_ns=clock_ns,
        )

    # -- selections -----------------------------------------------------------

    def class_ids(self, prefix: str) -> list[int]:
        return [i for i, c in enumerate(self.classes) if c == prefix or c.startswith(prefix + "-")]

    def qdelay_of(self, prefix: Optional[str] = None) -> np.ndarray:
        if prefix is None:
            return self.qdelay_v
        return self.qdelay_v[np.isin(self.qdelay_c, self.class_ids(prefix))]

    def drops_of(self, cause: DropCause) -> list[DropRecord]:
        return [d for d in self.drop_records if d.cause == cause]

    @property
    def attribution(self) -> DropAttribution:
        return attribute_drops(self.drop_records)

    def conservation_ok(self) -> bool:
        c = self.counters
        return (c["arrivals"] == c["enqueued"] + c["rejected"]
                and c["enqueued"] == c["delivered"] + c["dropped_in_queue"] + c["resident"])

    def completed_downloads(self, size: Optional[int] = None, prefix: Optional[str] = None) -> np.ndarray:
        out = [r.duration for r in self.downloads
               if r.duration is not None and (size is None or r.size_bytes == size)
               and (prefix is None or r.flow.startswith(prefix))]
        return np.asarray(out, dtype=np.int64)

    # -- summary --------------------------------------------------------------

    def summary(self) -> dict:
        if self._summary is None:
            self._summary = build_summary(self)
        return self._summary


def delay_stats(samples: np.ndarray) -> dict:
    if samples.shape[0] == 0:
        return {"count": 0}
    s = np.sort(samples)
    d = {"count": int(s.shape[0]), "mean_ns": float(s.mean()), "min_ns": int(s[0]), "max_ns": int(s[-1])}
    d.update({k + "_ns": v for k, v in percentiles(s).items()})
    return d


def download_stats(durations: np.ndarray) -> dict:
    if durations.shape[0] == 0:
        return {"count": 0}
    s = np.sort(durations)
    d = {"count": int(s.shape[0]), "mean_ns": float(s.mean())}
    d.update({k + "_ns": v for k, v in percentiles(s, (5, 25, 50, 75, 95)).items()})
    return d


def build_summary(r: RunResult) -> dict:
    from .config import config_to_dict

    apps = sorted({c.split("-")[0] for c in r.classes})
    qdelay_by_class = {c: delay_stats(r.qdelay_of(c)) for c in r.classes}
    for app in apps:
        qdelay_by_class.setdefault(app, delay_stats(r.qdelay_of(app)))
    sizes = sorted({d.size_bytes for d in r.downloads})
    sf_groups = sorted({d.flow.split("#")[0] for d in r.downloads})
    downloads = {
        "completed": sum(1 for d in r.downloads if d.duration is not None),
        "truncated": sum(1 for d in r.downloads if d.duration is None),
        "by_size": {str(s): download_stats(r.completed_downloads(s)) for s in sizes},
        "by_group_size": {g: {str(s): download_stats(r.completed_downloads(s, g)) for s in sizes}
                          for g in sf_groups},
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "percentile_method": "nearest-rank",
        "scenario": config_to_dict(r.config),
        "events": r.events,
        "clock_ns": r.clock_ns,
        "qdelay": delay_stats(r.qdelay_v),
        "qdelay_by_class": qdelay_by_class,
        "utilization": {"mean": float(r.util.mean()) if r.util.size else 0.0,
                        "samples": int(r.util.size)},
        "goodput_bps": {c: float(v.mean()) if v.size else 0.0 for c, v in r.goodput.items()},
        "drops": r.attribution.as_dict(),
        "downloads": downloads,
        "conservation": dict(r.counters, ok=r.conservation_ok()),
    }
