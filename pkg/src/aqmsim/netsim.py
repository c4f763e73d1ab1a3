"""Dumbbell topology assembly and the scenario presets.

Only the bottleneck (R1 -> R2) is modelled with explicit events. Every other
link is an uncongested FIFO whose departure times are computed analytically
from a ``busy_until`` reservation; the reservation is made in submission
order, which matches time order on all forward links.
"""
from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from .aqm import (
    BaseQueue,
    CodelConfig,
    CodelQueue,
    DropCause,
    DropTailQueue,
    MadpieConfig,
    MadpieQueue,
    PieConfig,
    PieQueue,
)
from .engine import NS_PER_MS, NS_PER_S, Engine
from .metrics import MetricCollector
from .packet import Packet
from .transport import (
    CbrSource,
    CbrSpec,
    ShortFlowApp,
    ShortFlowSpec,
    TcpConfig,
    TcpReceiver,
    TcpSender,
    UdpSink,
)

ACK_BYTES = 40
AQM_NAMES = ("dt", "pie", "madpie", "codel")
PRESETS = ("proof_of_concept", "traffic_mix", "rtt_mix", "custom")


class ConfigError(ValueError):
    pass


def serialization_ns(size_bytes: int, rate_bps: float) -> int:
    return int(round(size_bytes * 8 * NS_PER_S / rate_bps))


@dataclass
class LinkSpec:
    rate: float
    owd: int
    queue_capacity: Optional[int] = None  # None: unlimited
    aqm: str = "dt"


class Link:
    """Uncongested unidirectional FIFO link with analytic departures."""

    __slots__ = ("rate", "owd", "busy_until", "_ser")

    def __init__(self, rate: float, owd: int):
        self.rate = rate
        self.owd = owd
        self.busy_until = 0
        self._ser: dict[int, int] = {}

    def serialization(self, size: int) -> int:
        ser = self._ser.get(size)
        if ser is None:
            ser = self._ser[size] = serialization_ns(size, self.rate)
        return ser

    def transit(self, t_enter: int, size: int) -> int:
        """Arrival time at the far end for a packet offered at ``t_enter``."""
        ser = self._ser.get(size)
        if ser is None:
            ser = self._ser[size] = serialization_ns(size, self.rate)
        start = t_enter if t_enter > self.busy_until else self.busy_until
        done = start + ser
        self.busy_until = done
        return done + self.owd


def link_transmit(link: Link, size: int, now: int) -> int:
    """Delivery time of a ``size``-byte packet offered to ``link`` at ``now``."""
    return link.transit(now, size)


@dataclass
class ScenarioConfig:
    preset: str = "custom"
    aqm: str = "pie"
    owd: int = 48 * NS_PER_MS
    bottleneck_rate: float = 10e6
    access_rate: float = 100e6
    access_owd: int = 1 * NS_PER_MS
    far_access_owd: int = 201 * NS_PER_MS
    n_cbr: int = 0
    n_sf: int = 0
    n_ftp: int = 10
    n_cbr_far: int = 0
    n_sf_far: int = 0
    n_ftp_far: int = 0
    queue_capacity: Optional[int] = None
    duration: int = 300 * NS_PER_S
    seed: int = 1
    replication: int = 0
    start_window: int = 1 * NS_PER_S
    # PIE / MADPIE
    pie_target: int = 20 * NS_PER_MS
    pie_update_interval: int = 30 * NS_PER_MS
    pie_alpha: float = 0.125
    pie_beta: float = 1.25
    pie_max_burst: int = 100 * NS_PER_MS
    pie_prob_scaling: bool = True
    pie_estimator: str = "backlog"
    tau_dd: float = 30 * NS_PER_MS
    # CoDel
    codel_target: int = 5 * NS_PER_MS
    codel_interval: int = 100 * NS_PER_MS
    # applications
    initial_window: int = 10
    mss: int = 1460
    cbr_rate: float = 87_000.0
    cbr_packet_size: int = 218
    sf_sizes: tuple = (15_000, 44_000, 73_000, 102_000)
    sf_think_mean: float = 9.5

    def __post_init__(self) -> None:
        self.sf_sizes = tuple(int(s) for s in self.sf_sizes)

    def validate(self) -> "ScenarioConfig":
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.aqm not in AQM_NAMES:
            raise ConfigError(f"unknown aqm {self.aqm!r}; expected one of {AQM_NAMES}")
        counts = [self.n_cbr, self.n_sf, self.n_ftp, self.n_cbr_far, self.n_sf_far, self.n_ftp_far]
        if any(c < 0 for c in counts):
            raise ConfigError("flow counts must be non-negative")
        if sum(counts) == 0:
            raise ConfigError("scenario has no flows")
        if self.owd < 0 or self.access_owd < 0 or self.far_access_owd < 0:
            raise ConfigError("delays must be non-negative")
        if self.bottleneck_rate <= 0 or self.access_rate <= 0:
            raise ConfigError("link rates must be positive")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        if self.queue_capacity is not None and self.queue_capacity <= 0:
            raise ConfigError("queue_capacity must be positive")
        if self.tau_dd < self.pie_target:
            raise ConfigError("tau_dd must be >= pie_target")
        if not 0 < self.codel_target < self.codel_interval:
            raise ConfigError("codel requires 0 < target < interval")
        if self.pie_estimator not in ("backlog", "departure"):
            raise ConfigError(f"unknown pie_estimator {self.pie_estimator!r}")
        if not self.sf_sizes or self.sf_think_mean <= 0:
            raise ConfigError("invalid short-flow parameters")
        if self.initial_window < 1 or self.mss <= 0:
            raise ConfigError("invalid TCP parameters")
        if self.cbr_rate <= 0 or self.cbr_packet_size <= 0:
            raise ConfigError("invalid CBR parameters")
        return self

    # -- derived quantities --------------------------------------------------

    def base_rtt(self, far: bool = False) -> int:
        access = self.far_access_owd if far else self.access_owd
        return 2 * (access + self.owd + self.access_owd)

    @property
    def has_far_group(self) -> bool:
        return (self.n_cbr_far + self.n_sf_far + self.n_ftp_far) > 0

    @property
    def max_base_rtt(self) -> int:
        rtt = self.base_rtt(False)
        if self.has_far_group:
            rtt = max(rtt, self.base_rtt(True))
        return rtt

    @property
    def bdp_bytes(self) -> int:
        return int(round(self.bottleneck_rate * self.max_base_rtt / NS_PER_S / 8))

    @property
    def capacity_bytes(self) -> int:
        return self.queue_capacity if self.queue_capacity is not None else self.bdp_bytes

    def shape(self) -> dict:
        """Fields that must agree for two runs to be comparable (AQM excluded)."""
        d = asdict(self)
        for k in ("aqm", "seed", "replication"):
            d.pop(k)
        for k in list(d):
            if k.startswith(("pie_", "codel_")) or k == "tau_dd":
                d.pop(k)
        return d

    def with_(self, **kw) -> "ScenarioConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(kw)
        return ScenarioConfig(**d)


PRESET_DEFAULTS: dict[str, dict] = {
    "proof_of_concept": dict(
        n_ftp=10, owd=48 * NS_PER_MS, duration=300 * NS_PER_S, tau_dd=30 * NS_PER_MS,
    ),
    "traffic_mix": dict(
        n_cbr=4, n_sf=20, n_ftp=10, owd=48 * NS_PER_MS, duration=100 * NS_PER_S,
        tau_dd=25 * NS_PER_MS,
    ),
    "rtt_mix": dict(
        n_cbr=4, n_sf=20, n_ftp=2, n_cbr_far=4, n_sf_far=20, n_ftp_far=2,
        owd=48 * NS_PER_MS, far_access_owd=201 * NS_PER_MS, duration=100 * NS_PER_S,
        tau_dd=25 * NS_PER_MS,
    ),
    "custom": {},
}

PRESET_NOTES = {
    "proof_of_concept": "10 CUBIC bulk flows, BDP queue, d in {48, 248} ms, 300 s",
    "traffic_mix": "4 CBR + 20 short-file + 10 bulk flows, d in {48, 148, 248} ms, 100 s",
    "rtt_mix": "4/20/2 CBR/short/bulk flows on a 100 ms path and on a 500 ms path, 100 s",
    "custom": "all fields from the configuration",
}


def preset_config(name: str, **overrides) -> ScenarioConfig:
    if name not in PRESET_DEFAULTS:
        raise ConfigError(f"unknown preset {name!r}")
    kw = dict(PRESET_DEFAULTS[name])
    kw.update(overrides)
    kw["preset"] = name
    return ScenarioConfig(**kw)


def make_queue(cfg: ScenarioConfig) -> BaseQueue:
    cap, rate = cfg.capacity_bytes, cfg.bottleneck_rate
    if cfg.aqm == "dt":
        return DropTailQueue(cap, rate)
    if cfg.aqm == "codel":
        return CodelQueue(cap, rate, CodelConfig(cfg.codel_target, cfg.codel_interval))
    pie = PieConfig(cfg.pie_target, cfg.pie_update_interval, cfg.pie_alpha, cfg.pie_beta,
                    cfg.pie_max_burst, cfg.pie_prob_scaling, cfg.pie_estimator)
    if cfg.aqm == "pie":
        return PieQueue(cap, rate, pie)
    return MadpieQueue(cap, rate, MadpieConfig(pie, cfg.tau_dd))


class Bottleneck:
    """R1's egress: AQM queue plus a store-and-forward transmitter."""

    def __init__(self, engine: Engine, rng: random.Random, queue: BaseQueue, rate: float,
                 owd: int, metrics: MetricCollector):
        self.engine = engine
        self.rng = rng
        self.queue = queue
        self.rate = rate
        self.owd = owd
        self.metrics = metrics
        self.busy = False
        self._ser: dict[int, int] = {}
        self.ticks = 0
        self.arrivals = 0
        self.accepted = 0
        self.rejected = 0
        self.delivered = 0
        self.dropped_in_queue = 0
        queue.on_drop = self._queue_drop
        if queue.update_interval:
            engine.post(queue.update_interval, self._tick)

    def _tick(self, _=None) -> None:
        self.queue.tick(self.engine.now)
        self.ticks += 1
        self.metrics.tick_times.append(self.engine.now)
        self.engine.post(self.engine.now + self.queue.update_interval, self._tick)

    def _queue_drop(self, pkt: Packet, cause: DropCause, delay: int, now: int) -> None:
        self.dropped_in_queue += 1
        self.metrics.record_drop(now, cause, delay, pkt.flow.label, self.ticks)

    def arrive(self, pkt: Packet) -> None:
        now = self.engine.now
        self.arrivals += 1
        q = self.queue
        cause = q.enqueue(pkt, now, self.rng.random())
        if cause is not None:
            self.rejected += 1
            self.metrics.record_drop(now, cause, q.backlog_delay(), pkt.flow.label, self.ticks)
            return
        self.accepted += 1
        if not self.busy:
            self._start_next(now)

    def _start_next(self, now: int) -> None:
        pkt = self.queue.dequeue(now)
        if pkt is None:
            self.busy = False
            return
        self.busy = True
        m = self.metrics
        m.qd_t.append(now)
        m.qd_v.append(now - pkt.enq_ts)
        m.qd_c.append(pkt.flow.cls_id)
        ser = self._ser.get(pkt.size)
        if ser is None:
            ser = self._ser[pkt.size] = serialization_ns(pkt.size, self.rate)
        self.engine.post(now + ser, self._tx_done, pkt)

    def _tx_done(self, pkt: Packet) -> None:
        now = self.engine.now
        self.delivered += 1
        m = self.metrics
        m.dep_t.append(now)
        m.dep_b.append(pkt.size)
        pkt.flow.path.deliver(pkt, now + self.owd)
        self._start_next(now)

    @property
    def resident(self) -> int:
        return len(self.queue.buf)


class Path:
    """Per-flow plumbing: access link in, egress link out, and the ACK return."""

    __slots__ = ("engine", "access", "bottleneck", "egress", "rev_egress", "rev_bottleneck",
                 "rev_access", "sink", "sender", "metrics", "cls_id")

    def __init__(self, engine, access, bottleneck, egress, rev_egress, rev_bottleneck, rev_access,
                 metrics, cls_id):
        self.engine = engine
        self.access = access
        self.bottleneck = bottleneck
        self.egress = egress
        self.rev_egress = rev_egress
        self.rev_bottleneck = rev_bottleneck
        self.rev_access = rev_access
        self.metrics = metrics
        self.cls_id = cls_id
        self.sink = None
        self.sender = None

    def send(self, pkt: Packet) -> None:
        t = self.access.transit(self.engine.now, pkt.size)
        self.engine.post(t, self.bottleneck.arrive, pkt)

    def deliver(self, pkt: Packet, t_r2: int) -> None:
        # The receiver only ever sees this flow's packets, in bottleneck
        # departure order, so its state can be advanced now and stamped with
        # the computed arrival time.
        t = self.egress.transit(t_r2, pkt.size)
        new, ack = self.sink.on_data(pkt, t)
        m = self.metrics
        m.owd_t.append(t)
        m.owd_v.append(t - pkt.sent_ts)
        m.owd_c.append(self.cls_id)
        if new:
            m.gp_t.append(t)
            m.gp_b.append(new)
            m.gp_c.append(self.cls_id)
        if ack is not None:
            ta = self.rev_egress.transit(t, ACK_BYTES)
            ta = self.rev_bottleneck.transit(ta, ACK_BYTES)
            ta = self.rev_access.transit(ta, ACK_BYTES)
            self.engine.post(ta, self.sender.on_ack, ack)


@dataclass
class _HostPair:
    up: Link
    down: Link
    dest_down: Link
    dest_up: Link


class Simulation:
    """A wired, runnable instance of one scenario."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg.validate()
        self.engine = Engine()
        self.rng = random.Random(cfg.seed)
        self.tcp = TcpConfig(initial_window=cfg.initial_window, mss=cfg.mss)
        self.metrics = MetricCollector()
        self.queue = make_queue(cfg)
        self.bottleneck = Bottleneck(self.engine, self.rng, self.queue, cfg.bottleneck_rate, cfg.owd,
                                     self.metrics)
        # ACK direction: uncongested FIFO at access speed
        self.rev_bottleneck = Link(cfg.access_rate, cfg.owd)
        self.bulk_senders: list[TcpSender] = []
        self.cbr_sources: list[CbrSource] = []
        self.sf_apps: list[ShortFlowApp] = []
        self.ran = False
        self._build()

    # -- assembly ------------------------------------------------------------

    def _hosts(self, far: bool) -> _HostPair:
        cfg = self.cfg
        a_owd = cfg.far_access_owd if far else cfg.access_owd
        return _HostPair(up=Link(cfg.access_rate, a_owd), down=Link(cfg.access_rate, a_owd),
                         dest_down=Link(cfg.access_rate, cfg.access_owd),
                         dest_up=Link(cfg.access_rate, cfg.access_owd))

    def _path(self, hosts: _HostPair, cls_id: int) -> Path:
        return Path(self.engine, hosts.up, self.bottleneck, hosts.dest_down, hosts.dest_up,
                    self.rev_bottleneck, hosts.down, self.metrics, cls_id)

    def _start_time(self) -> int:
        return int(self.rng.random() * self.cfg.start_window)

    def _build(self) -> None:
        cfg = self.cfg
        groups = [(False, cfg.n_cbr, cfg.n_sf, cfg.n_ftp)]
        if cfg.has_far_group:
            groups.append((True, cfg.n_cbr_far, cfg.n_sf_far, cfg.n_ftp_far))
        cbr_spec = CbrSpec(cfg.cbr_rate, cfg.cbr_packet_size)
        sf_spec = ShortFlowSpec(cfg.sf_sizes, cfg.sf_think_mean)
        for far, n_cbr, n_sf, n_ftp in groups:
            rtt_ms = self.cfg.base_rtt(far) // NS_PER_MS
            if n_cbr:
                hosts = self._hosts(far)
                cls = self.metrics.class_id(f"CBR-{rtt_ms}")
                for i in range(n_cbr):
                    path = self._path(hosts, cls)
                    src = CbrSource(self.engine, cbr_spec, path.send, f"CBR-{rtt_ms}#{i}", cls)
                    src.path = path
                    path.sink = UdpSink()
                    self.cbr_sources.append(src)
                    self.engine.post(self._start_time(), src.start)
            if n_sf:
                hosts = self._hosts(far)
                cls = self.metrics.class_id(f"SF-{rtt_ms}")
                for i in range(n_sf):
                    label = f"SF-{rtt_ms}#{i}"
                    app = ShortFlowApp(self.engine, self.rng, sf_spec, self.tcp,
                                       self._connector(hosts, cls, label), cfg.base_rtt(far), label)
                    self.sf_apps.append(app)
                    self.engine.post(self._start_time(), app.start)
            if n_ftp:
                hosts = self._hosts(far)
                cls = self.metrics.class_id(f"FTP-{rtt_ms}")
                for i in range(n_ftp):
                    path = self._path(hosts, cls)
                    snd = TcpSender(self.engine, self.tcp, path.send, label=f"FTP-{rtt_ms}#{i}", cls_id=cls)
                    snd.path = path
                    path.sender = snd
                    path.sink = TcpReceiver()
                    self.bulk_senders.append(snd)
                    self.engine.post(self._start_time(), snd.start)

    def _connector(self, hosts: _HostPair, cls: int, label: str):
        def open_connection(total, last_payload, on_complete):
            path = self._path(hosts, cls)
            snd = TcpSender(self.engine, self.tcp, path.send, total, last_payload, label=label, cls_id=cls)
            snd.path = path
            path.sender = snd
            path.sink = TcpReceiver(total, on_complete)
            return snd
        return open_connection

    # -- running -------------------------------------------------------------

    def run(self):
        from .metrics import RunResult

        if self.ran:
            raise RuntimeError("a Simulation instance runs once")
        self.ran = True
        summary = self.engine.run_until(self.cfg.duration)
        for app in self.sf_apps:
            app.finalize()
        downloads = [r for app in self.sf_apps for r in app.records]
        counters = dict(
            arrivals=self.bottleneck.arrivals,
            enqueued=self.bottleneck.accepted,
            rejected=self.bottleneck.rejected,
            delivered=self.bottleneck.delivered,
            dropped_in_queue=self.bottleneck.dropped_in_queue,
            # the packet in service has left the buffer but not the link
            resident=self.bottleneck.resident + (1 if self.bottleneck.busy else 0),
            ticks=self.bottleneck.ticks,
        )
        return RunResult.build(self.cfg, self.metrics, downloads, counters, summary.events_processed,
                               summary.clock_ns)


def build_preset(cfg: ScenarioConfig) -> Simulation:
    return Simulation(cfg)


def run_scenario(cfg: ScenarioConfig):
    return Simulation(cfg).run()
