"""Bottleneck queue disciplines: DropTail, PIE, MADPIE and CoDel.

Each discipline is split into pure decision functions operating on a small
state object (easy to test in isolation) and a queue class that the
bottleneck link drives through ``enqueue`` / ``dequeue`` / ``tick``.
All times are integer nanoseconds; controller arithmetic converts delays
to seconds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from .engine import NS_PER_MS, NS_PER_S
from .packet import FifoBuffer, Packet

MTU_BYTES = 1500


class DropCause(str, Enum):
    RANDOM = "RandomDrop"
    DETERMINISTIC = "DeterministicDrop"
    OVERFLOW = "BufferOverflow"
    CODEL = "CodelDrop"


@dataclass(frozen=True)
class DropRecord:
    at: int
    cause: DropCause
    queuing_delay_at_drop: int
    flow_id: str


@dataclass
class PieConfig:
    target: int = 20 * NS_PER_MS
    update_interval: int = 30 * NS_PER_MS
    alpha: float = 0.125
    beta: float = 1.25
    max_burst: int = 100 * NS_PER_MS
    prob_range_scaling: bool = True
    estimator: str = "backlog"  # or "departure"

    def __post_init__(self) -> None:
        if self.target <= 0 or self.update_interval <= 0:
            raise ValueError("PIE target and update interval must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("PIE gains must be non-negative")
        if self.max_burst < 0:
            raise ValueError("max_burst must be non-negative")
        if self.estimator not in ("backlog", "departure"):
            raise ValueError(f"unknown delay estimator {self.estimator!r}")


@dataclass
class PieState:
    p_drop: float = 0.0
    est_delay: int = 0
    est_delay_old: int = 0
    burst_remaining: int = 0
    queue_bytes: int = 0

    @classmethod
    def initial(cls, cfg: PieConfig) -> "PieState":
        return cls(burst_remaining=cfg.max_burst)


@dataclass
class MadpieConfig:
    pie: PieConfig = field(default_factory=PieConfig)
    tau_dd: float = 30 * NS_PER_MS  # may be math.inf

    def __post_init__(self) -> None:
        if self.tau_dd < self.pie.target:
            raise ValueError("tau_dd must not be below the PIE target")


@dataclass
class MadpieState:
    pie: PieState
    p_max: int = 0

    @classmethod
    def initial(cls, cfg: MadpieConfig) -> "MadpieState":
        return cls(pie=PieState.initial(cfg.pie))


@dataclass
class CodelConfig:
    target: int = 5 * NS_PER_MS
    interval: int = 100 * NS_PER_MS
    mtu: int = MTU_BYTES

    def __post_init__(self) -> None:
        if not 0 < self.target < self.interval:
            raise ValueError("CoDel requires 0 < target < interval")


@dataclass
class CodelState:
    dropping: bool = False
    drop_count: int = 0
    last_count: int = 0
    next_drop_at: int = 0
    first_above_at: Optional[int] = None


# -- DropTail ---------------------------------------------------------------

def droptail_enqueue_decision(queue_bytes: int, size: int, capacity: int) -> Optional[DropCause]:
    if queue_bytes + size > capacity:
        return DropCause.OVERFLOW
    return None


# -- PIE --------------------------------------------------------------------

def pie_estimate_delay(queue_bytes: int, drain_rate: float) -> int:
    """Backlog-based delay estimate in ns, rounded to nearest."""
    if drain_rate <= 0:
        raise ValueError("drain_rate must be positive")
    return int(round(queue_bytes * 8 * NS_PER_S / drain_rate))


def _gain_scale(p_drop: float) -> float:
    if p_drop < 0.01:
        return 0.125
    if p_drop < 0.1:
        return 0.5
    return 1.0


def pie_update(state: PieState, cfg: PieConfig) -> PieState:
    """One controller step; mutates and returns ``state``."""
    alpha, beta = cfg.alpha, cfg.beta
    if cfg.prob_range_scaling:
        scale = _gain_scale(state.p_drop)
        alpha *= scale
        beta *= scale
    err = (state.est_delay - cfg.target) / NS_PER_S
    trend = (state.est_delay - state.est_delay_old) / NS_PER_S
    p = state.p_drop + alpha * err + beta * trend
    state.p_drop = min(max(p, 0.0), 1.0)

    half = cfg.target / 2
    if state.p_drop == 0.0 and state.est_delay < half and state.est_delay_old < half:
        state.burst_remaining = cfg.max_burst
    else:
        state.burst_remaining = max(0, state.burst_remaining - cfg.update_interval)
    state.est_delay_old = state.est_delay
    return state


def pie_enqueue_decision(state: PieState, size: int, capacity: int, u: float) -> Optional[DropCause]:
    if state.queue_bytes + size > capacity:
        return DropCause.OVERFLOW
    if state.burst_remaining <= 0 and u <= state.p_drop:
        return DropCause.RANDOM
    state.queue_bytes += size
    return None


# -- MADPIE -----------------------------------------------------------------

def madpie_update(state: MadpieState, cfg: MadpieConfig) -> MadpieState:
    pie_update(state.pie, cfg.pie)
    if state.pie.est_delay > cfg.tau_dd:
        state.p_max = 1
    return state


def madpie_enqueue_decision(state: MadpieState, size: int, capacity: int, u: float) -> Optional[DropCause]:
    cause = pie_enqueue_decision(state.pie, size, capacity, u)
    if cause is not None:
        return cause
    if state.p_max == 1:
        state.p_max = 0
        state.pie.queue_bytes -= size
        return DropCause.DETERMINISTIC
    return None


# -- CoDel ------------------------------------------------------------------

def codel_control_law(t: int, interval: int, count: int) -> int:
    """Next drop time; the spacing is rounded to the nearest ns."""
    return t + int(round(interval / math.sqrt(count)))


def _codel_pop(state: CodelState, cfg: CodelConfig, buf: FifoBuffer, now: int):
    pkt = buf.popleft()
    if pkt is None:
        state.first_above_at = None
        return None, False, 0
    sojourn = now - pkt.enq_ts
    ok_to_drop = False
    if sojourn < cfg.target or buf.bytes <= cfg.mtu:
        state.first_above_at = None
    elif state.first_above_at is None:
        state.first_above_at = now + cfg.interval
    elif now >= state.first_above_at:
        ok_to_drop = True
    return pkt, ok_to_drop, sojourn


def codel_dequeue(state: CodelState, cfg: CodelConfig, buf: FifoBuffer, now: int):
    """Head-drop control law.

    Returns ``(delivered, dropped)`` where ``delivered`` is the packet handed
    to the link (or ``None`` when the buffer drained) and ``dropped`` lists
    ``(packet, sojourn_ns)`` pairs removed on the way.
    """
    dropped: list[tuple[Packet, int]] = []
    pkt, ok_to_drop, sojourn = _codel_pop(state, cfg, buf, now)
    if pkt is None:
        state.dropping = False
        return None, dropped
    if state.dropping:
        if not ok_to_drop:
            state.dropping = False
        while state.dropping and now >= state.next_drop_at:
            dropped.append((pkt, sojourn))
            state.drop_count += 1
            pkt, ok_to_drop, sojourn = _codel_pop(state, cfg, buf, now)
            if pkt is None or not ok_to_drop:
                state.dropping = False
            else:
                state.next_drop_at = codel_control_law(state.next_drop_at, cfg.interval, state.drop_count)
    elif ok_to_drop:
        dropped.append((pkt, sojourn))
        state.drop_count += 1
        pkt, ok_to_drop, sojourn = _codel_pop(state, cfg, buf, now)
        state.dropping = True
        # resume near the previous cycle's drop rate if it ended recently
        delta = state.drop_count - state.last_count
        if delta > 1 and now - state.next_drop_at < 16 * cfg.interval:
            state.drop_count = delta
        else:
            state.drop_count = 1
        state.next_drop_at = codel_control_law(now, cfg.interval, state.drop_count)
        state.last_count = state.drop_count
    return pkt, dropped


# -- queue objects driven by the bottleneck link ----------------------------

DropSink = Callable[[Packet, DropCause, int, int], None]


class BaseQueue:
    name = "base"
    update_interval: Optional[int] = None

    def __init__(self, capacity: int, drain_rate: float):
        self.capacity = capacity
        self.drain_rate = drain_rate
        self.buf = FifoBuffer()
        self.on_drop: DropSink = lambda pkt, cause, delay, now: None

    @property
    def backlog_bytes(self) -> int:
        return self.buf.bytes

    def backlog_delay(self) -> int:
        return pie_estimate_delay(self.buf.bytes, self.drain_rate)

    def enqueue(self, pkt: Packet, now: int, u: float) -> Optional[DropCause]:
        raise NotImplementedError

    def dequeue(self, now: int) -> Optional[Packet]:
        return self.buf.popleft()

    def tick(self, now: int) -> None:
        pass


class DropTailQueue(BaseQueue):
    name = "dt"

    def enqueue(self, pkt, now, u):
        cause = droptail_enqueue_decision(self.buf.bytes, pkt.size, self.capacity)
        if cause is None:
            pkt.enq_ts = now
            self.buf.append(pkt)
        return cause


class _DepartureRate:
    """Measured drain rate, sampled over cycles of at least ``threshold`` bytes."""

    def __init__(self, initial_rate: float, threshold: int = 16_384):
        self.rate = initial_rate
        self.threshold = threshold
        self._start: Optional[int] = None
        self._count = 0

    def on_dequeue(self, backlog: int, size: int, now: int) -> None:
        if self._start is None:
            if backlog >= self.threshold:
                self._start, self._count = now, 0
            return
        self._count += size
        if self._count >= self.threshold:
            elapsed = now - self._start
            if elapsed > 0:
                sample = self._count * 8 * NS_PER_S / elapsed
                self.rate = 0.5 * self.rate + 0.5 * sample
            self._start = now if backlog >= self.threshold else None
            self._count = 0


class PieQueue(BaseQueue):
    name = "pie"

    def __init__(self, capacity: int, drain_rate: float, cfg: Optional[PieConfig] = None):
        super().__init__(capacity, drain_rate)
        self.cfg = cfg or PieConfig()
        self.update_interval = self.cfg.update_interval
        self.state = self._initial_state()
        self._rate = _DepartureRate(drain_rate) if self.cfg.estimator == "departure" else None

    def _initial_state(self):
        return PieState.initial(self.cfg)

    @property
    def pie_state(self) -> PieState:
        return self.state

    def _decide(self, size: int, u: float) -> Optional[DropCause]:
        return pie_enqueue_decision(self.state, size, self.capacity, u)

    def _update(self) -> None:
        pie_update(self.state, self.cfg)

    def enqueue(self, pkt, now, u):
        cause = self._decide(pkt.size, u)
        if cause is None:
            pkt.enq_ts = now
            self.buf.append(pkt)
        return cause

    def dequeue(self, now):
        pkt = self.buf.popleft()
        if pkt is not None:
            self.pie_state.queue_bytes -= pkt.size
            if self._rate is not None:
                self._rate.on_dequeue(self.buf.bytes, pkt.size, now)
        return pkt

    def tick(self, now):
        rate = self._rate.rate if self._rate is not None else self.drain_rate
        self.pie_state.est_delay = pie_estimate_delay(self.pie_state.queue_bytes, rate)
        self._update()


class MadpieQueue(PieQueue):
    name = "madpie"

    def __init__(self, capacity: int, drain_rate: float, cfg: Optional[MadpieConfig] = None):
        self.mcfg = cfg or MadpieConfig()
        super().__init__(capacity, drain_rate, self.mcfg.pie)

    def _initial_state(self):
        return MadpieState.initial(self.mcfg)

    @property
    def pie_state(self) -> PieState:
        return self.state.pie

    def _decide(self, size, u):
        return madpie_enqueue_decision(self.state, size, self.capacity, u)

    def _update(self):
        madpie_update(self.state, self.mcfg)


class CodelQueue(BaseQueue):
    name = "codel"

    def __init__(self, capacity: int, drain_rate: float, cfg: Optional[CodelConfig] = None):
        super().__init__(capacity, drain_rate)
        self.cfg = cfg or CodelConfig()
        self.state = CodelState()

    def enqueue(self, pkt, now, u):
        cause = droptail_enqueue_decision(self.buf.bytes, pkt.size, self.capacity)
        if cause is None:
            pkt.enq_ts = now
            self.buf.append(pkt)
        return cause

    def dequeue(self, now):
        pkt, dropped = codel_dequeue(self.state, self.cfg, self.buf, now)
        for victim, sojourn in dropped:
            self.on_drop(victim, DropCause.CODEL, sojourn, now)
        return pkt
