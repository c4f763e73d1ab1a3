"""Traffic sources: a packet-granular CUBIC/SACK TCP model, CBR over UDP, and
the short-file download application.

Windows are counted in packets. The receiver keeps exact SACK state and
returns one ACK per data packet; there are no handshake packets (connection
setup is charged as one base RTT by the short-file application).
"""
from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from .engine import NS_PER_MS, NS_PER_S, Engine
from .packet import TCP_HEADER_BYTES, Packet


@dataclass
class TcpConfig:
    initial_window: int = 10
    mss: int = 1460
    cubic_c: float = 0.4
    cubic_beta: float = 0.7
    min_rto: int = 200 * NS_PER_MS
    initial_rto: int = 1 * NS_PER_S
    max_rto: int = 60 * NS_PER_S
    dupack_threshold: int = 3
    tcp_friendly: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.cubic_beta < 1:
            raise ValueError("cubic_beta must lie in (0, 1)")
        if self.initial_window < 1:
            raise ValueError("initial_window must be >= 1")

    @property
    def wire_size(self) -> int:
        return self.mss + TCP_HEADER_BYTES


def cubic_k(w_max: float, cfg: TcpConfig) -> float:
    """Seconds until the cubic curve climbs back to ``w_max`` after a reduction."""
    return (w_max * (1.0 - cfg.cubic_beta) / cfg.cubic_c) ** (1.0 / 3.0)


def cubic_window(t_since_epoch: float, w_max: float, cfg: TcpConfig) -> float:
    """Window (packets) ``t_since_epoch`` seconds into a congestion epoch."""
    if t_since_epoch < 0:
        raise ValueError("t_since_epoch must be >= 0")
    k = cubic_k(w_max, cfg)
    return cfg.cubic_c * (t_since_epoch - k) ** 3 + w_max


# ACK tuple layout: (cumulative next-expected seq, seq that triggered the ACK,
# echoed send timestamp, echoed retransmission flag)
Ack = tuple


class TcpSender:
    """Sender half of a TCP connection.

    ``transmit`` hands a packet to the network at the current clock.
    ``total_packets=None`` means an unbounded bulk transfer.
    """

    def __init__(self, engine: Engine, cfg: TcpConfig, transmit: Callable[[Packet], None],
                 total_packets: Optional[int] = None, last_payload: Optional[int] = None,
                 label: str = "tcp", cls_id: int = 0, on_finished: Optional[Callable[[], None]] = None):
        self.engine = engine
        self.cfg = cfg
        self.transmit = transmit
        self.total = total_packets
        self.last_payload = last_payload if last_payload is not None else cfg.mss
        self.label = label
        self.cls_id = cls_id
        self.on_finished = on_finished

        self.cwnd = float(cfg.initial_window)
        self.ssthresh = math.inf
        self.w_max = 0.0
        self.epoch_start: Optional[int] = None
        self._k = 0.0
        self._origin = 0.0
        self._w_est = 0.0
        self.min_rtt: Optional[int] = None
        self.srtt: Optional[float] = None
        self.rttvar = 0.0
        self.rto = cfg.initial_rto

        self.snd_una = 0
        self.snd_nxt = 0
        self.highest_sacked = -1
        self.sacked: set[int] = set()
        self.lost: set[int] = set()
        self.retx_out: set[int] = set()
        self._retx_heap: list[int] = []
        self._scan_ptr = 0
        self.in_recovery = False
        self.recovery_point = 0

        self.rto_deadline: Optional[int] = None
        self._timer_at: Optional[int] = None

        self.finished = False
        self.started = False
        self.packets_sent = 0
        self.retransmissions = 0
        self.reductions = 0
        self.timeouts = 0

    # -- queries -------------------------------------------------------------

    @property
    def pipe(self) -> int:
        return (self.snd_nxt - self.snd_una) - len(self.sacked) - len(self.lost) + len(self.retx_out)

    def _has_new_data(self) -> bool:
        return self.total is None or self.snd_nxt < self.total

    # -- sending -------------------------------------------------------------

    def start(self, _=None) -> None:
        self.started = True
        self._send_more()

    def _emit(self, seq: int, retx: bool) -> None:
        now = self.engine.now
        payload = self.last_payload if (self.total is not None and seq == self.total - 1) else self.cfg.mss
        self.transmit(Packet(self, seq, payload + TCP_HEADER_BYTES, payload, now, retx))
        self.packets_sent += 1
        if retx:
            self.retransmissions += 1
        if self.rto_deadline is None:
            self._arm_timer(now + self.rto)

    def _send_more(self) -> None:
        if self.finished:
            return
        heap = self._retx_heap
        while self.pipe < int(self.cwnd):
            seq = -1
            while heap:
                s = heapq.heappop(heap)
                if s in self.lost and s not in self.retx_out and s >= self.snd_una:
                    seq = s
                    break
            if seq >= 0:
                self.retx_out.add(seq)
                self._emit(seq, True)
                if seq == self.snd_una:
                    self._arm_timer(self.engine.now + self.rto)
            elif self._has_new_data():
                seq = self.snd_nxt
                self.snd_nxt += 1
                self._emit(seq, False)
            else:
                break

    # -- RTO timer (lazy: one pending event, deadline moves freely) ----------

    def _arm_timer(self, deadline: int) -> None:
        self.rto_deadline = deadline
        if self._timer_at is None or deadline < self._timer_at:
            self._timer_at = deadline
            self.engine.post(deadline, self._on_timer, deadline)

    def _on_timer(self, fire_at: int) -> None:
        if fire_at != self._timer_at:
            return
        self._timer_at = None
        if self.finished or self.rto_deadline is None:
            return
        if self.engine.now < self.rto_deadline:
            self._timer_at = self.rto_deadline
            self.engine.post(self.rto_deadline, self._on_timer, self.rto_deadline)
            return
        self.on_rto(self.engine.now)

    def on_rto(self, now: int) -> None:
        self.rto_deadline = None
        if self.snd_una >= self.snd_nxt:
            return
        self.timeouts += 1
        self.ssthresh = max(self.cwnd / 2.0, 2.0)
        self.w_max = self.cwnd
        self.cwnd = 1.0
        self.epoch_start = None
        self.in_recovery = True
        self.recovery_point = self.snd_nxt
        self.retx_out.clear()
        self.lost = {s for s in range(self.snd_una, self.snd_nxt) if s not in self.sacked}
        self._retx_heap = sorted(self.lost)
        self._scan_ptr = self.snd_nxt
        self.rto = min(self.rto * 2, self.cfg.max_rto)
        self._send_more()
        if self.rto_deadline is None and self.snd_una < self.snd_nxt:
            self._arm_timer(now + self.rto)

    # -- ACK processing ------------------------------------------------------

    def _rtt_sample(self, rtt: int) -> None:
        if self.min_rtt is None or rtt < self.min_rtt:
            self.min_rtt = rtt
        if self.srtt is None:
            self.srtt = float(rtt)
            self.rttvar = rtt / 2.0
        else:
            self.rttvar = 0.75 * self.rttvar + 0.25 * abs(self.srtt - rtt)
            self.srtt = 0.875 * self.srtt + 0.125 * rtt
        # Linux-style: the floor applies to the variance term, not the sum.
        self.rto = min(int(self.srtt + max(4.0 * self.rttvar, self.cfg.min_rto)), self.cfg.max_rto)

    def _enter_recovery(self) -> None:
        self.in_recovery = True
        self.recovery_point = self.snd_nxt
        self.reductions += 1
        self.w_max = self.cwnd
        self.cwnd = max(self.cwnd * self.cfg.cubic_beta, 2.0)
        self.ssthresh = self.cwnd
        self.epoch_start = None

    def _cubic_increase(self, acked: int, now: int) -> None:
        cfg = self.cfg
        if self.epoch_start is None:
            self.epoch_start = now
            if self.cwnd < self.w_max:
                self._k = ((self.w_max - self.cwnd) / cfg.cubic_c) ** (1.0 / 3.0)
                self._origin = self.w_max
            else:
                self._k = 0.0
                self._origin = self.cwnd
            self._w_est = self.cwnd
        t = (now - self.epoch_start + (self.min_rtt or 0)) / NS_PER_S
        target = self._origin + cfg.cubic_c * (t - self._k) ** 3
        if cfg.tcp_friendly:
            b = cfg.cubic_beta
            self._w_est += 3.0 * (1.0 - b) / (1.0 + b) * acked / self.cwnd
            if self._w_est > target:
                target = self._w_est
        if target > self.cwnd:
            inc = acked * (target - self.cwnd) / self.cwnd
            if inc > 0.5 * acked:
                inc = 0.5 * acked
        else:
            inc = acked * 0.01 / self.cwnd
        self.cwnd += inc

    def on_ack(self, ack: Ack) -> None:
        if self.finished:
            return
        cum, seq, echo_ts, echo_retx = ack
        now = self.engine.now
        delivered = 0
        sacked, lost, retx_out = self.sacked, self.lost, self.retx_out

        advanced = cum > self.snd_una
        if advanced:
            for s in range(self.snd_una, cum):
                if s in sacked:
                    sacked.discard(s)
                else:
                    delivered += 1
                lost.discard(s)
                retx_out.discard(s)
            self.snd_una = cum
        if seq >= cum and seq not in sacked and seq < self.snd_nxt:
            sacked.add(seq)
            delivered += 1
            if seq in lost:
                lost.discard(seq)
                retx_out.discard(seq)
            if seq > self.highest_sacked:
                self.highest_sacked = seq

        if delivered and not echo_retx:
            self._rtt_sample(now - echo_ts)

        # SACK-based loss marking: unsacked packets at least dupthresh below
        # the highest SACKed sequence are lost.
        limit = self.highest_sacked - self.cfg.dupack_threshold
        start = max(self._scan_ptr, self.snd_una)
        newly_lost = False
        if limit >= start:
            for s in range(start, limit + 1):
                if s not in sacked and s not in lost:
                    lost.add(s)
                    heapq.heappush(self._retx_heap, s)
                    newly_lost = True
            self._scan_ptr = limit + 1

        if self.in_recovery and self.snd_una >= self.recovery_point:
            self.in_recovery = False
        if newly_lost and not self.in_recovery:
            self._enter_recovery()
        elif delivered and not self.in_recovery:
            if self.cwnd < self.ssthresh:
                self.cwnd += delivered
            else:
                self._cubic_increase(delivered, now)

        if self.total is not None and self.snd_una >= self.total:
            self.finished = True
            self.rto_deadline = None
            if self.on_finished is not None:
                self.on_finished()
            return

        if self.snd_una >= self.snd_nxt:
            self.rto_deadline = None
        elif advanced:
            self._arm_timer(now + self.rto)
        self._send_more()


class TcpReceiver:
    """Receiver with exact reassembly state; produces one ACK per data packet."""

    __slots__ = ("rcv_nxt", "ooo", "total", "on_complete", "completed_at", "unique_bytes")

    def __init__(self, total_packets: Optional[int] = None,
                 on_complete: Optional[Callable[[int], None]] = None):
        self.rcv_nxt = 0
        self.ooo: set[int] = set()
        self.total = total_packets
        self.on_complete = on_complete
        self.completed_at: Optional[int] = None
        self.unique_bytes = 0

    def on_data(self, pkt: Packet, t_arrive: int) -> tuple[int, Ack]:
        """Returns (new unique payload bytes, ACK)."""
        s = pkt.seq
        new = 0
        if s == self.rcv_nxt:
            new = pkt.payload
            nxt = s + 1
            ooo = self.ooo
            if ooo:
                while nxt in ooo:
                    ooo.discard(nxt)
                    nxt += 1
            self.rcv_nxt = nxt
        elif s > self.rcv_nxt and s not in self.ooo:
            self.ooo.add(s)
            new = pkt.payload
        self.unique_bytes += new
        if (self.total is not None and self.completed_at is None and self.rcv_nxt >= self.total):
            self.completed_at = t_arrive
            if self.on_complete is not None:
                self.on_complete(t_arrive)
        return new, (self.rcv_nxt, s, pkt.sent_ts, pkt.retx)


# -- CBR ----------------------------------------------------------------------

@dataclass
class CbrSpec:
    rate: float = 87_000.0
    packet_size: int = 218


def cbr_gap(spec: CbrSpec) -> int:
    """Inter-departure time in ns, rounded to nearest."""
    return int(round(spec.packet_size * 8 * NS_PER_S / spec.rate))


def cbr_next_departure(spec: CbrSpec, last: int) -> int:
    return last + cbr_gap(spec)


class CbrSource:
    def __init__(self, engine: Engine, spec: CbrSpec, transmit: Callable[[Packet], None],
                 label: str = "cbr", cls_id: int = 0):
        self.engine = engine
        self.spec = spec
        self.transmit = transmit
        self.label = label
        self.cls_id = cls_id
        self.gap = cbr_gap(spec)
        self.seq = 0

    def start(self, _=None) -> None:
        self._tick()

    def _tick(self, _=None) -> None:
        now = self.engine.now
        size = self.spec.packet_size
        self.transmit(Packet(self, self.seq, size, size, now))
        self.seq += 1
        self.engine.post(cbr_next_departure(self.spec, now), self._tick)


class UdpSink:
    __slots__ = ("unique_bytes",)

    def __init__(self) -> None:
        self.unique_bytes = 0

    def on_data(self, pkt: Packet, t_arrive: int) -> tuple[int, None]:
        self.unique_bytes += pkt.payload
        return pkt.payload, None


# -- short-file downloads -----------------------------------------------------

@dataclass
class ShortFlowSpec:
    size_set: tuple = (15_000, 44_000, 73_000, 102_000)
    think_time_mean: float = 9.5  # seconds

    def __post_init__(self) -> None:
        if not self.size_set:
            raise ValueError("size_set must not be empty")
        if self.think_time_mean <= 0:
            raise ValueError("think_time_mean must be positive")


def draw_file_size(rng: random.Random, spec: ShortFlowSpec) -> int:
    return spec.size_set[rng.randrange(len(spec.size_set))]


def draw_think_time(rng: random.Random, spec: ShortFlowSpec) -> int:
    return int(round(rng.expovariate(1.0 / spec.think_time_mean) * NS_PER_S))


def packets_for(size_bytes: int, mss: int) -> tuple[int, int]:
    """(packet count, payload of the last packet)."""
    n = -(-size_bytes // mss)
    return n, size_bytes - (n - 1) * mss


@dataclass
class DownloadRecord:
    flow: str
    size_bytes: int
    start: int
    duration: Optional[int]  # None when truncated at run end

    @property
    def truncated(self) -> bool:
        return self.duration is None


@dataclass
class _Transfer:
    size: int
    start: int
    sender: TcpSender = field(repr=False)


class ShortFlowApp:
    """Repeated downloads separated by exponential think times.

    ``open_connection(total_packets, last_payload, on_complete)`` is provided
    by the network and returns a fresh :class:`TcpSender` wired to a fresh
    receiver.
    """

    def __init__(self, engine: Engine, rng: random.Random, spec: ShortFlowSpec, tcp: TcpConfig,
                 open_connection: Callable, setup_delay: int, label: str = "sf"):
        self.engine = engine
        self.rng = rng
        self.spec = spec
        self.tcp = tcp
        self.open_connection = open_connection
        self.setup_delay = setup_delay
        self.label = label
        self.records: list[DownloadRecord] = []
        self.current: Optional[_Transfer] = None
        self.downloads_started = 0

    def start(self, _=None) -> None:
        self._begin()

    def _begin(self, _=None) -> None:
        now = self.engine.now
        size = draw_file_size(self.rng, self.spec)
        n, last = packets_for(size, self.tcp.mss)
        sender = self.open_connection(n, last, self._on_complete)
        self.current = _Transfer(size, now, sender)
        self.downloads_started += 1
        self.engine.post(now + self.setup_delay, sender.start)

    def _on_complete(self, t_done: int) -> None:
        cur = self.current
        self.records.append(DownloadRecord(self.label, cur.size, cur.start, t_done - cur.start))
        self.current = None
        self.engine.post(t_done + draw_think_time(self.rng, self.spec), self._begin)

    def finalize(self) -> None:
        if self.current is not None:
            cur = self.current
            self.records.append(DownloadRecord(self.label, cur.size, cur.start, None))
            self.current = None
