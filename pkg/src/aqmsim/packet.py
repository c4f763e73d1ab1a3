from __future__ import annotations

from collections import deque

TCP_HEADER_BYTES = 40


class Packet:
    __slots__ = ("flow", "seq", "size", "payload", "sent_ts", "enq_ts", "retx")

    def __init__(self, flow, seq: int, size: int, payload: int, sent_ts: int, retx: bool = False):
        self.flow = flow
        self.seq = seq
        self.size = size
        self.payload = payload
        self.sent_ts = sent_ts
        self.enq_ts = 0
        self.retx = retx

    def __repr__(self) -> str:
        label = getattr(self.flow, "label", None)
        return f"Packet(flow={label!r}, seq={self.seq}, size={self.size})"


class FifoBuffer:
    """Byte-accounted FIFO of packets."""

    __slots__ = ("_q", "bytes")

    def __init__(self) -> None:
        self._q: deque[Packet] = deque()
        self.bytes = 0

    def append(self, pkt: Packet) -> None:
        self._q.append(pkt)
        self.bytes += pkt.size

    def popleft(self) -> Packet | None:
        if not self._q:
            return None
        pkt = self._q.popleft()
        self.bytes -= pkt.size
        return pkt

    def __len__(self) -> int:
        return len(self._q)

    def __bool__(self) -> bool:
        return bool(self._q)

    def __iter__(self):
        return iter(self._q)
