"""Discrete-event core: integer-nanosecond clock and a stable event heap."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Any, Callable

NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000


class SchedulingInPast(ValueError):
    """Raised when an event is scheduled before the current clock."""


class EventHandle:
    """Reference to a scheduled event, used for cancellation."""

    __slots__ = ("_entry",)

    def __init__(self, entry: list):
        self._entry = entry

    @property
    def fire_at(self) -> int:
        return self._entry[0]

    @property
    def pending(self) -> bool:
        return self._entry[2] is not None


@dataclass(frozen=True)
class SimSummary:
    clock_ns: int
    events_processed: int


class Engine:
    """Single-threaded event scheduler.

    Heap entries are ``[fire_at, seq, action, arg]`` lists; ``action`` is
    set to ``None`` once the entry has fired or been cancelled, so stale
    entries are skipped when popped.
    """

    def __init__(self) -> None:
        self.now = 0
        self._heap: list[list] = []
        self._seq = 0
        self.events_processed = 0

    def schedule(self, fire_at: int, action: Callable[[Any], Any], arg: Any = None) -> EventHandle:
        if fire_at < self.now:
            raise SchedulingInPast(f"fire_at={fire_at} < now={self.now}")
        entry = [fire_at, self._seq, action, arg]
        self._seq += 1
        heapq.heappush(self._heap, entry)
        return EventHandle(entry)

    def post(self, fire_at: int, action: Callable[[Any], Any], arg: Any = None) -> None:
        """Like :meth:`schedule` but without a handle (hot path)."""
        if fire_at < self.now:
            raise SchedulingInPast(f"fire_at={fire_at} < now={self.now}")
        heapq.heappush(self._heap, [fire_at, self._seq, action, arg])
        self._seq += 1

    def schedule_in(self, delay: int, action: Callable[[Any], Any], arg: Any = None) -> EventHandle:
        return self.schedule(self.now + delay, action, arg)

    @staticmethod
    def cancel(handle: EventHandle) -> bool:
        entry = handle._entry
        if entry[2] is None:
            return False
        entry[2] = None
        entry[3] = None
        return True

    def pending(self) -> int:
        return sum(1 for e in self._heap if e[2] is not None)

    def run_until(self, end: int) -> SimSummary:
        heap = self._heap
        pop = heapq.heappop
        processed = 0
        while heap and heap[0][0] <= end:
            entry = pop(heap)
            action = entry[2]
            if action is None:
                continue
            entry[2] = None
            self.now = entry[0]
            action(entry[3])
            processed += 1
        if end > self.now:
            self.now = end
        self.events_processed += processed
        return SimSummary(self.now, self.events_processed)
