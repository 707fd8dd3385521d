"""Time-ordered event queue for the single-threaded simulation loop.

Events dequeue in (time, class, sequence) order. Class ordering at equal
timestamps is load-bearing:

  SAMPLE  - metric sampling observes state strictly before anything else
            occurring at the same instant, so a row at minute m covers the
            half-open window [0, m).
  MESSAGE - message deliveries run before timer events at equal time, which
            makes "feedback arrives exactly at the deadline tick" resolve in
            favour of the feedback.
  TIMER   - deadlines, periodic generators, scheduled robot work.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Optional

SAMPLE = 0
MESSAGE = 1
TIMER = 2


class SchedulingError(Exception):
    pass


@dataclass
class EventHandle:
    t_ms: int
    klass: int
    seq: int
    callback: Callable[[], None] = field(compare=False)
    label: str = ""
    cancelled: bool = False


class Scheduler:
    """Priority queue of callbacks over integer-millisecond logical time."""

    def __init__(self):
        self.now: int = 0
        self._heap: list[tuple[int, int, int, EventHandle]] = []
        self._seq = 0

    def schedule(self, t_ms: int, klass: int, callback: Callable[[], None], label: str = "") -> EventHandle:
        if t_ms < self.now:
            raise SchedulingError(f"cannot schedule event at t={t_ms} before now={self.now}")
        self._seq += 1
        handle = EventHandle(t_ms, klass, self._seq, callback, label)
        heapq.heappush(self._heap, (t_ms, klass, self._seq, handle))
        return handle

    def schedule_in(self, delay_ms: int, klass: int, callback: Callable[[], None], label: str = "") -> EventHandle:
        return self.schedule(self.now + delay_ms, klass, callback, label)

    def cancel(self, handle: Optional[EventHandle]) -> None:
        if handle is not None:
            handle.cancelled = True

    def peek_next_t(self) -> Optional[int]:
        while self._heap and self._heap[0][3].cancelled:
            heapq.heappop(self._heap)
        return self._heap[0][0] if self._heap else None

    def step(self) -> bool:
        """Run the next live event; False when the queue is empty."""
        while self._heap:
            _, _, _, handle = heapq.heappop(self._heap)
            if handle.cancelled:
                continue
            self.now = handle.t_ms
            handle.callback()
            return True
        return False

    def run_until(
        self,
        end_ms: int,
        after_each: Optional[Callable[[], None]] = None,
    ) -> None:
        """Run every live event with t <= end_ms, then advance now to end_ms."""
        while True:
            next_t = self.peek_next_t()
            if next_t is None or next_t > end_ms:
                break
            self.step()
            if after_each is not None:
                after_each()
        self.now = max(self.now, end_ms)
