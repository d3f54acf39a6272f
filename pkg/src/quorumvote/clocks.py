"""Clock abstraction: simulated logical time for deterministic runs,
wall time with timers for networked mode.

Grace periods, session expiries, and scheduled self-tests all go through
a Clock so a ten-minute sequence is testable in milliseconds.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time
from typing import Callable, Protocol


class Clock(Protocol):
    def now(self) -> float: ...

    def schedule(self, delay: float, callback: Callable[[], None]) -> int: ...

    def cancel(self, handle: int) -> None: ...


class SimClock:
    """Logical clock: time only moves when advance() is called, and due
    callbacks run in timestamp order (ties broken by scheduling order)."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = start
        self._queue: list[tuple[float, int, Callable[[], None]]] = []
        self._counter = itertools.count()
        self._cancelled: set[int] = set()

    def now(self) -> float:
        return self._now

    def schedule(self, delay: float, callback: Callable[[], None]) -> int:
        handle = next(self._counter)
        heapq.heappush(self._queue, (self._now + max(0.0, delay), handle, callback))
        return handle

    def cancel(self, handle: int) -> None:
        self._cancelled.add(handle)

    def advance(self, seconds: float) -> None:
        """Move time forward, firing every callback that comes due."""
        target = self._now + seconds
        while self._queue and self._queue[0][0] <= target:
            due, handle, callback = heapq.heappop(self._queue)
            self._now = max(self._now, due)
            if handle in self._cancelled:
                self._cancelled.discard(handle)
                continue
            callback()
        self._now = target

    def run_until_idle(self) -> None:
        while self._queue:
            due, handle, callback = heapq.heappop(self._queue)
            self._now = max(self._now, due)
            if handle in self._cancelled:
                self._cancelled.discard(handle)
                continue
            callback()


class WallClock:
    """Real time; scheduling uses daemon timers."""

    def __init__(self) -> None:
        self._timers: dict[int, threading.Timer] = {}
        self._counter = itertools.count()
        self._lock = threading.Lock()

    def now(self) -> float:
        return time.time()

    def schedule(self, delay: float, callback: Callable[[], None]) -> int:
        handle = next(self._counter)
        timer = threading.Timer(max(0.0, delay), callback)
        timer.daemon = True
        with self._lock:
            self._timers[handle] = timer
        timer.start()
        return handle

    def cancel(self, handle: int) -> None:
        with self._lock:
            timer = self._timers.pop(handle, None)
        if timer is not None:
            timer.cancel()


class ClockView:
    """A component's view of a shared clock, with an injectable offset
    (used by fault plans to skew one component's idea of the time)."""

    def __init__(self, base: Clock, offset: float = 0.0) -> None:
        self.base = base
        self.offset = offset

    def now(self) -> float:
        return self.base.now() + self.offset

    def schedule(self, delay: float, callback: Callable[[], None]) -> int:
        return self.base.schedule(delay, callback)

    def cancel(self, handle: int) -> None:
        self.base.cancel(handle)
