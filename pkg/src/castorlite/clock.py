"""Time sources for daemons.

Two implementations share one interface: SystemClock wraps wall time
(optionally scaled so "60 s" mounts cost milliseconds in smoke tests),
and VirtualClock is a manually advanced simulation clock.

VirtualClock also carries the quiescence bookkeeping the challenge
harness needs.  A thread doing work at the current instant holds an
activity token; a thread parked on a timer or a clock event does not.
The harness may advance time only when no tokens are held and no wire
message is in flight ("quiescent for the current instant").  Tokens are
transferred to woken sleepers inside advance_to()/Event.set() before
those calls return, so a quiescence probe can never observe the gap
between a wake decision and the woken thread being scheduled.
"""

from __future__ import annotations

import heapq
import itertools
import threading
import time

from castorlite.errors import BadRequest

DEFAULT_QUANTUM = 0.010


class ClockEvent:
    """One-shot event whose waiters park without holding activity tokens."""

    def __init__(self, clock):
        self._clock = clock
        self._set = False
        self._waiters = 0

    def is_set(self) -> bool:
        with self._clock._cv:
            return self._set

    def set(self) -> None:
        clock = self._clock
        with clock._cv:
            if self._set:
                return
            self._set = True
            # Hand a token to every parked waiter before anyone can probe.
            clock._active += self._waiters
            clock._ops += 1
            clock._cv.notify_all()

    def wait(self) -> None:
        clock = self._clock
        with clock._cv:
            if self._set:
                return
            self._waiters += 1
            clock._active -= 1
            clock._ops += 1
            clock._cv.notify_all()
            while not self._set:
                clock._cv.wait()
            self._waiters -= 1
            # Token was granted by set(); just resume.


class _Waiter:
    __slots__ = ("deadline", "ready")

    def __init__(self, deadline: float):
        self.deadline = deadline
        self.ready = False


class VirtualClock:
    """Discrete-event clock: time moves only through advance_to()."""

    mode = "virtual"

    def __init__(self, start: float = 0.0, quantum: float = DEFAULT_QUANTUM):
        self.quantum = quantum
        self._now = float(start)
        self._cv = threading.Condition()
        self._sleepers: list[tuple[float, int, _Waiter]] = []
        self._seq = itertools.count()
        self._active = 0
        self._ops = 0
        # Wire accounting for in-process clusters: frames sent vs consumed.
        self._msgs_out = 0
        self._msgs_in = 0

    # -- time ---------------------------------------------------------------

    def now(self) -> float:
        with self._cv:
            return self._now

    def epoch_us(self) -> int:
        return int(self.now() * 1_000_000)

    def sleep(self, seconds: float) -> None:
        if seconds <= 0:
            return
        self.sleep_until(self.now() + seconds)

    def sleep_until(self, deadline: float) -> None:
        with self._cv:
            if deadline <= self._now:
                return
            waiter = _Waiter(deadline)
            heapq.heappush(self._sleepers, (deadline, next(self._seq), waiter))
            self._active -= 1
            self._ops += 1
            self._cv.notify_all()
            while not waiter.ready:
                self._cv.wait()

    def advance_to(self, t: float) -> float:
        """Move time forward to t, waking due sleepers. Never moves back."""
        with self._cv:
            if t > self._now:
                self._now = t
            while self._sleepers and self._sleepers[0][0] <= self._now:
                _, _, waiter = heapq.heappop(self._sleepers)
                waiter.ready = True
                self._active += 1
                self._ops += 1
            self._cv.notify_all()
            return self._now

    def next_wake(self) -> float | None:
        with self._cv:
            return self._sleepers[0][0] if self._sleepers else None

    # -- events and activity tokens ------------------------------------------

    def new_event(self) -> ClockEvent:
        return ClockEvent(self)

    def enter(self) -> None:
        with self._cv:
            self._active += 1
            self._ops += 1

    def leave(self) -> None:
        with self._cv:
            self._active -= 1
            self._ops += 1
            self._cv.notify_all()

    def working(self):
        return _Working(self)

    def delegated(self):
        """Release the token around a blocking call into another daemon."""
        return _Delegated(self)

    def spawn(self, fn, *args, name: str | None = None) -> threading.Thread:
        """Start a worker thread that holds a token from birth to exit.

        The token is taken in the caller, so there is no instant at which
        the work is pending but invisible to a quiescence probe.
        """
        self.enter()

        def run():
            try:
                fn(*args)
            finally:
                self.leave()

        th = threading.Thread(target=run, name=name, daemon=True)
        th.start()
        return th

    # -- wire accounting -------------------------------------------------------

    def msg_sent(self) -> None:
        with self._cv:
            self._msgs_out += 1

    def msg_consumed(self) -> None:
        with self._cv:
            self._msgs_in += 1
            self._ops += 1

    # -- introspection ----------------------------------------------------------

    def status(self) -> dict:
        with self._cv:
            return {
                "mode": self.mode,
                "now": self._now,
                "active": self._active,
                "next_wake": self._sleepers[0][0] if self._sleepers else None,
                "ops": self._ops,
                "msgs_in_flight": self._msgs_out - self._msgs_in,
            }


class _Working:
    def __init__(self, clock):
        self.clock = clock

    def __enter__(self):
        self.clock.enter()
        return self

    def __exit__(self, *exc):
        self.clock.leave()
        return False


class _Delegated:
    def __init__(self, clock):
        self.clock = clock

    def __enter__(self):
        self.clock.leave()
        return self

    def __exit__(self, *exc):
        self.clock.enter()
        return False


class _SystemEvent:
    def __init__(self):
        self._ev = threading.Event()

    def is_set(self):
        return self._ev.is_set()

    def set(self):
        self._ev.set()

    def wait(self):
        self._ev.wait()


class SystemClock:
    """Wall-clock time; sleep durations are multiplied by `scale`.

    scale=1.0 is real time.  A small scale gives the "realtime throttle"
    used by end-to-end smoke tests: simulated seconds still order events
    but cost little wall time.
    """

    mode = "system"

    def __init__(self, scale: float = 1.0, quantum: float = DEFAULT_QUANTUM):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = scale
        self.quantum = quantum
        self._t0 = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._t0) / self.scale

    def epoch_us(self) -> int:
        return int(time.time() * 1_000_000)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds * self.scale)

    def sleep_until(self, deadline: float) -> None:
        self.sleep(deadline - self.now())

    def advance_to(self, t: float) -> float:
        raise BadRequest("clock is not virtual")

    def next_wake(self):
        return None

    def new_event(self):
        return _SystemEvent()

    def enter(self):
        pass

    def leave(self):
        pass

    def working(self):
        return _NullCtx()

    def delegated(self):
        return _NullCtx()

    def spawn(self, fn, *args, name: str | None = None) -> threading.Thread:
        th = threading.Thread(target=fn, args=args, name=name, daemon=True)
        th.start()
        return th

    def msg_sent(self):
        pass

    def msg_consumed(self):
        pass

    def status(self) -> dict:
        return {
            "mode": self.mode,
            "now": self.now(),
            "active": None,
            "next_wake": None,
            "ops": None,
            "msgs_in_flight": None,
        }


class _NullCtx:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False


def drive_virtual(clock: VirtualClock, until, poll: float = 0.0002,
                  timeout: float = 120.0) -> None:
    """Advance a shared in-process virtual clock until `until()` is true.

    The advance rule: only when nothing is running and nothing is in
    flight, confirmed stable across one poll interval, jump to the
    earliest pending wake.  Raises EnvironmentDown if nothing can ever
    wake (a stall) or the wall timeout expires.
    """
    from castorlite.errors import EnvironmentDown

    deadline = time.monotonic() + timeout
    while not until():
        if time.monotonic() > deadline:
            raise EnvironmentDown(f"clock driver timed out after {timeout}s "
                                  f"(status {clock.status()})")
        st = clock.status()
        if st["active"] == 0 and st["msgs_in_flight"] == 0:
            ops0 = st["ops"]
            time.sleep(poll)
            st2 = clock.status()
            if (st2["active"] == 0 and st2["msgs_in_flight"] == 0
                    and st2["ops"] == ops0):
                if until():
                    return
                nw = clock.next_wake()
                if nw is not None:
                    clock.advance_to(nw)
                    continue
                # quiescent with no timers: either done or stalled; spin
                # briefly and let the timeout catch a true stall
        time.sleep(poll)
