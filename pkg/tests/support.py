"""Shared helpers for tests that drive daemons on a virtual clock."""

from __future__ import annotations

from castorlite.clock import drive_virtual


class AsyncCall:
    """Run a blocking daemon call in a token-holding worker thread."""

    def __init__(self, clock, fn, *args, **kwargs):
        self.clock = clock
        self._out = {}

        def run():
            try:
                self._out["value"] = fn(*args, **kwargs)
            except Exception as exc:  # noqa: BLE001
                self._out["error"] = exc

        self._thread = clock.spawn(run, name="async-call")

    def done(self) -> bool:
        return bool(self._out)

    def wait(self, timeout: float = 120.0):
        drive_virtual(self.clock, self.done, timeout=timeout)
        self._thread.join(timeout=10)
        if "error" in self._out:
            raise self._out["error"]
        return self._out["value"]


def run_on_clock(clock, fn, *args, timeout: float = 120.0, **kwargs):
    """Convenience: issue one virtual-time-parking call and drive to completion."""
    return AsyncCall(clock, fn, *args, **kwargs).wait(timeout=timeout)
