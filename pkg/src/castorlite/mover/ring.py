"""Bounded-buffer copy pipeline.

One producer stage and one consumer stage coupled only by a ring of
buffer slots: at most n_buffers chunks are in flight, no chunk is
consumed before it is completely filled, and the two stages overlap.
Stage rates are optional simulated costs charged to the clock, which is
what the data challenges use to model disk and tape speeds.
"""

from __future__ import annotations

import threading
import zlib
from collections import deque
from dataclasses import dataclass

from castorlite.errors import SinkError, SourceTruncated


class ClockChannel:
    """Bounded FIFO whose blocking honors clock activity accounting.

    Waiters park on clock events, so a full/empty channel never wedges a
    virtual-time run: the quiescence probe sees parked threads as idle
    and the wake transfers the activity token atomically.
    """

    def __init__(self, clock, capacity: int):
        self.clock = clock
        self.capacity = capacity
        self._items = deque()
        self._lock = threading.Lock()
        self._getters = deque()
        self._putters = deque()

    def put(self, item) -> None:
        while True:
            with self._lock:
                if len(self._items) < self.capacity:
                    self._items.append(item)
                    if self._getters:
                        self._getters.popleft().set()
                    return
                ev = self.clock.new_event()
                self._putters.append(ev)
            ev.wait()

    def get(self):
        while True:
            with self._lock:
                if self._items:
                    item = self._items.popleft()
                    if self._putters:
                        self._putters.popleft().set()
                    return item
                ev = self.clock.new_event()
                self._getters.append(ev)
            ev.wait()


@dataclass
class BufferRing:
    n_buffers: int = 8
    buffer_bytes: int = 4 * 2**20

    def __post_init__(self):
        if self.n_buffers < 1 or self.buffer_bytes < 1:
            raise ValueError("ring needs at least one nonempty buffer")


_EOF = ("eof", None)
_ERR = "err"


def pipeline_copy(reader, writer, ring: BufferRing, clock,
                  source_rate: float | None = None,
                  sink_rate: float | None = None,
                  expected_size: int | None = None,
                  on_chunk=None) -> tuple[int, int]:
    """Copy reader -> writer through the ring; returns (bytes, crc32).

    reader(n) yields at most n bytes, b"" at end of stream; writer(data)
    persists a chunk.  Rates are bytes/second of simulated time charged
    per chunk to the producer and consumer stages respectively.
    """
    filled = ClockChannel(clock, ring.n_buffers)
    slots = ClockChannel(clock, ring.n_buffers)
    for _ in range(ring.n_buffers):
        slots.put(None)

    def produce():
        try:
            while True:
                slots.get()
                data = reader(ring.buffer_bytes)
                if source_rate and data:
                    clock.sleep(len(data) / source_rate)
                if not data:
                    filled.put(_EOF)
                    return
                filled.put(("data", bytes(data)))
        except Exception as exc:  # noqa: BLE001 - surfaces on the consumer side
            filled.put((_ERR, exc))

    clock.spawn(produce, name="pipeline-producer")

    total = 0
    crc = 0
    while True:
        kind, payload = filled.get()
        if kind == "eof":
            break
        if kind == _ERR:
            if isinstance(payload, (SourceTruncated, SinkError)):
                raise payload
            raise SourceTruncated(f"source failed: {payload}") from payload
        if sink_rate:
            clock.sleep(len(payload) / sink_rate)
        try:
            writer(payload)
        except Exception as exc:  # noqa: BLE001
            raise SinkError(str(exc)) from exc
        if on_chunk is not None:
            on_chunk(len(payload))
        crc = zlib.crc32(payload, crc)
        total += len(payload)
        slots.put(None)
    if expected_size is not None and total != expected_size:
        raise SourceTruncated(f"copied {total} of expected {expected_size} bytes")
    return total, crc


def pipeline_duration(size: int, chunk: int, n_buffers: int,
                      source_rate: float | None,
                      sink_rate: float | None) -> float:
    """Closed-form (recurrence) duration model of the two-stage pipeline.

    Mirrors the scheduling rules of pipeline_copy exactly: a producer
    needs a free slot before reading chunk i (freed when chunk i-n was
    consumed), and each stage is sequential.
    """
    if size <= 0:
        return 0.0
    sizes = [chunk] * (size // chunk)
    if size % chunk:
        sizes.append(size % chunk)
    p_done = 0.0
    c_done = 0.0
    freed = deque([0.0] * n_buffers)
    for s in sizes:
        p_cost = s / source_rate if source_rate else 0.0
        c_cost = s / sink_rate if sink_rate else 0.0
        start = max(p_done, freed.popleft())
        p_done = start + p_cost
        c_done = max(c_done, p_done) + c_cost
        freed.append(c_done)
    return c_done
