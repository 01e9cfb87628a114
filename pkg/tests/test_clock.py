import threading
import time

import pytest

from castorlite.clock import SystemClock, VirtualClock
from castorlite.errors import BadRequest


def test_virtual_starts_at_zero():
    clock = VirtualClock()
    assert clock.now() == 0.0
    assert clock.next_wake() is None


def test_advance_moves_time_forward_only():
    clock = VirtualClock()
    assert clock.advance_to(5.0) == 5.0
    assert clock.advance_to(2.0) == 5.0
    assert clock.now() == 5.0


def test_sleep_parks_until_advance():
    clock = VirtualClock()
    woke = []

    def sleeper():
        clock.sleep(10.0)
        woke.append(clock.now())

    th = clock.spawn(sleeper)
    deadline = time.time() + 5
    while clock.next_wake() is None and time.time() < deadline:
        time.sleep(0.001)
    assert clock.next_wake() == pytest.approx(10.0)
    assert clock.status()["active"] == 0
    clock.advance_to(10.0)
    th.join(timeout=5)
    assert woke == [10.0]


def test_sleep_in_past_returns_immediately():
    clock = VirtualClock()
    clock.advance_to(100.0)
    clock.sleep_until(50.0)  # must not block
    assert clock.now() == 100.0


def test_activity_token_transfer_on_wake():
    clock = VirtualClock()
    started = threading.Event()

    def sleeper():
        started.set()
        clock.sleep(1.0)
        time.sleep(0.05)  # hold the token a while after waking

    clock.spawn(sleeper)
    started.wait()
    deadline = time.time() + 5
    while clock.status()["active"] != 0 and time.time() < deadline:
        time.sleep(0.001)
    clock.advance_to(1.0)
    # advance_to itself must hand the token over before returning
    assert clock.status()["active"] >= 1


def test_event_wait_and_set():
    clock = VirtualClock()
    ev = clock.new_event()
    got = []

    def waiter():
        ev.wait()
        got.append(clock.now())

    th = clock.spawn(waiter)
    deadline = time.time() + 5
    while clock.status()["active"] != 0 and time.time() < deadline:
        time.sleep(0.001)
    assert not got
    clock.advance_to(3.0)
    ev.set()
    th.join(timeout=5)
    assert got == [3.0]


def test_wake_order_multiple_sleepers():
    clock = VirtualClock()
    order = []
    lock = threading.Lock()

    def sleeper(t):
        clock.sleep_until(t)
        with lock:
            order.append(t)

    threads = [clock.spawn(sleeper, t) for t in (3.0, 1.0, 2.0)]
    deadline = time.time() + 5
    while clock.status()["active"] != 0 and time.time() < deadline:
        time.sleep(0.001)
    assert clock.next_wake() == pytest.approx(1.0)
    clock.advance_to(1.5)
    while clock.status()["active"] != 0 and time.time() < deadline:
        time.sleep(0.001)
    assert order == [1.0]
    clock.advance_to(3.0)
    for th in threads:
        th.join(timeout=5)
    assert order == [1.0, 2.0, 3.0]


def test_msg_counters():
    clock = VirtualClock()
    clock.msg_sent()
    assert clock.status()["msgs_in_flight"] == 1
    clock.msg_consumed()
    assert clock.status()["msgs_in_flight"] == 0


def test_system_clock_scale():
    clock = SystemClock(scale=0.01)
    t0 = time.monotonic()
    clock.sleep(1.0)
    wall = time.monotonic() - t0
    assert wall < 0.5
    assert clock.now() >= 1.0
    with pytest.raises(BadRequest):
        clock.advance_to(10.0)
