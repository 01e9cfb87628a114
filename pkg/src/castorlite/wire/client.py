"""Client side of the control protocol.

One DaemonClient may be shared by many threads; each thread lazily gets
its own connection.  When a clock is attached, the activity token is
released for the duration of a call (the serving daemon holds its own
token while working) and the frames in flight are counted, which is
what lets an in-process harness detect true quiescence.
"""

from __future__ import annotations

import itertools
import socket
import threading

from castorlite.errors import EnvironmentDown, error_for_code
from castorlite.wire import framing

CALL_TIMEOUT_S = 300.0  # wall-clock guard against wedged daemons


def parse_addr(addr) -> tuple[str, int]:
    if isinstance(addr, (tuple, list)):
        return addr[0], int(addr[1])
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


class DaemonClient:
    def __init__(self, addr, clock=None, timeout: float = CALL_TIMEOUT_S):
        self.host, self.port = parse_addr(addr)
        self.clock = clock
        self.timeout = timeout
        self._local = threading.local()
        self._ids = itertools.count(1)

    @property
    def addr(self) -> str:
        return f"{self.host}:{self.port}"

    def _sock(self) -> socket.socket:
        sock = getattr(self._local, "sock", None)
        if sock is None:
            sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self._local.sock = sock
        return sock

    def _drop(self) -> None:
        sock = getattr(self._local, "sock", None)
        if sock is not None:
            try:
                sock.close()
            except OSError:
                pass
            self._local.sock = None

    def call(self, op: str, **args):
        req = {"op": op, "args": args, "req_id": f"c{next(self._ids)}"}
        if self.clock is not None:
            req["_clocked"] = True
        body = framing.encode_json(req)
        clock = self.clock
        sent = False
        if clock is not None:
            clock.leave()
        try:
            try:
                sock = self._sock()
                if clock is not None:
                    clock.msg_sent()
                    sent = True
                sock.sendall(framing.pack_frame(body))
                reply_body = framing.read_frame(sock)
            except (OSError, framing.FrameTruncated) as exc:
                self._drop()
                raise ConnectionError(f"{op} to {self.addr} failed: {exc}") from exc
            if reply_body is None:
                self._drop()
                raise ConnectionError(f"{op} to {self.addr}: connection closed")
        finally:
            if clock is not None:
                clock.enter()
                if sent:
                    # Pairs with msg_sent whether the reply arrived or the
                    # call failed; a lost frame must not wedge the harness.
                    clock.msg_consumed()
        reply = framing.decode_json(reply_body)
        if reply.get("ok"):
            return reply.get("value")
        err = reply.get("error") or {}
        raise error_for_code(err.get("code", "InternalError"), err.get("message", ""))

    def ping(self) -> bool:
        try:
            return bool(self.call("sys.ping").get("pong"))
        except (ConnectionError, EnvironmentDown):
            return False

    def close(self) -> None:
        self._drop()
