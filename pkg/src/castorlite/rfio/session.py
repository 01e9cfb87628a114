"""Client side of the disk IO channel.

One session is one connection and one logical flow: strictly
request/reply, no pipelining.  Control messages are JSON frames; write
payloads go out as binary data frames and read payloads come back as
binary data frames.
"""

from __future__ import annotations

import itertools
import socket

from castorlite.errors import IoError, error_for_code
from castorlite.wire import framing
from castorlite.wire.client import CALL_TIMEOUT_S, parse_addr

MAX_DATA_FRAME = 2**20


class RfioSession:
    def __init__(self, addr, clock=None, timeout: float = CALL_TIMEOUT_S):
        self.host, self.port = parse_addr(addr)
        self.clock = clock
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._ids = itertools.count(1)

    def _ensure(self) -> socket.socket:
        if self._sock is None:
            self._sock = socket.create_connection((self.host, self.port),
                                                  timeout=self.timeout)
            self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        return self._sock

    def close_session(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close_session()
        return False

    # -- framed exchange with clock accounting -------------------------------

    def _exchange(self, body: bytes) -> bytes:
        clock = self.clock
        sent = False
        if clock is not None:
            clock.leave()
        try:
            try:
                sock = self._ensure()
                if clock is not None:
                    clock.msg_sent()
                    sent = True
                sock.sendall(framing.pack_frame(body))
                reply = framing.read_frame(sock)
            except (OSError, framing.FrameTruncated) as exc:
                self.close_session()
                raise ConnectionError(f"disk server {self.host}:{self.port}: {exc}") from exc
            if reply is None:
                self.close_session()
                raise ConnectionError("disk server closed the connection")
        finally:
            if clock is not None:
                clock.enter()
                if sent:
                    clock.msg_consumed()
        return reply

    def _control(self, op: str, **args):
        msg = {"op": op, "args": args, "req_id": f"s{next(self._ids)}"}
        if self.clock is not None:
            msg["_clocked"] = True
        reply = self._exchange(framing.pack_control(msg))
        marker, parsed = framing.split_marked(reply)
        if marker == framing.MARKER_DATA:
            return parsed  # read payload
        if parsed.get("ok"):
            return parsed.get("value")
        err = parsed.get("error") or {}
        raise error_for_code(err.get("code", "InternalError"), err.get("message", ""))

    # -- operations ---------------------------------------------------------

    def open(self, path: str, mode: str, truncate: bool = False) -> dict:
        return self._control("open", path=path, mode=mode, truncate=truncate)

    def read(self, handle_id: int, length: int) -> bytes:
        if length > MAX_DATA_FRAME:
            raise IoError("read above 1 MiB frame cap")
        out = self._control("read", handle_id=handle_id, length=length)
        if not isinstance(out, tuple):
            raise IoError(f"expected data frame, got {out!r}")
        opcode, hid, _offset, payload = out
        if opcode != framing.OP_READ or hid != handle_id:
            raise IoError("data frame mismatch")
        return payload

    def write(self, handle_id: int, offset: int, data: bytes) -> dict:
        if len(data) > MAX_DATA_FRAME:
            raise IoError("write above 1 MiB frame cap")
        frame = framing.pack_data(framing.OP_WRITE, handle_id, offset, data)
        reply = self._exchange(frame)
        _, parsed = framing.split_marked(reply)
        if parsed.get("ok"):
            return parsed.get("value")
        err = parsed.get("error") or {}
        raise error_for_code(err.get("code", "InternalError"), err.get("message", ""))

    def lseek(self, handle_id: int, offset: int, whence: str = "SET") -> int:
        return self._control("lseek", handle_id=handle_id, offset=offset,
                             whence=whence)["position"]

    def close(self, handle_id: int) -> None:
        self._control("close", handle_id=handle_id)

    def stat(self, path: str) -> dict:
        return self._control("stat", path=path)

    def checksum(self, path: str) -> dict:
        return self._control("checksum", path=path)

    def remove(self, path: str) -> bool:
        return self._control("remove", path=path)["removed"]

    def write_virtual(self, path: str, seed: int, size: int) -> dict:
        return self._control("write_virtual", path=path, seed=seed, size=size)

    def ping(self) -> bool:
        try:
            return bool(self._control("sys.ping").get("pong"))
        except (ConnectionError, OSError):
            return False
