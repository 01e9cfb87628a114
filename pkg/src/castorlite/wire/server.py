"""Threaded TCP server shared by all daemons.

One thread per connection; requests on a connection are handled in
order.  Handlers run while holding a clock activity token so the
simulation harness can tell "working now" from "parked on virtual
time".  Mutating state inside handlers is each daemon's business (they
serialize through their own locks).
"""

from __future__ import annotations

import logging
import socket
import threading
import traceback

from castorlite.errors import BadRequest, CastorError
from castorlite.wire import framing

log = logging.getLogger("castorlite.wire")


class Daemon:
    """Base class: op registry, sys.* ops, per-connection JSON loop."""

    name = "daemon"

    def __init__(self, clock):
        self.clock = clock
        self._ops = {}
        self.register("sys.ping", self._op_ping)
        self.register("sys.clock", self._op_clock)
        self.register("sys.clock_advance", self._op_clock_advance)

    def register(self, op: str, fn) -> None:
        self._ops[op] = fn

    def dispatch(self, op: str, args: dict):
        fn = self._ops.get(op)
        if fn is None:
            raise BadRequest(f"unknown op {op!r}")
        return fn(**args)

    # -- lifecycle hooks ----------------------------------------------------

    def on_start(self, server) -> None:
        pass

    def on_stop(self) -> None:
        pass

    # -- sys ops ------------------------------------------------------------

    def _op_ping(self):
        return {"pong": True, "daemon": self.name}

    def _op_clock(self):
        st = self.clock.status()
        st["daemon"] = self.name
        return st

    def _op_clock_advance(self, to):
        return {"now": self.clock.advance_to(float(to))}

    # -- connection loop -----------------------------------------------------

    def serve_connection(self, conn: socket.socket) -> None:
        while True:
            body = framing.read_frame(conn)
            if body is None:
                return
            self.clock.enter()
            clocked = False
            try:
                try:
                    msg = framing.decode_json(body)
                except Exception:  # noqa: BLE001
                    msg = {"op": None}
                # Only requests from clock-attached clients participate in
                # in-flight frame accounting; both sides must count or neither.
                clocked = bool(msg.get("_clocked"))
                if clocked:
                    self.clock.msg_consumed()
                reply = self._handle_control(msg)
                if clocked:
                    self.clock.msg_sent()
                conn.sendall(framing.pack_frame(reply))
            finally:
                self.clock.leave()

    def _handle_control(self, msg: dict) -> bytes:
        req_id = msg.get("req_id")
        try:
            value = self.dispatch(msg["op"], msg.get("args") or {})
            return framing.encode_json({"req_id": req_id, "ok": True, "value": value})
        except CastorError as exc:
            return framing.encode_json({
                "req_id": req_id, "ok": False,
                "error": {"code": exc.code, "message": exc.message},
            })
        except Exception as exc:  # noqa: BLE001 - daemon must answer something
            log.error("unhandled error in %s: %s\n%s", self.name, exc,
                      traceback.format_exc())
            return framing.encode_json({
                "req_id": req_id, "ok": False,
                "error": {"code": "InternalError", "message": str(exc)},
            })


class DaemonServer:
    def __init__(self, daemon: Daemon, host: str = "127.0.0.1", port: int = 0):
        self.daemon = daemon
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(128)
        self.host, self.port = self._listener.getsockname()
        self._conns: set[socket.socket] = set()
        self._lock = threading.Lock()
        self._stopping = False
        self._thread = None

    @property
    def addr(self) -> str:
        return f"{self.host}:{self.port}"

    def start(self) -> "DaemonServer":
        self._thread = threading.Thread(
            target=self._accept_loop, name=f"{self.daemon.name}-accept", daemon=True)
        self._thread.start()
        self.daemon.on_start(self)
        return self

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._lock:
                self._conns.add(conn)
            threading.Thread(
                target=self._serve, args=(conn,),
                name=f"{self.daemon.name}-conn", daemon=True).start()

    def _serve(self, conn: socket.socket) -> None:
        try:
            self.daemon.serve_connection(conn)
        except (ConnectionError, framing.FrameTruncated, OSError):
            pass
        except Exception:  # noqa: BLE001
            log.error("connection loop crashed in %s:\n%s", self.daemon.name,
                      traceback.format_exc())
        finally:
            with self._lock:
                self._conns.discard(conn)
            try:
                conn.close()
            except OSError:
                pass

    def stop(self) -> None:
        self._stopping = True
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        self.daemon.on_stop()
