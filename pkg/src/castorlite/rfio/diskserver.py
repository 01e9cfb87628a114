"""Disk IO daemon (the rfiod analogue).

Owns physical file IO for its data root and per-connection open-file
sessions.  The channel mixes JSON control frames with binary data
frames (marker byte after the length prefix); write payloads travel
client->server as data frames, read payloads server->client.

Two storage details live here and nowhere else:

* zero runs appended at end of file become truncate-extended holes, so
  copying a mostly-zero multi-gigabyte file costs almost no disk writes;
* a generated payload (stub next to the logical path) can be opened for
  read like a real file, with byte ranges served from the generator.

One writer per path; readers of an in-progress write see whatever bytes
exist at read time.
"""

from __future__ import annotations

import os
import threading
import zlib
from dataclasses import dataclass
from pathlib import Path

from castorlite.errors import (
    BadHandle,
    BadRequest,
    CastorError,
    IoError,
    NegativePosition,
    NotFound,
    SingleWriter,
)
from castorlite.payload import GeneratedPayload, payload_kind, read_stub, remove_payload, write_stub
from castorlite.wire import framing
from castorlite.wire.server import Daemon

MAX_DATA_FRAME = 2**20  # 1 MiB payload cap per frame
CHUNK = 2**20


@dataclass
class _Handle:
    handle_id: int
    path: str
    mode: str  # READ | WRITE
    position: int = 0
    fp: object = None
    virtual: GeneratedPayload | None = None

    @property
    def size(self) -> int:
        if self.virtual is not None:
            return self.virtual.size
        return os.fstat(self.fp.fileno()).st_size


class RfiodServer(Daemon):
    name = "rfiod"

    def __init__(self, clock, root, server_name: str = "ds01"):
        super().__init__(clock)
        self.server_name = server_name
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self._writers: dict[str, int] = {}  # path -> handle_id
        self._next_handle = 1
        self._lock = threading.Lock()

    # -- path discipline ---------------------------------------------------

    def _check_path(self, path: str) -> Path:
        p = Path(path)
        if not p.is_absolute():
            p = self.root / p
        p = Path(os.path.normpath(p))
        if not str(p).startswith(str(self.root) + os.sep) and p != self.root:
            raise BadRequest(f"path escapes data root: {path!r}")
        return p

    # -- connection loop ------------------------------------------------------

    def serve_connection(self, conn) -> None:
        handles: dict[int, _Handle] = {}
        clocked = False
        try:
            while True:
                body = framing.read_frame(conn)
                if body is None:
                    return
                self.clock.enter()
                try:
                    marker, parsed = framing.split_marked(body)
                    if marker == framing.MARKER_JSON:
                        clocked = bool(parsed.get("_clocked")) or clocked
                        if clocked:
                            self.clock.msg_consumed()
                        self._serve_control(conn, handles, parsed, clocked)
                    else:
                        if clocked:
                            self.clock.msg_consumed()
                        self._serve_data(conn, handles, parsed, clocked)
                finally:
                    self.clock.leave()
        finally:
            for h in handles.values():
                self._close_handle(h)

    def _reply(self, conn, req_id, value=None, error: CastorError | None = None,
               clocked: bool = False) -> None:
        if error is None:
            doc = {"req_id": req_id, "ok": True, "value": value}
        else:
            doc = {"req_id": req_id, "ok": False,
                   "error": {"code": error.code, "message": error.message}}
        if clocked:
            self.clock.msg_sent()
        conn.sendall(framing.pack_frame(framing.pack_control(doc)))

    def _serve_control(self, conn, handles, msg, clocked) -> None:
        req_id = msg.get("req_id")
        op = msg.get("op")
        args = msg.get("args") or {}
        try:
            if op == "read":
                self._do_read(conn, handles, req_id, clocked, **args)
                return
            fn = {
                "open": self._do_open, "lseek": self._do_lseek,
                "close": self._do_close, "stat": self._do_stat,
                "checksum": self._do_checksum, "remove": self._do_remove,
                "write_virtual": self._do_write_virtual,
                "sys.ping": lambda: {"pong": True, "daemon": self.name,
                                     "server": self.server_name},
                "sys.clock": self._op_clock,
                "sys.clock_advance": self._op_clock_advance,
            }.get(op)
            if fn is None:
                raise BadRequest(f"unknown op {op!r}")
            if op in ("open", "close", "lseek"):
                value = fn(handles, **args)
            else:
                value = fn(**args)
            self._reply(conn, req_id, value=value, clocked=clocked)
        except CastorError as exc:
            self._reply(conn, req_id, error=exc, clocked=clocked)
        except OSError as exc:
            self._reply(conn, req_id, error=IoError(str(exc)), clocked=clocked)

    def _serve_data(self, conn, handles, frame, clocked) -> None:
        opcode, handle_id, offset, payload = frame
        try:
            if opcode != framing.OP_WRITE:
                raise BadRequest(f"unexpected data opcode {opcode}")
            if len(payload) > MAX_DATA_FRAME:
                raise BadRequest("data frame above 1 MiB cap")
            h = handles.get(handle_id)
            if h is None or h.mode != "WRITE":
                raise BadHandle(f"handle {handle_id} not open for write")
            self._write_at(h, offset, payload)
            h.position = offset + len(payload)
            self._reply(conn, None, value={"count": len(payload),
                                           "position": h.position}, clocked=clocked)
        except CastorError as exc:
            self._reply(conn, None, error=exc, clocked=clocked)
        except OSError as exc:
            self._reply(conn, None, error=IoError(str(exc)), clocked=clocked)

    # -- handle ops --------------------------------------------------------------

    def _do_open(self, handles, path, mode, truncate=False):
        p = self._check_path(path)
        if mode not in ("READ", "WRITE"):
            raise BadRequest(f"bad mode {mode!r}")
        with self._lock:
            self._next_handle += 1
            hid = self._next_handle
        virtual = None
        fp = None
        if mode == "READ":
            if p.exists():
                fp = open(p, "rb")
            else:
                virtual = read_stub(p)
                if virtual is None:
                    raise NotFound(str(p))
        else:
            with self._lock:
                if str(p) in self._writers:
                    raise SingleWriter(f"{p} already open for write")
                self._writers[str(p)] = hid
            try:
                if payload_kind(p) == "virtual":
                    remove_payload(p)  # a real write replaces a generated stub
                p.parent.mkdir(parents=True, exist_ok=True)
                # unbuffered so readers of an in-progress write see the bytes
                fp = open(p, "r+b" if p.exists() and not truncate else "wb",
                          buffering=0)
            except BaseException:
                with self._lock:
                    self._writers.pop(str(p), None)
                raise
        h = _Handle(handle_id=hid, path=str(p), mode=mode, fp=fp, virtual=virtual)
        handles[hid] = h
        return {"handle_id": hid, "size": h.size, "server": self.server_name,
                "virtual": virtual.to_dict() if virtual else None}

    def _close_handle(self, h: _Handle) -> None:
        if h.fp is not None:
            try:
                h.fp.close()
            except OSError:
                pass
        if h.mode == "WRITE":
            with self._lock:
                if self._writers.get(h.path) == h.handle_id:
                    del self._writers[h.path]

    def _do_close(self, handles, handle_id):
        h = handles.pop(handle_id, None)
        if h is None:
            raise BadHandle(f"handle {handle_id}")
        self._close_handle(h)
        return {}

    def _do_lseek(self, handles, handle_id, offset, whence="SET"):
        h = handles.get(handle_id)
        if h is None:
            raise BadHandle(f"handle {handle_id}")
        base = {"SET": 0, "CUR": h.position, "END": h.size}.get(whence)
        if base is None:
            raise BadRequest(f"bad whence {whence!r}")
        pos = base + offset
        if pos < 0:
            raise NegativePosition(f"seek to {pos}")
        if h.mode == "READ" and pos > h.size:
            pos = h.size
        h.position = pos
        return {"position": pos}

    def _do_read(self, conn, handles, req_id, clocked, handle_id, length):
        h = handles.get(handle_id)
        try:
            if h is None:
                raise BadHandle(f"handle {handle_id}")
            if length > MAX_DATA_FRAME:
                raise BadRequest("read above 1 MiB cap")
            start = h.position
            if h.virtual is not None:
                data = h.virtual.read_range(start, length)
            else:
                h.fp.seek(start)
                data = h.fp.read(length)
            h.position = start + len(data)
        except CastorError as exc:
            self._reply(conn, req_id, error=exc, clocked=clocked)
            return
        except OSError as exc:
            self._reply(conn, req_id, error=IoError(str(exc)), clocked=clocked)
            return
        if clocked:
            self.clock.msg_sent()
        conn.sendall(framing.pack_frame(
            framing.pack_data(framing.OP_READ, handle_id, start, data)))

    # -- write mechanics ------------------------------------------------------------

    @staticmethod
    def _write_at(h: _Handle, offset: int, payload: bytes) -> None:
        size = os.fstat(h.fp.fileno()).st_size
        if offset >= size and payload.count(0) == len(payload):
            # hole extension: no data blocks for zero runs at EOF
            h.fp.truncate(offset + len(payload))
            return
        h.fp.seek(offset)
        h.fp.write(payload)

    # -- path ops ----------------------------------------------------------------------

    def _do_stat(self, path):
        p = self._check_path(path)
        if p.exists():
            st = p.stat()
            return {"size": st.st_size, "kind": "real"}
        stub = read_stub(p)
        if stub is not None:
            return {"size": stub.size, "kind": "virtual"}
        raise NotFound(str(p))

    def _do_checksum(self, path):
        p = self._check_path(path)
        stub = read_stub(p)
        if stub is not None and not p.exists():
            return {"size": stub.size, "crc32": stub.crc32(), "kind": "virtual"}
        if not p.exists():
            raise NotFound(str(p))
        crc = 0
        size = 0
        with open(p, "rb") as fp:
            while True:
                chunk = fp.read(CHUNK)
                if not chunk:
                    break
                crc = zlib.crc32(chunk, crc)
                size += len(chunk)
        return {"size": size, "crc32": crc, "kind": "real"}

    def _do_remove(self, path):
        p = self._check_path(path)
        return {"removed": remove_payload(p)}

    def _do_write_virtual(self, path, seed, size):
        p = self._check_path(path)
        with self._lock:
            if str(p) in self._writers:
                raise SingleWriter(f"{p} is open for write")
        payload = GeneratedPayload(int(seed), int(size))
        p.parent.mkdir(parents=True, exist_ok=True)
        write_stub(p, payload)
        return {"size": payload.size, "crc32": payload.crc32()}
