"""Length-prefixed frame codec.

Every message on every channel (and every journal record) is one frame:
a 4-byte big-endian unsigned length followed by that many bytes.  For
control channels the body is UTF-8 JSON.  The disk IO channel prefixes
the body with a one-byte marker: 0x00 for JSON control, 0x01 for a
binary data frame carrying a 17-byte header (opcode u8, handle_id u64,
offset u64, all big-endian) and then the payload.
"""

from __future__ import annotations

import json
import socket
import struct

MAX_FRAME = 64 * 2**20  # sanity bound; data payloads are capped at 1 MiB anyway

MARKER_JSON = 0x00
MARKER_DATA = 0x01

_DATA_HEADER = struct.Struct(">BQQ")  # opcode, handle_id, offset

# Data channel opcodes
OP_OPEN = 1
OP_READ = 2
OP_WRITE = 3
OP_LSEEK = 4
OP_CLOSE = 5
OP_STAT = 6


class FrameTruncated(Exception):
    """A frame header or body ended early (connection drop or torn write)."""


def pack_frame(body: bytes) -> bytes:
    if len(body) > MAX_FRAME:
        raise ValueError(f"frame body too large: {len(body)}")
    return struct.pack(">I", len(body)) + body


def write_frame(sock: socket.socket, body: bytes) -> None:
    sock.sendall(pack_frame(body))


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    parts = []
    got = 0
    while got < n:
        chunk = sock.recv(min(n - got, 2**20))
        if not chunk:
            raise FrameTruncated(f"connection closed after {got}/{n} bytes")
        parts.append(chunk)
        got += len(chunk)
    return b"".join(parts)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one frame from a socket; None on clean EOF at a frame boundary."""
    try:
        header = _recv_exact(sock, 4)
    except FrameTruncated as exc:
        if "0/4" in str(exc):
            return None
        raise
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FrameTruncated(f"frame length {length} exceeds limit")
    return _recv_exact(sock, length)


def read_frame_from(fp) -> bytes | None:
    """Read one frame from a binary file object; None on clean EOF.

    Raises FrameTruncated when the file ends inside a frame, which a
    journal replayer treats as a torn trailing record.
    """
    header = fp.read(4)
    if not header:
        return None
    if len(header) < 4:
        raise FrameTruncated("torn frame header")
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        raise FrameTruncated(f"frame length {length} exceeds limit")
    body = fp.read(length)
    if len(body) < length:
        raise FrameTruncated(f"torn frame body {len(body)}/{length}")
    return body


def encode_json(obj) -> bytes:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def decode_json(body: bytes):
    return json.loads(body.decode("utf-8"))


def pack_control(obj) -> bytes:
    """Marker-prefixed JSON control body for the disk IO channel."""
    return bytes([MARKER_JSON]) + encode_json(obj)


def pack_data(opcode: int, handle_id: int, offset: int, payload: bytes) -> bytes:
    """Marker-prefixed binary data body for the disk IO channel."""
    return bytes([MARKER_DATA]) + _DATA_HEADER.pack(opcode, handle_id, offset) + payload


def split_marked(body: bytes):
    """Split a disk-channel frame body into (marker, parsed).

    JSON control -> (MARKER_JSON, obj); data -> (MARKER_DATA,
    (opcode, handle_id, offset, payload)).
    """
    if not body:
        raise FrameTruncated("empty marked frame")
    marker = body[0]
    if marker == MARKER_JSON:
        return marker, decode_json(body[1:])
    if marker == MARKER_DATA:
        if len(body) < 1 + _DATA_HEADER.size:
            raise FrameTruncated("data frame shorter than header")
        opcode, handle_id, offset = _DATA_HEADER.unpack_from(body, 1)
        return marker, (opcode, handle_id, offset, body[1 + _DATA_HEADER.size:])
    raise FrameTruncated(f"unknown frame marker {marker:#x}")
