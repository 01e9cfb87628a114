from castorlite.wire.framing import (
    FrameTruncated,
    MAX_FRAME,
    pack_frame,
    read_frame,
    read_frame_from,
    write_frame,
)
from castorlite.wire.client import DaemonClient
from castorlite.wire.server import DaemonServer

__all__ = [
    "DaemonClient",
    "DaemonServer",
    "FrameTruncated",
    "MAX_FRAME",
    "pack_frame",
    "read_frame",
    "read_frame_from",
    "write_frame",
]
