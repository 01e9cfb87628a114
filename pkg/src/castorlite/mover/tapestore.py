"""Tape backing store.

One directory per cartridge; each tape file is a zero-padded fseq
number holding exactly the payload bytes (or an `.vp` stub for a
generated payload), plus an `index` sidecar of framed JSON records
(one per fseq) carrying sizes and checksums.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from castorlite.errors import FseqMismatch, NoSuchFseq, VolumeFull
from castorlite.payload import GeneratedPayload, read_stub, write_stub
from castorlite.wire.framing import FrameTruncated, pack_frame, read_frame_from


def fseq_name(fseq: int) -> str:
    return f"{fseq:06d}"


class TapeStore:
    def __init__(self, root, capacity_for=None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.capacity_for = capacity_for or (lambda vid: None)
        self._lock = threading.Lock()
        self._index: dict[str, list[dict]] = {}

    # -- index ------------------------------------------------------------

    def _vol_dir(self, vid: str) -> Path:
        return self.root / vid

    def _load_index(self, vid: str) -> list[dict]:
        with self._lock:
            if vid in self._index:
                return self._index[vid]
            records = []
            idx = self._vol_dir(vid) / "index"
            if idx.exists():
                with open(idx, "rb") as fp:
                    while True:
                        try:
                            body = read_frame_from(fp)
                        except FrameTruncated:
                            break
                        if body is None:
                            break
                        records.append(json.loads(body.decode("utf-8")))
            self._index[vid] = records
            return records

    def _append_index(self, vid: str, rec: dict) -> None:
        with self._lock:
            vol = self._vol_dir(vid)
            vol.mkdir(parents=True, exist_ok=True)
            with open(vol / "index", "ab") as fp:
                fp.write(pack_frame(json.dumps(rec, separators=(",", ":")).encode()))
            self._index.setdefault(vid, []).append(rec)

    def index(self, vid: str) -> list[dict]:
        return list(self._load_index(vid))

    def next_fseq(self, vid: str) -> int:
        return len(self._load_index(vid)) + 1

    def used_bytes(self, vid: str) -> int:
        return sum(r["size"] for r in self._load_index(vid))

    # -- writes ------------------------------------------------------------

    def _check_write(self, vid: str, fseq: int, size: int) -> Path:
        want = self.next_fseq(vid)
        if fseq != want:
            raise FseqMismatch(f"{vid}: want fseq {want}, got {fseq}")
        cap = self.capacity_for(vid)
        if cap is not None and self.used_bytes(vid) + size > cap:
            raise VolumeFull(f"{vid}: {size} bytes over capacity {cap}")
        vol = self._vol_dir(vid)
        vol.mkdir(parents=True, exist_ok=True)
        return vol / fseq_name(fseq)

    def write_stub_file(self, vid: str, fseq: int, payload: GeneratedPayload) -> dict:
        path = self._check_write(vid, fseq, payload.size)
        write_stub(path, payload)
        rec = {"fseq": fseq, "size": payload.size, "crc32": payload.crc32(),
               "virtual": {"seed": payload.seed}}
        self._append_index(vid, rec)
        return rec

    def begin_write(self, vid: str, fseq: int, size: int) -> "_TapeWriter":
        path = self._check_write(vid, fseq, size)
        return _TapeWriter(self, vid, fseq, path, size)

    # -- reads --------------------------------------------------------------

    def meta(self, vid: str, fseq: int) -> dict:
        records = self._load_index(vid)
        if fseq < 1 or fseq > len(records):
            raise NoSuchFseq(f"{vid} fseq {fseq}")
        return records[fseq - 1]

    def open_read(self, vid: str, fseq: int):
        """Returns ('real', path) or ('virtual', GeneratedPayload)."""
        self.meta(vid, fseq)
        path = self._vol_dir(vid) / fseq_name(fseq)
        if path.exists():
            return "real", path
        stub = read_stub(path)
        if stub is None:
            raise NoSuchFseq(f"{vid} fseq {fseq}: backing file missing")
        return "virtual", stub


class _TapeWriter:
    """Sequential writer for one tape file; zero runs become holes."""

    def __init__(self, store: TapeStore, vid: str, fseq: int, path: Path, size: int):
        self.store = store
        self.vid = vid
        self.fseq = fseq
        self.path = path
        self.expected = size
        self.written = 0
        self._fp = open(path, "wb", buffering=0)

    def write(self, data: bytes) -> None:
        if data.count(0) == len(data):
            self.written += len(data)
            self._fp.truncate(self.written)
            return
        self._fp.seek(self.written)
        self._fp.write(data)
        self.written += len(data)

    def commit(self, crc32: int) -> dict:
        self._fp.close()
        rec = {"fseq": self.fseq, "size": self.written, "crc32": crc32,
               "virtual": None}
        self.store._append_index(self.vid, rec)
        return rec

    def abort(self) -> None:
        try:
            self._fp.close()
        finally:
            if self.path.exists():
                os.unlink(self.path)
