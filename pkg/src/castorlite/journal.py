"""Embedded mutation journal.

One frame per acknowledged mutation, fsync'd before the daemon replies,
plus a periodic snapshot so replay stays bounded.  Records carry a
monotonically increasing sequence number; a snapshot stores the last
sequence it covers, so a crash between snapshot and journal truncation
cannot double-apply records on the next boot.

A torn trailing frame (the record being written when the process died)
is discarded on recovery: it was never acknowledged.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from castorlite.wire.framing import FrameTruncated, pack_frame, read_frame_from


class Journal:
    def __init__(self, dirpath, snapshot_every: int = 1000):
        self.dir = Path(dirpath)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.journal_path = self.dir / "journal.log"
        self.snapshot_path = self.dir / "snapshot.json"
        self.snapshot_every = snapshot_every
        self._fp = None
        self._seq = 0
        self._since_snapshot = 0

    # -- recovery ---------------------------------------------------------

    def recover(self) -> tuple[dict | None, list[dict]]:
        """Return (snapshot_state, records_after_snapshot) and open for append."""
        snapshot = None
        last_snap_seq = 0
        if self.snapshot_path.exists():
            with open(self.snapshot_path, "rb") as fp:
                snap_doc = json.load(fp)
            snapshot = snap_doc["state"]
            last_snap_seq = snap_doc["seq"]
        records = []
        good_end = 0
        if self.journal_path.exists():
            with open(self.journal_path, "rb") as fp:
                while True:
                    try:
                        body = read_frame_from(fp)
                    except FrameTruncated:
                        break
                    if body is None:
                        good_end = fp.tell()
                        break
                    rec = json.loads(body.decode("utf-8"))
                    good_end = fp.tell()
                    records.append(rec)
            size = self.journal_path.stat().st_size
            if size > good_end:
                with open(self.journal_path, "r+b") as fp:
                    fp.truncate(good_end)
        records = [r for r in records if r["_seq"] > last_snap_seq]
        self._seq = max([last_snap_seq] + [r["_seq"] for r in records])
        self._since_snapshot = len(records)
        self._fp = open(self.journal_path, "ab")
        return snapshot, records

    # -- append -------------------------------------------------------------

    def _ensure_open(self):
        if self._fp is None:
            raise RuntimeError("journal not recovered/opened")

    def append(self, record: dict) -> int:
        return self.append_many([record])

    def append_many(self, records) -> int:
        """Write records as frames and fsync once (group commit)."""
        self._ensure_open()
        chunks = []
        for rec in records:
            self._seq += 1
            rec["_seq"] = self._seq
            chunks.append(pack_frame(json.dumps(rec, separators=(",", ":")).encode("utf-8")))
        self._fp.write(b"".join(chunks))
        self._fp.flush()
        os.fsync(self._fp.fileno())
        self._since_snapshot += len(chunks)
        return self._seq

    # -- snapshots -----------------------------------------------------------

    def snapshot(self, state: dict) -> None:
        self._ensure_open()
        tmp = self.snapshot_path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as fp:
            json.dump({"seq": self._seq, "state": state}, fp, separators=(",", ":"))
            fp.flush()
            os.fsync(fp.fileno())
        os.replace(tmp, self.snapshot_path)
        self._fp.close()
        self._fp = open(self.journal_path, "wb")
        self._fp.flush()
        os.fsync(self._fp.fileno())
        self._since_snapshot = 0

    def maybe_snapshot(self, state_fn) -> bool:
        if self._since_snapshot >= self.snapshot_every:
            self.snapshot(state_fn())
            return True
        return False

    def close(self) -> None:
        if self._fp is not None:
            self._fp.close()
            self._fp = None
