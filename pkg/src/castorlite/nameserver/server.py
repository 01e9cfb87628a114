"""Name-server daemon: wire surface over the catalog.

Mutations serialize through one lock; reads take the same lock briefly
so every reply is a consistent snapshot.
"""

from __future__ import annotations

import threading

from castorlite.nameserver.catalog import NsCatalog
from castorlite.wire.server import Daemon


class NameServer(Daemon):
    name = "nameserver"

    def __init__(self, clock, journal_dir, domain: str = "cern.ch",
                 snapshot_every: int = 1000):
        super().__init__(clock)
        self.catalog = NsCatalog(journal_dir, clock, domain=domain,
                                 snapshot_every=snapshot_every)
        self._lock = threading.RLock()
        for op, fn in {
            "ns.mkdir": self.op_mkdir,
            "ns.create_file": self.op_create_file,
            "ns.stat": self.op_stat,
            "ns.stat_id": self.op_stat_id,
            "ns.set_file_size": self.op_set_file_size,
            "ns.unlink": self.op_unlink,
            "ns.rmdir": self.op_rmdir,
            "ns.rename": self.op_rename,
            "ns.list_dir": self.op_list_dir,
            "ns.add_segment": self.op_add_segment,
            "ns.replace_segments": self.op_replace_segments,
            "ns.get_segments": self.op_get_segments,
            "ns.segments_on_vid": self.op_segments_on_vid,
            "ns.complete_copies": self.op_complete_copies,
            "ns.copies_bulk": self.op_copies_bulk,
            "ns.path_of": self.op_path_of,
            "ns.dump": self.op_dump,
        }.items():
            self.register(op, fn)

    def on_stop(self):
        self.catalog.close()

    # -- ops -------------------------------------------------------------

    def op_mkdir(self, path, mode=0o755, uid=0, gid=0):
        with self._lock:
            return {"file_id": self.catalog.mkdir(path, mode, uid, gid)}

    def op_create_file(self, path, mode=0o644, uid=0, gid=0):
        with self._lock:
            return {"file_id": self.catalog.create_file(path, mode, uid, gid)}

    def op_stat(self, path):
        with self._lock:
            return self.catalog.stat(path).to_dict()

    def op_stat_id(self, file_id):
        with self._lock:
            return self.catalog._entry(file_id).to_dict()

    def op_set_file_size(self, file_id, size_bytes, checksum=None):
        with self._lock:
            self.catalog.set_file_size(file_id, size_bytes, checksum)
            return {}

    def op_unlink(self, path):
        with self._lock:
            self.catalog.unlink(path)
            return {}

    def op_rmdir(self, path):
        with self._lock:
            self.catalog.rmdir(path)
            return {}

    def op_rename(self, old_path, new_path):
        with self._lock:
            self.catalog.rename(old_path, new_path)
            return {}

    def op_list_dir(self, path):
        with self._lock:
            return {"entries": [e.to_dict() for e in self.catalog.list_dir(path)]}

    def op_add_segment(self, file_id, segment):
        with self._lock:
            self.catalog.add_segment(file_id, segment)
            return {}

    def op_replace_segments(self, file_id, copy_no, segments):
        with self._lock:
            self.catalog.replace_segments(file_id, copy_no, segments)
            return {}

    def op_get_segments(self, file_id):
        with self._lock:
            return {"segments": [s.to_dict() for s in self.catalog.get_segments(file_id)]}

    def op_segments_on_vid(self, vid):
        with self._lock:
            return {"segments": [s.to_dict() for s in self.catalog.segments_on_vid(vid)]}

    def op_complete_copies(self, file_id):
        with self._lock:
            return {"copies": self.catalog.complete_copies(file_id)}

    def op_copies_bulk(self, file_ids):
        out = {}
        with self._lock:
            for fid in file_ids:
                try:
                    out[str(fid)] = self.catalog.complete_copies(fid)
                except Exception:  # noqa: BLE001 - vanished files report no copies
                    out[str(fid)] = []
        return {"copies": out}

    def op_path_of(self, file_id):
        with self._lock:
            return {"path": self.catalog.path_of(file_id)}

    def op_dump(self):
        with self._lock:
            return {"tree": self.catalog.dump()}
