"""Stager bookkeeping: disk copies, filesystem space, policy inputs.

The disk-copy table is journaled; only settled states are written
(TO_MIGRATE, MIGRATING, STAGED, and removals).  Recall-in-progress
states and open write reservations are volatile: a crashed stager
rescans its filesystems and drops anything the journal does not vouch
for.  last_access refinements from cache hits are volatile too; after a
restart the access order falls back to the last journaled timestamp.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from castorlite.errors import BadRequest, NoSpace
from castorlite.journal import Journal

RECALL_PENDING = "RECALL_PENDING"
RECALLING = "RECALLING"
STAGED = "STAGED"
TO_MIGRATE = "TO_MIGRATE"
MIGRATING = "MIGRATING"
INVALID = "INVALID"

DURABLE_STATES = {STAGED, TO_MIGRATE, MIGRATING}
EVICTABLE = {STAGED}
TRANSFER_PINNED = {TO_MIGRATE, MIGRATING, RECALL_PENDING, RECALLING}


@dataclass
class DiskCopy:
    file_id: int
    pool: str
    server: str
    path: str
    size_bytes: int
    state: str
    last_access: float
    crc32: int | None = None
    created: float = 0.0

    def to_dict(self) -> dict:
        return {
            "file_id": self.file_id, "pool": self.pool, "server": self.server,
            "path": self.path, "size_bytes": self.size_bytes, "state": self.state,
            "last_access": self.last_access, "crc32": self.crc32,
            "created": self.created,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiskCopy":
        return cls(file_id=d["file_id"], pool=d["pool"], server=d["server"],
                   path=d["path"], size_bytes=d["size_bytes"], state=d["state"],
                   last_access=d["last_access"], crc32=d.get("crc32"),
                   created=d.get("created", 0.0))


@dataclass
class Filesystem:
    server: str
    path: str
    capacity_bytes: int
    used_bytes: int = 0


@dataclass
class PoolState:
    cfg: object  # PoolConfig
    filesystems: list[Filesystem] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.cfg.name

    def used_fraction(self) -> float:
        cap = sum(f.capacity_bytes for f in self.filesystems)
        used = sum(f.used_bytes for f in self.filesystems)
        return used / cap if cap else 0.0


class StagerState:
    def __init__(self, journal_dir, clock, pool_cfgs, snapshot_every: int = 1000):
        self.clock = clock
        self.journal = Journal(journal_dir, snapshot_every=snapshot_every)
        self.pools: dict[str, PoolState] = {}
        for cfg in pool_cfgs:
            ps = PoolState(cfg=cfg)
            for fs in cfg.filesystems:
                ps.filesystems.append(Filesystem(server=fs.server, path=fs.path,
                                                 capacity_bytes=fs.capacity_bytes))
            self.pools[cfg.name] = ps
        self.copies: dict[int, DiskCopy] = {}
        snapshot, records = self.journal.recover()
        if snapshot is not None:
            for d in snapshot["copies"]:
                c = DiskCopy.from_dict(d)
                self.copies[c.file_id] = c
        for rec in records:
            self._apply(rec)
        self._recount()

    # -- journal ------------------------------------------------------------

    def _apply(self, rec: dict) -> None:
        op = rec["op"]
        if op == "copy_upsert":
            c = DiskCopy.from_dict(rec["copy"])
            self.copies[c.file_id] = c
        elif op == "copy_state":
            c = self.copies.get(rec["file_id"])
            if c is not None:
                c.state = rec["state"]
                c.last_access = rec["ts"]
        elif op == "copy_remove":
            self.copies.pop(rec["file_id"], None)
        else:
            raise BadRequest(f"unknown journal record {op!r}")

    def _commit(self, rec: dict) -> None:
        self.journal.append(rec)
        self._apply(rec)
        self.journal.maybe_snapshot(self._snapshot_state)

    def _snapshot_state(self) -> dict:
        return {"copies": [c.to_dict() for c in self.copies.values()]}

    # -- durable transitions -----------------------------------------------------

    def record_copy(self, copy: DiskCopy) -> None:
        self._commit({"op": "copy_upsert", "copy": copy.to_dict()})

    def record_state(self, file_id: int, state: str) -> None:
        self._commit({"op": "copy_state", "file_id": file_id, "state": state,
                      "ts": self.clock.now()})

    def record_remove(self, file_id: int) -> None:
        self._commit({"op": "copy_remove", "file_id": file_id})

    # -- space accounting -----------------------------------------------------------

    def _recount(self) -> None:
        for ps in self.pools.values():
            for fs in ps.filesystems:
                fs.used_bytes = 0
        for c in self.copies.values():
            fs = self.find_fs(c.pool, c.server, c.path)
            if fs is not None:
                fs.used_bytes += c.size_bytes

    def find_fs(self, pool: str, server: str, path: str) -> Filesystem | None:
        ps = self.pools.get(pool)
        if ps is None:
            return None
        for fs in ps.filesystems:
            if fs.server == server and path.startswith(fs.path):
                return fs
        return None

    def place(self, pool: str, need: int) -> Filesystem:
        """Most-free-bytes placement; ties broken by server then path."""
        ps = self.pools.get(pool)
        if ps is None or not ps.filesystems:
            raise NoSpace(f"pool {pool!r} has no filesystems")
        best = None
        best_key = None
        for fs in ps.filesystems:
            free = fs.capacity_bytes - fs.used_bytes
            if free < need:
                continue
            key = (-free, fs.server, fs.path)
            if best is None or key < best_key:
                best, best_key = fs, key
        if best is None:
            raise NoSpace(f"pool {pool}: no filesystem with {need} bytes free")
        return best

    def lru_candidates(self, pool: str) -> list[DiskCopy]:
        """STAGED copies oldest-access first; the eviction order."""
        cands = [c for c in self.copies.values()
                 if c.pool == pool and c.state in EVICTABLE]
        cands.sort(key=lambda c: (c.last_access, c.file_id))
        return cands

    def to_migrate(self, pool: str) -> list[DiskCopy]:
        out = [c for c in self.copies.values()
               if c.pool == pool and c.state == TO_MIGRATE]
        out.sort(key=lambda c: c.file_id)
        return out

    def migration_pressure(self, pool: str) -> tuple[int, float]:
        """(queued bytes, oldest queued age in seconds)."""
        now = self.clock.now()
        queue = self.to_migrate(pool)
        bytes_q = sum(c.size_bytes for c in queue)
        oldest = max((now - c.created for c in queue), default=0.0)
        return bytes_q, oldest

    def close(self) -> None:
        self.journal.close()
