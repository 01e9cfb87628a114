"""Volume manager state: pools, cartridges, fill bookkeeping.

Durable state (pools, volumes, free space, next file sequence, admin
flags) goes through the journal.  BUSY is deliberately volatile: it
marks a live writer session, and a restarted volume manager has no live
sessions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from castorlite.errors import Exists, NoEligibleVolume, NotFound, Underflow, BadRequest
from castorlite.journal import Journal

ADMIN_FLAGS = {"FULL", "RDONLY", "DISABLED", "EXPORTED"}
INELIGIBLE = ADMIN_FLAGS  # plus volatile BUSY, checked separately

_VID_RE = re.compile(r"^[A-Z0-9]{6}$")


@dataclass
class TapeVolume:
    vid: str
    pool: str
    model: str
    capacity_bytes: int
    free_bytes: int
    next_fseq: int = 1
    status: set[str] = field(default_factory=set)

    def to_dict(self, busy: bool = False) -> dict:
        flags = sorted(self.status | ({"BUSY"} if busy else set()))
        return {
            "vid": self.vid, "pool": self.pool, "model": self.model,
            "capacity_bytes": self.capacity_bytes, "free_bytes": self.free_bytes,
            "next_fseq": self.next_fseq, "status": flags or ["FREE"],
        }


@dataclass
class TapePool:
    name: str
    uid: int = 0
    gid: int = 0
    vids: set[str] = field(default_factory=set)


class VmgrState:
    def __init__(self, journal_dir, clock, plant=None,
                 eot_reserve_fraction: float = 0.01, snapshot_every: int = 1000):
        self.clock = clock
        self.eot_reserve_fraction = eot_reserve_fraction
        self.journal = Journal(journal_dir, snapshot_every=snapshot_every)
        self.pools: dict[str, TapePool] = {}
        self.volumes: dict[str, TapeVolume] = {}
        self.busy: set[str] = set()
        snapshot, records = self.journal.recover()
        if snapshot is not None:
            self._load_snapshot(snapshot)
        for rec in records:
            self._apply(rec)
        if plant is not None and not self.volumes and not self.pools:
            self._seed_from_plant(plant)

    # -- boot ------------------------------------------------------------

    def _seed_from_plant(self, plant) -> None:
        recs = [{"op": "add_pool", "name": p.name, "uid": p.uid, "gid": p.gid}
                for p in plant.pools]
        recs += [{"op": "add_volume",
                  "vol": {"vid": v.vid, "pool": v.pool, "model": v.model,
                          "capacity_bytes": v.capacity_bytes,
                          "free_bytes": v.capacity_bytes, "next_fseq": 1,
                          "status": []}}
                 for v in plant.volumes]
        if recs:
            self.journal.append_many(recs)
            for rec in recs:
                self._apply(rec)

    # -- journal plumbing ---------------------------------------------------

    def _commit(self, rec: dict) -> None:
        self.journal.append(rec)
        self._apply(rec)
        self.journal.maybe_snapshot(self._snapshot_state)

    def _snapshot_state(self) -> dict:
        return {
            "pools": [{"name": p.name, "uid": p.uid, "gid": p.gid}
                      for p in self.pools.values()],
            "volumes": [v.to_dict() for v in self.volumes.values()],
        }

    def _load_snapshot(self, snap: dict) -> None:
        for p in snap["pools"]:
            self.pools[p["name"]] = TapePool(p["name"], p["uid"], p["gid"])
        for d in snap["volumes"]:
            flags = set(d["status"]) - {"FREE", "BUSY"}
            vol = TapeVolume(vid=d["vid"], pool=d["pool"], model=d["model"],
                             capacity_bytes=d["capacity_bytes"],
                             free_bytes=d["free_bytes"],
                             next_fseq=d["next_fseq"], status=flags)
            self.volumes[vol.vid] = vol
            self.pools[vol.pool].vids.add(vol.vid)

    def _apply(self, rec: dict) -> None:
        op = rec["op"]
        if op == "add_pool":
            self.pools[rec["name"]] = TapePool(rec["name"], rec["uid"], rec["gid"])
        elif op == "add_volume":
            d = rec["vol"]
            vol = TapeVolume(vid=d["vid"], pool=d["pool"], model=d["model"],
                             capacity_bytes=d["capacity_bytes"],
                             free_bytes=d["free_bytes"],
                             next_fseq=d.get("next_fseq", 1),
                             status=set(d.get("status", [])) - {"FREE", "BUSY"})
            self.volumes[vol.vid] = vol
            self.pools[vol.pool].vids.add(vol.vid)
        elif op == "set_status":
            self.volumes[rec["vid"]].status = set(rec["flags"])
        elif op == "write":
            vol = self.volumes[rec["vid"]]
            vol.free_bytes -= rec["bytes"]
            vol.next_fseq += rec["files"]
            if vol.free_bytes <= self._reserve(vol):
                vol.status.add("FULL")
        else:
            raise BadRequest(f"unknown journal record {op!r}")

    def _reserve(self, vol: TapeVolume) -> int:
        return int(vol.capacity_bytes * self.eot_reserve_fraction)

    # -- operations ---------------------------------------------------------

    def add_pool(self, name: str, uid: int = 0, gid: int = 0) -> None:
        if name in self.pools:
            raise Exists(f"pool {name}")
        self._commit({"op": "add_pool", "name": name, "uid": uid, "gid": gid})

    def add_volume(self, vid: str, pool: str, model: str, capacity_bytes: int,
                   free_bytes: int | None = None) -> None:
        self.add_volumes([{"vid": vid, "pool": pool, "model": model,
                           "capacity_bytes": capacity_bytes,
                           "free_bytes": free_bytes}])

    def add_volumes(self, vols: list[dict]) -> None:
        recs = []
        seen = set()
        for v in vols:
            vid = v["vid"]
            if not _VID_RE.match(vid):
                raise BadRequest(f"vid must be 6 uppercase alphanumerics: {vid!r}")
            if vid in self.volumes or vid in seen:
                raise Exists(f"volume {vid}")
            if v["pool"] not in self.pools:
                raise NotFound(f"pool {v['pool']}")
            seen.add(vid)
            free = v.get("free_bytes")
            recs.append({"op": "add_volume",
                         "vol": {"vid": vid, "pool": v["pool"], "model": v["model"],
                                 "capacity_bytes": int(v["capacity_bytes"]),
                                 "free_bytes": int(free if free is not None
                                                   else v["capacity_bytes"]),
                                 "next_fseq": 1, "status": []}})
        self.journal.append_many(recs)
        for rec in recs:
            self._apply(rec)
        self.journal.maybe_snapshot(self._snapshot_state)

    def set_status(self, vid: str, flags: list[str]) -> None:
        if vid not in self.volumes:
            raise NotFound(f"volume {vid}")
        bad = set(flags) - ADMIN_FLAGS
        if bad:
            raise BadRequest(f"not settable flags: {sorted(bad)}")
        self._commit({"op": "set_status", "vid": vid, "flags": sorted(set(flags))})

    def release(self, vid: str) -> None:
        if vid not in self.volumes:
            raise NotFound(f"volume {vid}")
        self.busy.discard(vid)

    def release_pool(self, pool: str) -> int:
        if pool not in self.pools:
            raise NotFound(f"pool {pool}")
        stale = self.busy & self.pools[pool].vids
        self.busy -= stale
        return len(stale)

    def query(self, vid: str) -> TapeVolume:
        vol = self.volumes.get(vid)
        if vol is None:
            raise NotFound(f"volume {vid}")
        return vol

    def list_volumes(self, pool: str | None = None) -> list[TapeVolume]:
        if pool is not None:
            if pool not in self.pools:
                raise NotFound(f"pool {pool}")
            vids = sorted(self.pools[pool].vids)
            return [self.volumes[v] for v in vids]
        return [self.volumes[v] for v in sorted(self.volumes)]

    def eligible(self, vol: TapeVolume, requested_bytes: int) -> bool:
        return (not (vol.status & INELIGIBLE)
                and vol.vid not in self.busy
                and vol.free_bytes >= requested_bytes)

    def select_tape_for_migration(self, pool: str, requested_bytes: int,
                                  exclude_vids=()) -> TapeVolume:
        """Best fit: minimal free space among eligible volumes, then vid."""
        p = self.pools.get(pool)
        if p is None:
            raise NotFound(f"pool {pool}")
        excluded = set(exclude_vids)
        best = None
        for vid in p.vids:
            vol = self.volumes[vid]
            if vid in excluded or not self.eligible(vol, requested_bytes):
                continue
            if best is None or (vol.free_bytes, vol.vid) < (best.free_bytes, best.vid):
                best = vol
        if best is None:
            raise NoEligibleVolume(
                f"pool {pool}: nothing writable with {requested_bytes} bytes free")
        self.busy.add(best.vid)
        return best

    def update_after_write(self, vid: str, bytes_written: int, files_written: int,
                           keep_busy: bool = False) -> TapeVolume:
        vol = self.volumes.get(vid)
        if vol is None:
            raise NotFound(f"volume {vid}")
        if bytes_written > vol.free_bytes:
            raise Underflow(f"{vid}: wrote {bytes_written} > free {vol.free_bytes}")
        if bytes_written or files_written:
            self._commit({"op": "write", "vid": vid, "bytes": int(bytes_written),
                          "files": int(files_written)})
        if not keep_busy:
            self.busy.discard(vid)
        return vol

    def close(self) -> None:
        self.journal.close()
