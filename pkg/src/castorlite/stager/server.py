"""Stager daemon: disk-pool space, migrate/recall lifecycle, repack.

Policy decisions (placement, batching, eviction, state transitions)
serialize through one lock; transfers run outside it.  The lock is
never held across a wire call or a clock wait.

Migration runs as sessions: a worker claims a tape (best-fit from the
volume manager, which marks it BUSY), gets a drive through the queue
manager, then streams consecutive queued files to consecutive file
sequence numbers until the tape stops fitting or the queue drains.
Accounting is per file (journal, catalog segment, volume fill) so a
crash mid-session loses at most the file in flight; a restarted stager
re-queues it and the complete-copies check makes re-migration
idempotent.
"""

from __future__ import annotations

import logging
import threading
from collections import deque

from castorlite.errors import (
    CastorError,
    IsADirectory,
    NoEligibleVolume,
    NoSpace,
    NotFound,
    NotOpenForWrite,
    RecallFailed,
    SingleWriter,
)
from castorlite.rfio.session import RfioSession
from castorlite.stager import state as st
from castorlite.stager.state import DiskCopy, StagerState
from castorlite.wire.client import DaemonClient
from castorlite.wire.server import Daemon

log = logging.getLogger("castorlite.stager")


class StagerServer(Daemon):
    name = "stager"

    def __init__(self, clock, journal_dir, pools, peers,
                 policy_interval_s: float = 0.0, snapshot_every: int = 1000):
        super().__init__(clock)
        self.ns = DaemonClient(peers["nameserver"], clock=clock)
        self.vmgr = DaemonClient(peers["vmgr"], clock=clock)
        self.vdqm = DaemonClient(peers["vdqm"], clock=clock)
        self.mover = DaemonClient(peers["mover"], clock=clock)
        self.rfiod_addrs = dict(peers["rfiods"])
        self.state = StagerState(journal_dir, clock, pools,
                                 snapshot_every=snapshot_every)
        if not self.state.pools:
            raise NoSpace("stager configured with no pools")
        self.default_pool = next(iter(self.state.pools))
        self.policy_interval_s = policy_interval_s
        self._lock = threading.RLock()
        self._open_writes: dict[str, dict] = {}
        self._recalls: dict[int, dict] = {}
        self._reservations: dict[int, tuple] = {}  # fid -> (fs, bytes)
        self._mig_running: set[str] = set()
        self._mig_waiters: dict[str, list] = {}
        self._stop = False
        self.counters = {"hits": 0, "misses": 0}
        self.put_events: list[dict] = []
        self.migrate_events: list[dict] = []
        for op, fn in {
            "stager.stage_out": self.op_stage_out,
            "stager.put_done": self.op_put_done,
            "stager.stage_in": self.op_stage_in,
            "stager.run_migrator": self.op_run_migrator,
            "stager.run_gc": self.op_run_gc,
            "stager.repack": self.op_repack,
            "stager.stage_qry": self.op_stage_qry,
            "stager.pool_stats": self.op_pool_stats,
            "stager.events": self.op_events,
        }.items():
            self.register(op, fn)

    # -- lifecycle -----------------------------------------------------------

    def on_start(self, server) -> None:
        self._reconcile()
        if self.policy_interval_s > 0:
            self.clock.spawn(self._policy_loop, name="stager-policy")

    def on_stop(self) -> None:
        self._stop = True
        self.state.close()

    def _session(self, server_name: str) -> RfioSession:
        addr = self.rfiod_addrs.get(server_name)
        if addr is None:
            raise NotFound(f"disk server {server_name!r} unknown to stager")
        return RfioSession(addr, clock=self.clock)

    def _physical(self, fs, file_id: int) -> str:
        return f"{fs.path}/{file_id:016x}"

    # -- recovery reconcile ------------------------------------------------------

    def _reconcile(self) -> None:
        """Align the journaled copy table with what is physically on disk."""
        for copy in list(self.state.copies.values()):
            try:
                with self._session(copy.server) as sess:
                    found = True
                    try:
                        sess.stat(copy.path)
                    except NotFound:
                        found = False
            except ConnectionError:
                continue  # disk server down; leave the record alone
            if not found or copy.state not in st.DURABLE_STATES:
                self.state.record_remove(copy.file_id)
            elif copy.state == st.MIGRATING:
                self.state.record_state(copy.file_id, st.TO_MIGRATE)
        referenced: dict[tuple[str, str], set[str]] = {}
        for copy in self.state.copies.values():
            base = copy.path.rsplit("/", 1)[-1]
            referenced.setdefault((copy.server, copy.path.rsplit("/", 1)[0]),
                                  set()).add(base)
        for ps in self.state.pools.values():
            for fs in ps.filesystems:
                keep = referenced.get((fs.server, fs.path), set())
                try:
                    with self._session(fs.server) as sess:
                        names = sess._control("list", path=fs.path)["names"]
                        for name in names:
                            logical = name[:-3] if name.endswith(".vp") else name
                            if logical not in keep:
                                sess.remove(f"{fs.path}/{logical}")
                except ConnectionError:
                    continue
            try:
                self.vmgr.call("vmgr.release_pool", pool=ps.cfg.tape_pool)
            except (CastorError, ConnectionError):
                pass
        self.state._recount()

    # -- space -------------------------------------------------------------------

    def _pool(self, name: str | None):
        name = name or self.default_pool
        ps = self.state.pools.get(name)
        if ps is None:
            raise NotFound(f"pool {name!r}")
        return ps

    def _place_with_gc(self, pool: str, need: int):
        try:
            with self._lock:
                return self.state.place(pool, need)
        except NoSpace:
            pass
        self._gc_pass(pool, need=need)
        with self._lock:
            return self.state.place(pool, need)  # NoSpace surfaces here

    # -- stage_out / put_done ---------------------------------------------------------

    def op_stage_out(self, path, size_hint=0, pool=None):
        ps = self._pool(pool)
        try:
            ent = self.ns.call("ns.stat", path=path)
        except NotFound:
            ent = None
        if ent is None:
            fid = self.ns.call("ns.create_file", path=path)["file_id"]
        else:
            if ent["kind"] != "file":
                raise IsADirectory(path)
            fid = ent["file_id"]
        with self._lock:
            if path in self._open_writes:
                raise SingleWriter(f"{path} already open for write")
            old = self.state.copies.get(fid)
            if old is not None and old.state not in (st.STAGED, st.TO_MIGRATE):
                raise SingleWriter(f"{path} is in transfer ({old.state})")
        if old is not None:
            self._remove_copy(old)  # overwrite: the old disk bytes are obsolete
        need = max(int(size_hint), 0)
        fs = self._place_with_gc(ps.name, need)
        physical = self._physical(fs, fid)
        with self._lock:
            fs.used_bytes += need
            self._open_writes[path] = {
                "file_id": fid, "pool": ps.name, "server": fs.server,
                "path": physical, "reserved": need,
            }
        return {"server": fs.server, "path": physical, "file_id": fid}

    def op_put_done(self, path):
        with self._lock:
            ow = self._open_writes.pop(path, None)
        if ow is None:
            raise NotOpenForWrite(path)
        with self._session(ow["server"]) as sess:
            try:
                ck = sess.checksum(ow["path"])
            except NotFound:
                h = sess.open(ow["path"], "WRITE")  # never written: empty file
                sess.close(h["handle_id"])
                ck = {"size": 0, "crc32": 0}
        self.ns.call("ns.set_file_size", file_id=ow["file_id"],
                     size_bytes=ck["size"], checksum=ck["crc32"])
        now = self.clock.now()
        copy = DiskCopy(file_id=ow["file_id"], pool=ow["pool"], server=ow["server"],
                        path=ow["path"], size_bytes=ck["size"], state=st.TO_MIGRATE,
                        last_access=now, crc32=ck["crc32"], created=now)
        with self._lock:
            fs = self.state.find_fs(ow["pool"], ow["server"], ow["path"])
            if fs is not None:
                fs.used_bytes += ck["size"] - ow["reserved"]
            self.state.record_copy(copy)
            self.put_events.append({"t": now, "bytes": ck["size"],
                                    "file_id": ow["file_id"]})
        if self.policy_interval_s > 0 and self._migration_due(ow["pool"]):
            self._spawn_migrator(ow["pool"])
        return {"size_bytes": ck["size"], "crc32": ck["crc32"]}

    def _remove_copy(self, copy: DiskCopy) -> None:
        with self._lock:
            live = self.state.copies.get(copy.file_id)
            if live is None:
                return
            live.state = st.INVALID
        try:
            with self._session(copy.server) as sess:
                sess.remove(copy.path)
        except (ConnectionError, CastorError):
            pass
        with self._lock:
            fs = self.state.find_fs(copy.pool, copy.server, copy.path)
            if fs is not None:
                fs.used_bytes -= copy.size_bytes
            self.state.record_remove(copy.file_id)

    # -- stage_in ------------------------------------------------------------------

    def op_stage_in(self, path, pool=None):
        ent = self.ns.call("ns.stat", path=path)
        if ent["kind"] != "file":
            raise IsADirectory(path)
        fid = ent["file_id"]
        while True:
            with self._lock:
                for ow in self._open_writes.values():
                    if ow["file_id"] == fid:
                        self.counters["hits"] += 1
                        return {"server": ow["server"], "path": ow["path"],
                                "file_id": fid, "cache_hit": True}
                copy = self.state.copies.get(fid)
                if copy is not None and copy.state in (st.STAGED, st.TO_MIGRATE,
                                                       st.MIGRATING):
                    copy.last_access = self.clock.now()
                    self.counters["hits"] += 1
                    return {"server": copy.server, "path": copy.path,
                            "file_id": fid, "cache_hit": True}
                rec = self._recalls.get(fid)
                if rec is None:
                    rec = {"event": self.clock.new_event(), "error": None}
                    self._recalls[fid] = rec
                    self.counters["misses"] += 1
                    break
            rec["event"].wait()
            if rec["error"] is not None:
                raise RecallFailed(rec["error"])
            # recall finished; loop to take the cache-hit branch
        try:
            loc = self._do_recall(fid, ent, (pool or self.default_pool))
        except CastorError as exc:
            rec["error"] = f"{exc.code}: {exc.message}"
            with self._lock:
                self._recalls.pop(fid, None)
            rec["event"].set()
            if isinstance(exc, (NotFound, NoSpace)) or exc.code == "NoTapeCopy":
                raise
            raise RecallFailed(rec["error"]) from exc
        except Exception as exc:  # noqa: BLE001
            rec["error"] = str(exc)
            with self._lock:
                self._recalls.pop(fid, None)
            rec["event"].set()
            raise RecallFailed(rec["error"]) from exc
        with self._lock:
            self._recalls.pop(fid, None)
        rec["event"].set()
        return loc

    def _complete_copies(self, fid: int, size: int, segments: list[dict]) -> dict:
        by_copy: dict[int, list[dict]] = {}
        for seg in segments:
            by_copy.setdefault(seg["copy_no"], []).append(seg)
        complete = {}
        for copy_no, segs in by_copy.items():
            segs.sort(key=lambda s: s["seg_seq"])
            if sum(s["seg_size"] for s in segs) == size:
                complete[copy_no] = segs
        return complete

    def _do_recall(self, fid: int, ent: dict, pool: str) -> dict:
        size = ent["size_bytes"]
        segments = self.ns.call("ns.get_segments", file_id=fid)["segments"]
        complete = self._complete_copies(fid, size, segments)
        if not complete:
            raise NoEligibleVolume.__bases__[0]("") if False else _no_tape_copy(fid)
        segs = complete[min(complete)]
        fs = self._place_with_gc(pool, size)
        physical = self._physical(fs, fid)
        with self._lock:
            fs.used_bytes += size
            self._reservations[fid] = (fs, size)
        try:
            offset = 0
            for seg in segs:
                vol = self.vmgr.call("vmgr.query", vid=seg["vid"])
                req = self.vdqm.call("vdqm.submit_request", vid=seg["vid"],
                                     access="READ", model=vol["model"],
                                     client_addr="stager")
                asg = self.vdqm.call("vdqm.wait_assignment", req_id=req["req_id"])
                try:
                    self.mover.call("mover.run_job", job={
                        "job_id": f"rc-{fid}-{seg['copy_no']}-{seg['seg_seq']}",
                        "direction": "TAPE_TO_DISK", "disk_server": fs.server,
                        "disk_path": physical, "vid": seg["vid"],
                        "fseq": seg["fseq"], "size_bytes": seg["seg_size"],
                        "disk_offset": offset,
                        "expected_crc32": seg["seg_checksum"],
                        "drive": asg["drive"],
                    })
                finally:
                    self.vdqm.call("vdqm.release_drive", drive_name=asg["drive"],
                                   req_id=req["req_id"])
                offset += seg["seg_size"]
            with self._session(fs.server) as sess:
                ck = sess.checksum(physical)
            if ck["size"] != size or (ent.get("checksum") is not None
                                      and ck["crc32"] != ent["checksum"]):
                raise RecallFailed(
                    f"recalled copy of file {fid} fails verification "
                    f"(size {ck['size']}/{size}, crc {ck['crc32']:#010x})")
        except BaseException:
            try:
                with self._session(fs.server) as sess:
                    sess.remove(physical)
            except (ConnectionError, CastorError):
                pass
            with self._lock:
                self._reservations.pop(fid, None)
                fs.used_bytes -= size
            raise
        now = self.clock.now()
        copy = DiskCopy(file_id=fid, pool=pool, server=fs.server, path=physical,
                        size_bytes=size, state=st.STAGED, last_access=now,
                        crc32=ck["crc32"], created=now)
        with self._lock:
            self._reservations.pop(fid, None)
            self.state.record_copy(copy)  # reservation becomes the live copy
        return {"server": fs.server, "path": physical, "file_id": fid,
                "cache_hit": False}

    # -- garbage collection --------------------------------------------------------

    def op_run_gc(self, pool=None):
        ps = self._pool(pool)
        with self._lock:
            if ps.used_fraction() <= ps.cfg.gc_high:
                return {"evicted_files": 0, "freed_bytes": 0}
        return self._gc_pass(ps.name)

    def _gc_pass(self, pool: str, need: int | None = None) -> dict:
        """Evict STAGED copies in LRU order until the target is met."""
        ps = self.state.pools[pool]
        evicted = 0
        freed = 0
        while True:
            with self._lock:
                if need is not None:
                    try:
                        self.state.place(pool, need)
                        break  # a filesystem now fits the request
                    except NoSpace:
                        pass
                elif ps.used_fraction() <= ps.cfg.gc_low:
                    break
                victim = None
                for cand in self.state.lru_candidates(pool):
                    victim = cand
                    break
                if victim is None:
                    break
                victim.state = st.INVALID  # claim before dropping the lock
            keep = False
            try:
                copies = self.ns.call("ns.complete_copies",
                                      file_id=victim.file_id)["copies"]
                keep = not copies  # sole-copy data must never be evicted
            except NotFound:
                keep = False  # unlinked in the catalog: nothing to protect
            except ConnectionError:
                keep = True
            if keep:
                with self._lock:
                    victim.state = st.STAGED
                break
            try:
                with self._session(victim.server) as sess:
                    sess.remove(victim.path)
            except (ConnectionError, CastorError):
                pass
            with self._lock:
                fs = self.state.find_fs(victim.pool, victim.server, victim.path)
                if fs is not None:
                    fs.used_bytes -= victim.size_bytes
                self.state.record_remove(victim.file_id)
            evicted += 1
            freed += victim.size_bytes
        return {"evicted_files": evicted, "freed_bytes": freed}

    # -- migration -------------------------------------------------------------------

    def _migration_due(self, pool: str) -> bool:
        ps = self.state.pools[pool]
        bytes_q, age = self.state.migration_pressure(pool)
        return bytes_q > 0 and (bytes_q >= ps.cfg.migration_threshold_bytes
                                or age >= ps.cfg.migration_max_age_s)

    def _spawn_migrator(self, pool: str) -> None:
        with self._lock:
            if pool in self._mig_running:
                return
        self.clock.spawn(self._run_migrator_logged, pool, name=f"migrator-{pool}")

    def _run_migrator_logged(self, pool: str) -> None:
        try:
            self._run_migrator(pool)
        except CastorError as exc:
            log.warning("background migration on %s failed: %s", pool, exc)

    def op_run_migrator(self, pool=None):
        ps = self._pool(pool)
        return self._run_migrator(ps.name)

    def _run_migrator(self, pool: str) -> dict:
        while True:
            with self._lock:
                if pool not in self._mig_running:
                    self._mig_running.add(pool)
                    break
                ev = self.clock.new_event()
                self._mig_waiters.setdefault(pool, []).append(ev)
            ev.wait()
        try:
            return self._migrate_pass(pool)
        finally:
            with self._lock:
                self._mig_running.discard(pool)
                waiters = self._mig_waiters.pop(pool, [])
            for ev in waiters:
                ev.set()

    def _migrate_pass(self, pool: str) -> dict:
        ps = self.state.pools[pool]
        cfg = ps.cfg
        with self._lock:
            queued = self.state.to_migrate(pool)
            fids = [c.file_id for c in queued]
        work: deque = deque()
        done_files = 0
        if fids:
            have = self.ns.call("ns.copies_bulk", file_ids=fids)["copies"]
            for fid in fids:
                missing = [c for c in range(1, cfg.copies_required + 1)
                           if c not in have.get(str(fid), have.get(fid, []))]
                if not missing:
                    self.state.record_state(fid, st.STAGED)  # already on tape
                    done_files += 1
                else:
                    for c in missing:
                        work.append((fid, c))
        shared = {"bytes": 0, "files": done_files, "vids": set(),
                  "errors": {}, "work": work}
        qlock = threading.Lock()
        n_workers = max(1, min(cfg.migration_streams, len(work))) if work else 0
        if n_workers:
            remaining = [n_workers]
            done_ev = self.clock.new_event()

            def run_worker():
                try:
                    self._migration_worker(pool, shared, qlock)
                finally:
                    with qlock:
                        remaining[0] -= 1
                        last = remaining[0] == 0
                    if last:
                        done_ev.set()

            for _ in range(n_workers):
                self.clock.spawn(run_worker, name=f"mig-worker-{pool}")
            done_ev.wait()
        return {"files": shared["files"], "bytes": shared["bytes"],
                "tapes_used": len(shared["vids"]), "errors": shared["errors"]}

    def _open_session(self, cfg, size: int, exclude: set[str]) -> dict:
        vol = self.vmgr.call("vmgr.select_tape_for_migration",
                             pool=cfg.tape_pool, requested_bytes=size,
                             exclude_vids=sorted(exclude))
        try:
            req = self.vdqm.call("vdqm.submit_request", vid=vol["vid"],
                                 access="WRITE", model=vol["model"],
                                 client_addr="stager")
            asg = self.vdqm.call("vdqm.wait_assignment", req_id=req["req_id"])
        except BaseException:
            try:
                self.vmgr.call("vmgr.release", vid=vol["vid"])
            except (CastorError, ConnectionError):
                pass
            raise
        return {"vid": vol["vid"], "fseq": vol["next_fseq"],
                "writable": vol["free_bytes"] - vol["reserve_bytes"],
                "drive": asg["drive"], "req_id": req["req_id"],
                "bytes": 0, "files": 0}

    def _close_session(self, session: dict) -> None:
        try:
            self.vmgr.call("vmgr.update_after_write", vid=session["vid"],
                           bytes_written=0, files_written=0)
        except (CastorError, ConnectionError):
            pass
        try:
            self.vdqm.call("vdqm.release_drive", drive_name=session["drive"],
                           req_id=session["req_id"])
        except (CastorError, ConnectionError):
            pass

    def _migration_worker(self, pool: str, shared: dict, qlock) -> None:
        cfg = self.state.pools[pool].cfg
        work: deque = shared["work"]
        session = None
        try:
            while True:
                with qlock:
                    item = work.popleft() if work else None
                if item is None:
                    return
                fid, copy_no = item
                with self._lock:
                    copy = self.state.copies.get(fid)
                    if copy is None or copy.state not in (st.TO_MIGRATE, st.MIGRATING):
                        continue
                segs = self.ns.call("ns.get_segments", file_id=fid)["segments"]
                exclude = {s["vid"] for s in segs}
                if session is not None and (
                        session["vid"] in exclude
                        or copy.size_bytes > session["writable"] - session["bytes"]):
                    self._close_session(session)
                    session = None
                if session is None:
                    try:
                        session = self._open_session(cfg, copy.size_bytes, exclude)
                    except NoEligibleVolume:
                        with qlock:
                            work.appendleft(item)
                            shared["errors"]["NoEligibleVolume"] = \
                                shared["errors"].get("NoEligibleVolume", 0) + len(work)
                            work.clear()
                        return
                self.state.record_state(fid, st.MIGRATING)
                try:
                    rep = self.mover.call("mover.run_job", job={
                        "job_id": f"mg-{fid}-{copy_no}",
                        "direction": "DISK_TO_TAPE", "disk_server": copy.server,
                        "disk_path": copy.path, "vid": session["vid"],
                        "fseq": session["fseq"], "size_bytes": copy.size_bytes,
                        "expected_crc32": copy.crc32, "drive": session["drive"],
                    })
                except CastorError as exc:
                    with qlock:
                        shared["errors"][exc.code] = \
                            shared["errors"].get(exc.code, 0) + 1
                    self.state.record_state(fid, st.TO_MIGRATE)
                    self._close_session(session)
                    session = None
                    continue
                self.ns.call("ns.add_segment", file_id=fid, segment={
                    "copy_no": copy_no, "seg_seq": 1, "vid": session["vid"],
                    "fseq": session["fseq"], "seg_size": rep["bytes"],
                    "seg_checksum": rep["crc32"],
                })
                self.vmgr.call("vmgr.update_after_write", vid=session["vid"],
                               bytes_written=rep["bytes"], files_written=1,
                               keep_busy=True)
                session["fseq"] += 1
                session["bytes"] += rep["bytes"]
                session["files"] += 1
                have = self.ns.call("ns.complete_copies", file_id=fid)["copies"]
                now = self.clock.now()
                with self._lock:
                    if len(have) >= cfg.copies_required:
                        self.state.record_state(fid, st.STAGED)
                        shared["files"] += 1
                        self.migrate_events.append(
                            {"t": now, "bytes": copy.size_bytes, "file_id": fid})
                    else:
                        self.state.record_state(fid, st.TO_MIGRATE)
                    shared["bytes"] += rep["bytes"]
                    shared["vids"].add(session["vid"])
        finally:
            if session is not None:
                self._close_session(session)

    # -- repack ---------------------------------------------------------------------

    def op_repack(self, vid, target_pool, scratch_pool=None):
        scratch = (scratch_pool or self.default_pool)
        self._pool(scratch)
        segs = self.ns.call("ns.segments_on_vid", vid=vid)["segments"]
        by_copy: dict[tuple[int, int], list[dict]] = {}
        for s in segs:
            by_copy.setdefault((s["file_id"], s["copy_no"]), []).append(s)
        report = {"files_moved": 0, "bytes": 0, "new_vids": [], "failed": 0}
        new_vids: set[str] = set()
        for (fid, copy_no) in sorted(by_copy):
            try:
                moved = self._repack_one(fid, copy_no, vid, target_pool, scratch)
            except NoEligibleVolume:
                report["failed"] += len(
                    [k for k in sorted(by_copy) if k >= (fid, copy_no)])
                break
            except CastorError as exc:
                log.warning("repack of file %s copy %s failed: %s: %s",
                            fid, copy_no, exc.code, exc.message)
                report["failed"] += 1
                continue
            report["files_moved"] += 1
            report["bytes"] += moved["bytes"]
            new_vids.add(moved["vid"])
        report["new_vids"] = sorted(new_vids)
        if report["failed"] == 0:
            self.vmgr.call("vmgr.set_status", vid=vid, flags=["EXPORTED"])
            report["exported"] = True
        else:
            report["exported"] = False
        return report

    def _repack_one(self, fid: int, copy_no: int, src_vid: str,
                    target_pool: str, scratch: str) -> dict:
        path = self.ns.call("ns.path_of", file_id=fid)["path"]
        loc = self.op_stage_in(path, pool=scratch)  # CRC-verified recall or hit
        with self._lock:
            copy = self.state.copies.get(fid)
            size = copy.size_bytes
            crc = copy.crc32
        segs = self.ns.call("ns.get_segments", file_id=fid)["segments"]
        exclude = {s["vid"] for s in segs}
        session = self._open_session(
            self.state.pools[scratch].cfg.__class__(  # one-file session on target
                name="repack", tape_pool=target_pool, filesystems=[]),
            size, exclude)
        try:
            rep = self.mover.call("mover.run_job", job={
                "job_id": f"rp-{fid}-{copy_no}",
                "direction": "DISK_TO_TAPE", "disk_server": loc["server"],
                "disk_path": loc["path"], "vid": session["vid"],
                "fseq": session["fseq"], "size_bytes": size,
                "expected_crc32": crc, "drive": session["drive"],
            })
            self.ns.call("ns.replace_segments", file_id=fid, copy_no=copy_no,
                         segments=[{
                             "seg_seq": 1, "vid": session["vid"],
                             "fseq": session["fseq"], "seg_size": rep["bytes"],
                             "seg_checksum": rep["crc32"],
                         }])
            self.vmgr.call("vmgr.update_after_write", vid=session["vid"],
                           bytes_written=rep["bytes"], files_written=1,
                           keep_busy=True)
            return {"bytes": rep["bytes"], "vid": session["vid"]}
        finally:
            self._close_session(session)

    # -- policy loop -------------------------------------------------------------------

    def _policy_loop(self) -> None:
        while not self._stop:
            self.clock.sleep(self.policy_interval_s)
            if self._stop:
                return
            for pool, ps in self.state.pools.items():
                try:
                    if self._migration_due(pool):
                        self._spawn_migrator(pool)
                    if ps.used_fraction() > ps.cfg.gc_high:
                        self._gc_pass(pool)
                except (CastorError, ConnectionError) as exc:
                    log.warning("policy pass on %s: %s", pool, exc)

    # -- introspection -------------------------------------------------------------------

    def op_stage_qry(self, path=None, pool=None):
        with self._lock:
            copies = list(self.state.copies.values())
            open_writes = dict(self._open_writes)
        if path is not None:
            ent = self.ns.call("ns.stat", path=path)
            fid = ent["file_id"]
            copies = [c for c in copies if c.file_id == fid]
            open_writes = {p: ow for p, ow in open_writes.items()
                           if ow["file_id"] == fid}
        if pool is not None:
            copies = [c for c in copies if c.pool == pool]
        return {
            "copies": [c.to_dict() for c in sorted(copies, key=lambda c: c.file_id)],
            "open_writes": [{"path": p, **ow} for p, ow in sorted(open_writes.items())],
        }

    def op_pool_stats(self, pool=None):
        out = []
        with self._lock:
            pools = ([self._pool(pool)] if pool else self.state.pools.values())
            for ps in pools:
                states: dict[str, int] = {}
                for c in self.state.copies.values():
                    if c.pool == ps.name:
                        states[c.state] = states.get(c.state, 0) + 1
                out.append({
                    "pool": ps.name,
                    "used_fraction": ps.used_fraction(),
                    "filesystems": [{
                        "server": fs.server, "path": fs.path,
                        "capacity_bytes": fs.capacity_bytes,
                        "used_bytes": fs.used_bytes,
                    } for fs in ps.filesystems],
                    "states": states,
                    "to_migrate_bytes": self.state.migration_pressure(ps.name)[0],
                })
        return {"pools": out, "counters": dict(self.counters)}

    def op_events(self, reset=False):
        with self._lock:
            out = {"puts": list(self.put_events),
                   "migrated": list(self.migrate_events)}
            if reset:
                self.put_events.clear()
                self.migrate_events.clear()
        return out


def _no_tape_copy(fid: int):
    from castorlite.errors import NoTapeCopy
    return NoTapeCopy(f"file {fid} has no complete tape copy")
