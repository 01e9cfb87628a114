"""Tape mover daemon.

Executes disk<->tape transfer jobs on simulated drives.  Disk bytes
move over the disk IO channel (the mover is just another client of the
disk servers); tape bytes land in the local backing store.  Every job
charges the closed-form drive timing to the clock before replying, so
callers observe mount, positioning and streaming delays in simulated
time while the physical copy runs at wall speed.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from castorlite.errors import (
    AlreadyMounted,
    BadRequest,
    ChecksumMismatch,
    NotFound,
    NotMounted,
    SourceTruncated,
)
from castorlite.mover.ring import BufferRing, pipeline_copy
from castorlite.mover.tapestore import TapeStore
from castorlite.mover.timing import job_duration, mount_cost
from castorlite.payload import GeneratedPayload
from castorlite.rfio.session import RfioSession
from castorlite.wire.server import Daemon

WIRE_CHUNK = 2**20


@dataclass
class SimulatedDrive:
    name: str
    server: str
    model_name: str
    mounted_vid: str | None = None
    head_fseq: int = 1
    busy: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "server": self.server, "model": self.model_name,
                "mounted_vid": self.mounted_vid, "head_fseq": self.head_fseq,
                "busy": self.busy}


class MoverServer(Daemon):
    name = "mover"

    def __init__(self, clock, tape_root, plant, drives=None,
                 n_buffers: int = 8, buffer_bytes: int = 4 * 2**20):
        super().__init__(clock)
        self.plant = plant
        capacities = {v.vid: v.capacity_bytes for v in plant.volumes}
        self.store = TapeStore(tape_root, capacity_for=capacities.get)
        self.ring = BufferRing(n_buffers=n_buffers, buffer_bytes=buffer_bytes)
        self.rfiod_addrs: dict[str, str] = {}
        self.drives: dict[str, SimulatedDrive] = {}
        for drive_name, server_name, model in (drives or plant.drive_records()):
            if model not in plant.models:
                raise NotFound(f"drive model {model!r} not in plant")
            self.drives[drive_name] = SimulatedDrive(drive_name, server_name, model)
        self._lock = threading.Lock()
        self.events: list[dict] = []
        for op, fn in {
            "mover.mount": self.op_mount,
            "mover.unmount": self.op_unmount,
            "mover.run_job": self.op_run_job,
            "mover.drive_status": self.op_drive_status,
            "mover.list_drives": self.op_list_drives,
            "mover.volume_usage": self.op_volume_usage,
            "mover.tape_index": self.op_tape_index,
            "mover.events": self.op_events,
        }.items():
            self.register(op, fn)

    def set_peers(self, rfiod_addrs: dict[str, str]) -> None:
        self.rfiod_addrs = dict(rfiod_addrs)

    # -- drive helpers -------------------------------------------------------

    def _drive(self, name: str) -> SimulatedDrive:
        d = self.drives.get(name)
        if d is None:
            raise NotFound(f"drive {name}")
        return d

    def _model(self, drive: SimulatedDrive):
        return self.plant.models[drive.model_name]

    def _acquire(self, drive: SimulatedDrive) -> None:
        with self._lock:
            if drive.busy:
                raise BadRequest(f"drive {drive.name} is already running a job")
            drive.busy = True

    def _release(self, drive: SimulatedDrive) -> None:
        with self._lock:
            drive.busy = False

    def _session(self, disk_server: str) -> RfioSession:
        addr = self.rfiod_addrs.get(disk_server)
        if addr is None:
            raise NotFound(f"disk server {disk_server!r} unknown to mover")
        return RfioSession(addr, clock=self.clock)

    # -- ops ----------------------------------------------------------------

    def op_mount(self, drive, vid):
        d = self._drive(drive)
        self._acquire(d)
        try:
            if d.mounted_vid is not None:
                raise AlreadyMounted(f"{d.name} has {d.mounted_vid} mounted")
            self.clock.sleep(self._model(d).mount_seconds)
            d.mounted_vid = vid
            d.head_fseq = 1
            return d.to_dict()
        finally:
            self._release(d)

    def op_unmount(self, drive):
        d = self._drive(drive)
        self._acquire(d)
        try:
            if d.mounted_vid is None:
                raise NotMounted(d.name)
            model = self._model(d)
            self.clock.sleep(model.mount_seconds * model.unmount_fraction)
            d.mounted_vid = None
            d.head_fseq = 1
            return d.to_dict()
        finally:
            self._release(d)

    def op_drive_status(self, drive):
        return self._drive(drive).to_dict()

    def op_list_drives(self):
        return {"drives": [d.to_dict() for d in
                           sorted(self.drives.values(), key=lambda d: d.name)]}

    def op_volume_usage(self, vid):
        return {"vid": vid, "used_bytes": self.store.used_bytes(vid),
                "files": self.store.next_fseq(vid) - 1}

    def op_tape_index(self, vid):
        return {"vid": vid, "index": self.store.index(vid)}

    def op_events(self, reset=False):
        with self._lock:
            out = list(self.events)
            if reset:
                self.events.clear()
        return {"events": out}

    # -- the job engine ---------------------------------------------------------

    def op_run_job(self, job):
        direction = job["direction"]
        if direction not in ("DISK_TO_TAPE", "TAPE_TO_DISK"):
            raise BadRequest(f"bad direction {direction!r}")
        size = int(job["size_bytes"])
        fseq = int(job["fseq"])
        if size <= 0:
            raise BadRequest("transfer size must be positive")
        if fseq < 1:
            raise BadRequest("fseq is 1-based")
        d = self._drive(job["drive"])
        vid = job["vid"]
        self._acquire(d)
        try:
            model = self._model(d)
            duration = job_duration(model, size, fseq, d.mounted_vid, d.head_fseq, vid)
            sess = self._session(job["disk_server"])
            try:
                if direction == "DISK_TO_TAPE":
                    bytes_done, crc = self._disk_to_tape(sess, job, vid, fseq, size)
                else:
                    bytes_done, crc = self._tape_to_disk(sess, job, vid, fseq, size)
            finally:
                sess.close_session()
            expected = job.get("expected_crc32")
            if expected is not None and crc != expected:
                raise ChecksumMismatch(
                    f"job {job.get('job_id')}: crc {crc:#010x} != expected {expected:#010x}")
            d.mounted_vid = vid
            d.head_fseq = fseq + 1
            self.clock.sleep(duration)
            report = {"job_id": job.get("job_id"), "bytes": bytes_done, "crc32": crc,
                      "sim_elapsed_s": duration, "vid": vid, "fseq": fseq,
                      "drive": d.name, "direction": direction}
            with self._lock:
                self.events.append({"t": self.clock.now(), "bytes": bytes_done,
                                    "direction": direction, "vid": vid,
                                    "drive": d.name})
            return report
        finally:
            self._release(d)

    def _disk_to_tape(self, sess, job, vid, fseq, size):
        h = sess.open(job["disk_path"], "READ")
        hid = h["handle_id"]
        try:
            if h.get("virtual"):
                payload = GeneratedPayload.from_dict(h["virtual"])
                if payload.size != size:
                    raise SourceTruncated(
                        f"disk copy holds {payload.size}, job says {size}")
                rec = self.store.write_stub_file(vid, fseq, payload)
                return rec["size"], rec["crc32"]
            if h["size"] != size:
                raise SourceTruncated(f"disk copy holds {h['size']}, job says {size}")
            offset = int(job.get("disk_offset", 0))

            def reader(n):
                parts = []
                got = 0
                while got < n:
                    chunk = sess.read(hid, min(WIRE_CHUNK, n - got))
                    if not chunk:
                        break
                    parts.append(chunk)
                    got += len(chunk)
                return b"".join(parts)

            sess.lseek(hid, offset, "SET")
            writer = self.store.begin_write(vid, fseq, size)
            try:
                total, crc = pipeline_copy(reader, writer.write, self.ring,
                                           self.clock, expected_size=size)
            except BaseException:
                writer.abort()
                raise
            rec = writer.commit(crc)
            return rec["size"], crc
        finally:
            sess.close(hid)

    def _tape_to_disk(self, sess, job, vid, fseq, size):
        meta = self.store.meta(vid, fseq)
        if meta["size"] != size:
            raise SourceTruncated(f"tape file holds {meta['size']}, job says {size}")
        kind, src = self.store.open_read(vid, fseq)
        disk_offset = int(job.get("disk_offset", 0))
        if kind == "virtual":
            if disk_offset != 0:
                raise BadRequest("generated payloads are whole-file only")
            out = sess.write_virtual(job["disk_path"], src.seed, src.size)
            return out["size"], out["crc32"]
        h = sess.open(job["disk_path"], "WRITE")
        hid = h["handle_id"]
        try:
            fp = open(src, "rb")
            cursor = [disk_offset]

            def writer(data):
                pos = 0
                while pos < len(data):
                    part = data[pos:pos + WIRE_CHUNK]
                    sess.write(hid, cursor[0], part)
                    cursor[0] += len(part)
                    pos += len(part)

            try:
                total, crc = pipeline_copy(fp.read, writer, self.ring,
                                           self.clock, expected_size=size)
            finally:
                fp.close()
            if crc != meta["crc32"]:
                raise ChecksumMismatch(
                    f"tape {vid}:{fseq} crc {crc:#010x} != index {meta['crc32']:#010x}")
            return total, crc
        finally:
            sess.close(hid)
