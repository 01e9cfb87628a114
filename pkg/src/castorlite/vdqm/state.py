"""Drive queue discipline.

Strict FIFO: requests are ordered by arrival sequence and a freed drive
always takes the oldest request it is compatible with.  Compatibility
is exact model match for writes; for reads a drive may also serve media
models listed in its read-compatibility table.  No priorities, no
mounted-volume affinity.

State is volatile by design: movers and stagers re-submit outstanding
requests when a restarted queue manager comes back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from castorlite.errors import IllegalTransition, NotAssigned, NotFound, UnknownModel

UP_FREE = "UP_FREE"
UP_BUSY = "UP_BUSY"
DOWN = "DOWN"


@dataclass
class DriveRecord:
    drive_name: str
    server_name: str
    model: str
    state: str = DOWN
    mounted_vid: str | None = None
    assigned_req: str | None = None

    def to_dict(self) -> dict:
        return {
            "drive_name": self.drive_name, "server_name": self.server_name,
            "model": self.model, "state": self.state,
            "mounted_vid": self.mounted_vid, "assigned_req": self.assigned_req,
        }


@dataclass
class VolumeRequest:
    req_id: str
    vid: str
    access: str  # READ | WRITE
    model: str
    client_addr: str
    submit_seq: int
    submit_time: float
    assign_time: float | None = None
    drive: str | None = None

    def to_dict(self) -> dict:
        return {
            "req_id": self.req_id, "vid": self.vid, "access": self.access,
            "model": self.model, "client_addr": self.client_addr,
            "submit_seq": self.submit_seq, "submit_time": self.submit_time,
            "assign_time": self.assign_time, "drive": self.drive,
        }


@dataclass
class WaitSample:
    vid: str
    access: str
    submit_time: float
    assign_time: float


class VdqmState:
    def __init__(self, clock, read_compat=(("9940B", "9940A"),)):
        self.clock = clock
        self.read_compat: dict[str, set[str]] = {}
        for drive_model, media_model in read_compat:
            self.read_compat.setdefault(drive_model, set()).add(media_model)
        self.drives: dict[str, DriveRecord] = {}
        self.waiting: list[VolumeRequest] = []  # submit_seq order
        self.assigned: dict[str, VolumeRequest] = {}
        self._next_seq = 1
        self._next_req = 1
        self.wait_samples: list[WaitSample] = []
        self.on_assign = None  # hook(req) called inside the dispatch step

    # -- compatibility ------------------------------------------------------

    def compatible(self, drive: DriveRecord, req: VolumeRequest) -> bool:
        if drive.model == req.model:
            return True
        return req.access == "READ" and req.model in self.read_compat.get(drive.model, ())

    def _any_drive_for(self, req: VolumeRequest) -> bool:
        return any(self.compatible(d, req) for d in self.drives.values())

    # -- drives ------------------------------------------------------------

    def register_drive(self, drive_name: str, server_name: str, model: str,
                       state: str = DOWN) -> DriveRecord:
        if state not in (DOWN, UP_FREE):
            raise IllegalTransition(f"cannot register a drive as {state}")
        d = DriveRecord(drive_name, server_name, model, state=state)
        self.drives[drive_name] = d
        if d.state == UP_FREE:
            self._dispatch_drive(d)
        return d

    def set_drive_state(self, drive_name: str, state: str) -> DriveRecord:
        d = self.drives.get(drive_name)
        if d is None:
            raise NotFound(f"drive {drive_name}")
        legal = {(DOWN, UP_FREE), (UP_FREE, DOWN)}
        if (d.state, state) not in legal:
            raise IllegalTransition(f"{d.state} -> {state}")
        d.state = state
        if state == UP_FREE:
            self._dispatch_drive(d)
        return d

    def release_drive(self, drive_name: str, req_id: str) -> None:
        d = self.drives.get(drive_name)
        if d is None:
            raise NotFound(f"drive {drive_name}")
        if d.state != UP_BUSY or d.assigned_req != req_id:
            raise NotAssigned(f"{drive_name} is not serving {req_id}")
        self.assigned.pop(req_id, None)
        d.assigned_req = None
        d.state = UP_FREE  # mounted_vid kept as the last-mounted hint
        self._dispatch_drive(d)

    # -- requests ------------------------------------------------------------

    def submit_request(self, vid: str, access: str, model: str,
                       client_addr: str = "") -> VolumeRequest:
        req = VolumeRequest(
            req_id=f"vr{self._next_req}", vid=vid, access=access, model=model,
            client_addr=client_addr, submit_seq=self._next_seq,
            submit_time=self.clock.now(),
        )
        if not self._any_drive_for(req):
            raise UnknownModel(f"no drive can serve model {model!r} ({access})")
        self._next_req += 1
        self._next_seq += 1
        self.waiting.append(req)
        self._dispatch_request(req)
        return req

    def lookup(self, req_id: str) -> VolumeRequest:
        for r in self.waiting:
            if r.req_id == req_id:
                return r
        r = self.assigned.get(req_id)
        if r is None:
            raise NotFound(f"request {req_id}")
        return r

    # -- dispatch ---------------------------------------------------------------

    def _assign(self, drive: DriveRecord, req: VolumeRequest) -> None:
        self.waiting.remove(req)
        drive.state = UP_BUSY
        drive.assigned_req = req.req_id
        drive.mounted_vid = req.vid
        req.drive = drive.drive_name
        req.assign_time = self.clock.now()
        self.assigned[req.req_id] = req
        self.wait_samples.append(WaitSample(req.vid, req.access,
                                            req.submit_time, req.assign_time))
        if self.on_assign is not None:
            self.on_assign(req)

    def _dispatch_drive(self, drive: DriveRecord) -> None:
        if drive.state != UP_FREE:
            return
        for req in self.waiting:  # oldest first
            if self.compatible(drive, req):
                self._assign(drive, req)
                return

    def _dispatch_request(self, req: VolumeRequest) -> None:
        free = [d for d in self.drives.values()
                if d.state == UP_FREE and self.compatible(d, req)]
        if free:
            free.sort(key=lambda d: d.drive_name)
            self._assign(free[0], req)

    # -- introspection --------------------------------------------------------------

    def queue_snapshot(self) -> dict:
        return {
            "waiting": [r.to_dict() for r in sorted(self.waiting,
                                                    key=lambda r: r.submit_seq)],
            "assigned": [r.to_dict() for r in sorted(self.assigned.values(),
                                                     key=lambda r: r.submit_seq)],
            "drives": [d.to_dict() for d in sorted(self.drives.values(),
                                                   key=lambda d: d.drive_name)],
        }

    def check_consistency(self) -> None:
        """Internal invariants; used by tests and the snapshot op."""
        for req in self.assigned.values():
            d = self.drives[req.drive]
            assert d.state == UP_BUSY and d.assigned_req == req.req_id, \
                f"assigned request {req.req_id} not matched by drive {d.drive_name}"
        busy = [d for d in self.drives.values() if d.state == UP_BUSY]
        assert len({d.assigned_req for d in busy}) == len(busy), "drive sharing a request"
        for d in busy:
            assert d.assigned_req in self.assigned
            assert d.mounted_vid == self.assigned[d.assigned_req].vid
        for d in self.drives.values():
            if d.state == UP_FREE:
                for req in self.waiting:
                    assert not self.compatible(d, req), \
                        f"free drive {d.drive_name} while compatible {req.req_id} waits"
