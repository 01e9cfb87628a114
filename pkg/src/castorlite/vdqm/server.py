"""Drive queue daemon: wire surface plus blocking assignment waits."""

from __future__ import annotations

import threading

from castorlite.errors import NotFound
from castorlite.vdqm.state import VdqmState
from castorlite.wire.server import Daemon


class VdqmServer(Daemon):
    name = "vdqm"

    def __init__(self, clock, read_compat=(("9940B", "9940A"),)):
        super().__init__(clock)
        self.state = VdqmState(clock, read_compat=read_compat)
        self.state.on_assign = self._on_assign
        self._lock = threading.RLock()
        self._assign_events = {}  # req_id -> ClockEvent
        for op, fn in {
            "vdqm.register_drive": self.op_register_drive,
            "vdqm.set_drive_state": self.op_set_drive_state,
            "vdqm.submit_request": self.op_submit_request,
            "vdqm.wait_assignment": self.op_wait_assignment,
            "vdqm.release_drive": self.op_release_drive,
            "vdqm.queue_snapshot": self.op_queue_snapshot,
            "vdqm.stats": self.op_stats,
        }.items():
            self.register(op, fn)

    def _on_assign(self, req):
        ev = self._assign_events.pop(req.req_id, None)
        if ev is not None:
            ev.set()

    def op_register_drive(self, drive_name, server_name, model, state="DOWN"):
        with self._lock:
            return self.state.register_drive(drive_name, server_name, model, state).to_dict()

    def op_set_drive_state(self, drive_name, state):
        with self._lock:
            return self.state.set_drive_state(drive_name, state).to_dict()

    def op_submit_request(self, vid, access, model, client_addr=""):
        with self._lock:
            return self.state.submit_request(vid, access, model, client_addr).to_dict()

    def op_wait_assignment(self, req_id):
        with self._lock:
            req = self.state.lookup(req_id)  # NotFound if unknown
            if req.drive is None:
                ev = self._assign_events.get(req_id)
                if ev is None:
                    ev = self.clock.new_event()
                    self._assign_events[req_id] = ev
            else:
                ev = None
        if ev is not None:
            ev.wait()
        with self._lock:
            req = self.state.lookup(req_id)
            d = self.state.drives[req.drive]
            return {"req_id": req_id, "drive": d.drive_name,
                    "server": d.server_name, "vid": req.vid}

    def op_release_drive(self, drive_name, req_id):
        with self._lock:
            self.state.release_drive(drive_name, req_id)
            return {}

    def op_queue_snapshot(self):
        with self._lock:
            snap = self.state.queue_snapshot()
            self.state.check_consistency()
            return snap

    def op_stats(self, reset=False):
        with self._lock:
            samples = [{"vid": s.vid, "access": s.access,
                        "submit_time": s.submit_time, "assign_time": s.assign_time}
                       for s in self.state.wait_samples]
            if reset:
                self.state.wait_samples.clear()
            return {"waits": samples}
