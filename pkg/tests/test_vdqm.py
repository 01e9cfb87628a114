import random
import time

import pytest

from castorlite.clock import VirtualClock
from castorlite.errors import IllegalTransition, NotAssigned, NotFound, UnknownModel
from castorlite.vdqm.state import VdqmState


@pytest.fixture
def q():
    return VdqmState(VirtualClock())


def up(state, name, model, server="srv1"):
    state.register_drive(name, server, model, state="UP_FREE")


# -- reference queue-discipline simulator (the FIFO oracle) --------------------

class RefQueue:
    """Independent replay of the dispatch discipline, kept deliberately dumb."""

    def __init__(self, compat):
        self.compat = compat
        self.drives = {}      # name -> [model, free?]
        self.queue = []       # req dicts in arrival order
        self.assignments = []  # (req_id, drive_name)

    def _ok(self, dmodel, req):
        return dmodel == req["model"] or (
            req["access"] == "READ" and req["model"] in self.compat.get(dmodel, ()))

    def add_drive(self, name, model):
        self.drives[name] = [model, True]

    def submit(self, req):
        free = sorted(n for n, (m, f) in self.drives.items() if f and self._ok(m, req))
        if free:
            self.drives[free[0]][1] = False
            self.assignments.append((req["req_id"], free[0]))
        else:
            self.queue.append(req)

    def free(self, name):
        self.drives[name][1] = True
        for req in self.queue:
            if self._ok(self.drives[name][0], req):
                self.queue.remove(req)
                self.drives[name][1] = False
                self.assignments.append((req["req_id"], name))
                return


# -- basics ----------------------------------------------------------------

def test_submit_with_free_drive_assigns_immediately(q):
    up(q, "d1", "9940B")
    req = q.submit_request("A00001", "WRITE", "9940B")
    assert req.drive == "d1"
    assert q.drives["d1"].state == "UP_BUSY"
    assert q.drives["d1"].mounted_vid == "A00001"


def test_submit_all_down_queues(q):
    q.register_drive("d1", "srv1", "9940B", state="DOWN")
    req = q.submit_request("A00001", "WRITE", "9940B")
    assert req.drive is None
    assert [r.req_id for r in q.waiting] == [req.req_id]


def test_drive_up_takes_oldest_compatible(q):
    q.register_drive("d1", "srv1", "9940B", state="DOWN")
    r1 = q.submit_request("A00001", "WRITE", "9940B")
    r2 = q.submit_request("A00002", "WRITE", "9940B")
    q.set_drive_state("d1", "UP_FREE")
    assert q.assigned[r1.req_id].drive == "d1"
    assert r2.drive is None


def test_illegal_transitions(q):
    up(q, "d1", "9940B")
    q.submit_request("A00001", "WRITE", "9940B")
    with pytest.raises(IllegalTransition):
        q.set_drive_state("d1", "UP_FREE")  # busy; needs release
    q.register_drive("d2", "srv1", "9940B", state="DOWN")
    with pytest.raises(IllegalTransition):
        q.set_drive_state("d2", "UP_BUSY")
    with pytest.raises(NotFound):
        q.set_drive_state("nope", "UP_FREE")


def test_release_then_absent_from_queue(q):
    up(q, "d1", "9940B")
    req = q.submit_request("A00001", "WRITE", "9940B")
    q.release_drive("d1", req.req_id)
    snap = q.queue_snapshot()
    assert snap["waiting"] == [] and snap["assigned"] == []
    assert q.drives["d1"].state == "UP_FREE"
    assert q.drives["d1"].mounted_vid == "A00001"  # last-mounted hint


def test_release_unknown_request(q):
    up(q, "d1", "9940B")
    with pytest.raises(NotAssigned):
        q.release_drive("d1", "vr999")


def test_unknown_model(q):
    up(q, "d1", "9940B")
    with pytest.raises(UnknownModel):
        q.submit_request("A00001", "WRITE", "LTO")


def test_read_compat_crosses_models(q):
    up(q, "d1", "9940B")
    req = q.submit_request("A00001", "READ", "9940A")
    assert req.drive == "d1"


def test_write_requires_exact_model(q):
    up(q, "d1", "9940B")
    with pytest.raises(UnknownModel):
        q.submit_request("A00001", "WRITE", "9940A")


def test_fifo_within_model(q):
    up(q, "d1", "9940B")
    reqs = [q.submit_request(f"A0000{i}", "WRITE", "9940B") for i in range(4)]
    assert reqs[0].drive == "d1"
    q.release_drive("d1", reqs[0].req_id)
    assert q.assigned[reqs[1].req_id].drive == "d1"
    q.release_drive("d1", reqs[1].req_id)
    assert q.assigned[reqs[2].req_id].drive == "d1"


def test_snapshot_ordered_by_submit_seq(q):
    q.register_drive("d1", "srv1", "9940B", state="DOWN")
    for i in range(3):
        q.submit_request(f"A0000{i}", "WRITE", "9940B")
    snap = q.queue_snapshot()
    seqs = [r["submit_seq"] for r in snap["waiting"]]
    assert seqs == sorted(seqs) and len(seqs) == 3


# -- randomized interleavings vs the reference oracle ---------------------------

def run_trial(rng, n_events=30):
    compat = {"9940B": {"9940A"}}
    q = VdqmState(VirtualClock(), read_compat=[("9940B", "9940A")])
    ref = RefQueue(compat)
    drives = [("d1", "9940B"), ("d2", "9940B"), ("d3", "LTO")]
    for name, model in drives:
        up(q, name, model)
        ref.add_drive(name, model)
    live = {}
    got = []
    q.on_assign = lambda req: got.append((req.req_id, req.drive))
    for _ in range(n_events):
        busy = [d.drive_name for d in q.drives.values() if d.state == "UP_BUSY"]
        if busy and rng.random() < 0.45:
            name = rng.choice(sorted(busy))
            req_id = q.drives[name].assigned_req
            q.release_drive(name, req_id)
            ref.free(name)
        else:
            model, access = rng.choice([("9940B", "WRITE"), ("LTO", "WRITE"),
                                        ("9940A", "READ"), ("9940B", "READ")])
            req = q.submit_request(f"V{rng.randrange(100):05d}", access, model)
            ref.submit(req.to_dict())
        q.check_consistency()
    assert got == ref.assignments


def test_randomized_interleavings_match_reference():
    rng = random.Random(77)
    for _ in range(200):
        run_trial(rng)


# -- bounded exhaustive exploration -----------------------------------------------

def test_exhaustive_small_state_space():
    """Every action sequence up to depth 8 keeps the dispatch invariants."""
    ACTIONS = ["submit_B", "submit_L", "up_d1", "down_d1", "up_d2", "down_d2",
               "release_d1", "release_d2"]

    def build(seq):
        q = VdqmState(VirtualClock())
        q.register_drive("d1", "s", "9940B", state="DOWN")
        q.register_drive("d2", "s", "LTO", state="DOWN")
        n = 0
        for act in seq:
            if act == "submit_B":
                q.submit_request(f"B{n:05d}", "WRITE", "9940B")
            elif act == "submit_L":
                q.submit_request(f"L{n:05d}", "WRITE", "LTO")
            elif act.startswith("up_"):
                q.set_drive_state(act[3:], "UP_FREE")
            elif act.startswith("down_"):
                q.set_drive_state(act[5:], "DOWN")
            else:
                name = act.split("_")[1]
                q.release_drive(name, q.drives[name].assigned_req)
            n += 1
        return q

    def feasible(q, act):
        try:
            if act == "submit_B":
                return any(d.model == "9940B" for d in q.drives.values())
            if act == "submit_L":
                return True
            name = act.split("_")[-1]
            d = q.drives[name]
            if act.startswith("up_"):
                return d.state == "DOWN"
            if act.startswith("down_"):
                return d.state == "UP_FREE"
            return d.state == "UP_BUSY"
        except KeyError:
            return False

    def canon(q):
        d = tuple((x.drive_name, x.state) for x in sorted(q.drives.values(),
                                                          key=lambda v: v.drive_name))
        w = tuple(r.model for r in q.waiting)
        return d, w

    seen = set()
    explored = [0]

    def explore(seq):
        q = build(seq)
        q.check_consistency()
        explored[0] += 1
        if len(seq) == 8:
            return
        key = (canon(q), len(seq))
        if key in seen:
            return
        seen.add(key)
        for act in ACTIONS:
            if feasible(q, act):
                explore(seq + [act])

    explore([])
    assert explored[0] > 1000  # meaningful coverage


def test_throughput_smoke():
    q = VdqmState(VirtualClock())
    up(q, "d1", "9940B")
    t0 = time.perf_counter()
    for i in range(10000):
        req = q.submit_request("A00001", "WRITE", "9940B")
        assert req.drive == "d1"
        q.release_drive("d1", req.req_id)
    assert time.perf_counter() - t0 < 5.0
