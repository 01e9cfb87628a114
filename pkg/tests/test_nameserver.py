import random

import pytest

from castorlite.clock import VirtualClock
from castorlite.errors import (
    BadRequest,
    CycleError,
    DuplicateTapeLocation,
    Exists,
    IsADirectory,
    MalformedPath,
    NotADirectory,
    NotEmpty,
    NotFound,
    SizeMismatch,
    UnknownRoute,
)
from castorlite.config import RouteEntry
from castorlite.nameserver.catalog import NsCatalog
from castorlite.nameserver.routes import resolve_route

from treeoracle import TreeOracle, random_script, run_script


@pytest.fixture
def catalog(tmp_path):
    cat = NsCatalog(tmp_path / "ns", VirtualClock())
    yield cat
    cat.close()


class CatalogSubject:
    def __init__(self, cat):
        self.c = cat

    def mkdir(self, path):
        self.c.mkdir(path)

    def create_file(self, path):
        self.c.create_file(path)

    def unlink(self, path):
        self.c.unlink(path)

    def rmdir(self, path):
        self.c.rmdir(path)

    def rename(self, a, b):
        self.c.rename(a, b)

    def list_dir(self, path):
        return [e.name for e in self.c.list_dir(path)]

    def stat(self, path):
        e = self.c.stat(path)
        return {"kind": e.kind, "size_bytes": e.size_bytes}

    def set_size(self, path, size):
        e = self.c.stat(path)
        self.c.set_file_size(e.file_id, size)

    def dump(self):
        return self.c.dump()


# -- routing ---------------------------------------------------------------

ROUTES = [
    RouteEntry("cern.ch", "user", "10.0.0.1:5010"),
    RouteEntry("cern.ch", "*", "10.0.0.2:5010"),
    RouteEntry("cnaf.infn.it", "data", "10.1.0.1:5010"),
]


def test_route_alias_convention():
    r = resolve_route("/castor/cern.ch/user/a/b", ROUTES)
    assert r.alias == "cnsuser"
    assert r.domain == "cern.ch"
    assert r.instance_addr == "10.0.0.1:5010"


def test_route_second_domain():
    r = resolve_route("/castor/cnaf.infn.it/data/x", ROUTES)
    assert r.alias == "cnsdata"
    assert r.domain == "cnaf.infn.it"


def test_route_wildcard_fallback():
    r = resolve_route("/castor/cern.ch/scratch/y", ROUTES)
    assert r.instance_addr == "10.0.0.2:5010"
    assert r.alias == "cnsscratch"


def test_route_too_few_components():
    with pytest.raises(MalformedPath):
        resolve_route("/castor", ROUTES)
    with pytest.raises(MalformedPath):
        resolve_route("/castor/cern.ch", ROUTES)


def test_route_unknown_domain():
    with pytest.raises(UnknownRoute):
        resolve_route("/castor/fnal.gov/data/x", ROUTES)


def test_route_malformed():
    for bad in ("castor/cern.ch/u/v", "/tmp/x/y/z", "//castor/a/b", "/castor/a//b/c"):
        with pytest.raises(MalformedPath):
            resolve_route(bad, ROUTES)


def test_route_is_pure():
    a = resolve_route("/castor/cern.ch/user/a", ROUTES)
    b = resolve_route("/castor/cern.ch/user/a", ROUTES)
    assert a == b


# -- basic tree ops -----------------------------------------------------------

def test_root_always_exists(catalog):
    e = catalog.stat("/castor")
    assert e.kind == "directory"
    assert catalog.stat("/castor/cern.ch").kind == "directory"


def test_mkdir_then_list(catalog):
    catalog.mkdir("/castor/cern.ch/user")
    names = [e.name for e in catalog.list_dir("/castor/cern.ch")]
    assert names == ["user"]


def test_mkdir_existing_raises(catalog):
    catalog.mkdir("/castor/cern.ch/user")
    with pytest.raises(Exists):
        catalog.mkdir("/castor/cern.ch/user")


def test_mkdir_missing_parent(catalog):
    with pytest.raises(NotFound):
        catalog.mkdir("/castor/cern.ch/a/b")


def test_create_file_and_stat_size_zero(catalog):
    catalog.mkdir("/castor/cern.ch/data")
    catalog.create_file("/castor/cern.ch/data/f1")
    e = catalog.stat("/castor/cern.ch/data/f1")
    assert e.kind == "file"
    assert e.size_bytes == 0


def test_create_under_file_raises(catalog):
    catalog.mkdir("/castor/cern.ch/d")
    catalog.create_file("/castor/cern.ch/d/f")
    with pytest.raises(NotADirectory):
        catalog.create_file("/castor/cern.ch/d/f/g")


def test_set_size_past_2gb(catalog):
    catalog.mkdir("/castor/cern.ch/big")
    fid = catalog.create_file("/castor/cern.ch/big/f")
    catalog.set_file_size(fid, 3 * 2**30)
    assert catalog.stat("/castor/cern.ch/big/f").size_bytes == 3221225472
    catalog.set_file_size(fid, 2**31 + 1)
    assert catalog.stat("/castor/cern.ch/big/f").size_bytes == 2**31 + 1


def test_unlink_dir_raises(catalog):
    catalog.mkdir("/castor/cern.ch/d")
    with pytest.raises(IsADirectory):
        catalog.unlink("/castor/cern.ch/d")


def test_rmdir_nonempty_raises(catalog):
    catalog.mkdir("/castor/cern.ch/d")
    catalog.create_file("/castor/cern.ch/d/f")
    with pytest.raises(NotEmpty):
        catalog.rmdir("/castor/cern.ch/d")


def test_stat_after_unlink(catalog):
    catalog.mkdir("/castor/cern.ch/d")
    catalog.create_file("/castor/cern.ch/d/f")
    catalog.unlink("/castor/cern.ch/d/f")
    with pytest.raises(NotFound):
        catalog.stat("/castor/cern.ch/d/f")


def test_rename_moves_subtree(catalog):
    catalog.mkdir("/castor/cern.ch/a")
    catalog.mkdir("/castor/cern.ch/a/x")
    fid = catalog.create_file("/castor/cern.ch/a/x/f")
    catalog.rename("/castor/cern.ch/a", "/castor/cern.ch/b")
    with pytest.raises(NotFound):
        catalog.stat("/castor/cern.ch/a")
    assert catalog.stat("/castor/cern.ch/b/x/f").file_id == fid


def test_rename_into_own_subtree(catalog):
    catalog.mkdir("/castor/cern.ch/a")
    catalog.mkdir("/castor/cern.ch/a/b")
    with pytest.raises(CycleError):
        catalog.rename("/castor/cern.ch/a", "/castor/cern.ch/a/b/c")


def test_list_sorted_bytewise(catalog):
    catalog.mkdir("/castor/cern.ch/d")
    for name in ("b", "a", "Z", "aa"):
        catalog.mkdir(f"/castor/cern.ch/d/{name}")
    names = [e.name for e in catalog.list_dir("/castor/cern.ch/d")]
    assert names == ["Z", "a", "aa", "b"]


def test_list_empty(catalog):
    catalog.mkdir("/castor/cern.ch/empty")
    assert catalog.list_dir("/castor/cern.ch/empty") == []


def test_depth_limit(catalog):
    path = "/castor" + "/d" * 70
    with pytest.raises(MalformedPath):
        catalog.mkdir(path)


def test_component_length_limit(catalog):
    with pytest.raises(MalformedPath):
        catalog.mkdir("/castor/cern.ch/" + "x" * 256)


# -- segments ------------------------------------------------------------------

def _file(catalog, name="f", size=100):
    catalog.mkdir("/castor/cern.ch/seg") if "seg" not in [
        e.name for e in catalog.list_dir("/castor/cern.ch")] else None
    fid = catalog.create_file(f"/castor/cern.ch/seg/{name}")
    catalog.set_file_size(fid, size)
    return fid


def seg(copy_no=1, seg_seq=1, vid="A00001", fseq=1, size=100, crc=0xDEAD):
    return {"copy_no": copy_no, "seg_seq": seg_seq, "vid": vid, "fseq": fseq,
            "seg_size": size, "seg_checksum": crc}


def test_single_segment_completes_copy(catalog):
    fid = _file(catalog)
    catalog.add_segment(fid, seg())
    assert catalog.complete_copies(fid) == [1]


def test_duplicate_tape_location(catalog):
    fid = _file(catalog, "f1")
    fid2 = _file(catalog, "f2")
    catalog.add_segment(fid, seg())
    with pytest.raises(DuplicateTapeLocation):
        catalog.add_segment(fid2, seg())


def test_segment_overflow_rejected(catalog):
    fid = _file(catalog, size=100)
    catalog.add_segment(fid, seg(size=60))
    with pytest.raises(SizeMismatch):
        catalog.add_segment(fid, seg(seg_seq=2, fseq=2, size=60))
    catalog.add_segment(fid, seg(seg_seq=2, fseq=2, size=40))
    assert catalog.complete_copies(fid) == [1]


def test_segment_contiguity(catalog):
    fid = _file(catalog)
    with pytest.raises(BadRequest):
        catalog.add_segment(fid, seg(seg_seq=2))


def test_unlink_frees_tape_locations(catalog):
    fid = _file(catalog, size=100)
    catalog.add_segment(fid, seg(size=50))
    catalog.add_segment(fid, seg(seg_seq=2, fseq=2, size=50))
    catalog.unlink("/castor/cern.ch/seg/f")
    fid2 = _file(catalog, "g")
    catalog.add_segment(fid2, seg())  # (A00001,1) reusable now
    assert catalog.complete_copies(fid2) == [1]


def test_replace_segments_swaps_volume(catalog):
    fid = _file(catalog)
    catalog.add_segment(fid, seg(vid="A00001"))
    catalog.replace_segments(fid, 1, [seg(vid="B00001")])
    segs = catalog.get_segments(fid)
    assert [s.vid for s in segs] == ["B00001"]
    assert segs[0].seg_checksum == 0xDEAD
    assert catalog.segments_on_vid("A00001") == []
    assert catalog.complete_copies(fid) == [1]


def test_replace_segments_incomplete_rejected(catalog):
    fid = _file(catalog, size=100)
    catalog.add_segment(fid, seg())
    with pytest.raises(SizeMismatch):
        catalog.replace_segments(fid, 1, [seg(vid="B00001", size=99)])


def test_replace_segments_atomic_on_error(catalog):
    fid = _file(catalog)
    other = _file(catalog, "other")
    catalog.add_segment(fid, seg(vid="A00001"))
    catalog.add_segment(other, seg(vid="C00001"))
    with pytest.raises(DuplicateTapeLocation):
        catalog.replace_segments(fid, 1, [seg(vid="C00001")])
    assert [s.vid for s in catalog.get_segments(fid)] == ["A00001"]


def test_two_copies_on_distinct_vids(catalog):
    fid = _file(catalog)
    catalog.add_segment(fid, seg(copy_no=1, vid="A00001"))
    catalog.add_segment(fid, seg(copy_no=2, vid="B00001"))
    assert catalog.complete_copies(fid) == [1, 2]


# -- oracle equivalence ------------------------------------------------------------

def test_random_scripts_match_oracle(tmp_path):
    rng = random.Random(1234)
    for trial in range(3):
        cat = NsCatalog(tmp_path / f"ns{trial}", VirtualClock())
        try:
            run_script(CatalogSubject(cat), TreeOracle(),
                       random_script(rng, 500), compare_every=10)
        finally:
            cat.close()


# -- durability ----------------------------------------------------------------------

def test_reopen_preserves_state(tmp_path):
    clock = VirtualClock()
    cat = NsCatalog(tmp_path / "ns", clock)
    cat.mkdir("/castor/cern.ch/u")
    fid = cat.create_file("/castor/cern.ch/u/f")
    cat.set_file_size(fid, 2**40 + 17, checksum=0xABCD)
    cat.add_segment(fid, seg(size=2**40 + 17))
    before = cat.dump()
    cat.close()

    cat2 = NsCatalog(tmp_path / "ns", clock)
    assert cat2.dump() == before
    e = cat2.stat("/castor/cern.ch/u/f")
    assert e.size_bytes == 2**40 + 17
    assert e.checksum == 0xABCD
    assert [s.vid for s in cat2.get_segments(fid)] == ["A00001"]
    cat2.close()


def test_snapshot_rotation_equivalent(tmp_path):
    clock = VirtualClock()
    cat = NsCatalog(tmp_path / "ns", clock, snapshot_every=20)
    rng = random.Random(7)
    for i in range(60):
        try:
            cat.mkdir(f"/castor/cern.ch/{rng.choice('abc')}{i % 7}")
        except Exception:  # noqa: BLE001 - collisions are fine
            pass
    before = cat.dump()
    cat.close()
    cat2 = NsCatalog(tmp_path / "ns", clock, snapshot_every=20)
    assert cat2.dump() == before
    cat2.close()


def test_random_u64_size_survives_reopen(tmp_path):
    clock = VirtualClock()
    rng = random.Random(99)
    sizes = [rng.getrandbits(63) for _ in range(20)]
    cat = NsCatalog(tmp_path / "ns", clock)
    cat.mkdir("/castor/cern.ch/r")
    fids = []
    for i, size in enumerate(sizes):
        fid = cat.create_file(f"/castor/cern.ch/r/f{i}")
        cat.set_file_size(fid, size)
        fids.append(fid)
    cat.close()
    cat2 = NsCatalog(tmp_path / "ns", clock)
    for fid, size in zip(fids, sizes):
        assert cat2._entry(fid).size_bytes == size
    cat2.close()
