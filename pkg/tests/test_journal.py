import os

from castorlite.journal import Journal


def test_empty_recovery(tmp_path):
    j = Journal(tmp_path / "j")
    snap, records = j.recover()
    assert snap is None
    assert records == []
    j.close()


def test_append_and_replay(tmp_path):
    j = Journal(tmp_path / "j")
    j.recover()
    j.append({"op": "a", "x": 1})
    j.append({"op": "b", "x": 2**63 - 1})
    j.close()

    j2 = Journal(tmp_path / "j")
    snap, records = j2.recover()
    assert snap is None
    assert [r["op"] for r in records] == ["a", "b"]
    assert records[1]["x"] == 2**63 - 1
    j2.close()


def test_torn_tail_discarded(tmp_path):
    j = Journal(tmp_path / "j")
    j.recover()
    j.append({"op": "a"})
    j.append({"op": "b"})
    j.close()
    path = tmp_path / "j" / "journal.log"
    size = path.stat().st_size
    with open(path, "r+b") as fp:
        fp.truncate(size - 3)  # tear the last record

    j2 = Journal(tmp_path / "j")
    _, records = j2.recover()
    assert [r["op"] for r in records] == ["a"]
    # appending after recovery must not resurrect the torn bytes
    j2.append({"op": "c"})
    j2.close()
    j3 = Journal(tmp_path / "j")
    _, records = j3.recover()
    assert [r["op"] for r in records] == ["a", "c"]
    j3.close()


def test_snapshot_rotation(tmp_path):
    j = Journal(tmp_path / "j", snapshot_every=5)
    j.recover()
    for i in range(4):
        j.append({"op": "w", "i": i})
    assert not j.maybe_snapshot(lambda: {"n": 4})
    j.append({"op": "w", "i": 4})
    assert j.maybe_snapshot(lambda: {"n": 5})
    j.append({"op": "w", "i": 5})
    j.close()

    j2 = Journal(tmp_path / "j")
    snap, records = j2.recover()
    assert snap == {"n": 5}
    assert [r["i"] for r in records] == [5]
    j2.close()


def test_stale_records_after_snapshot_skipped(tmp_path):
    # Crash between snapshot write and journal truncation must not
    # double-apply: simulate by restoring the old journal file.
    j = Journal(tmp_path / "j")
    j.recover()
    j.append({"op": "w", "i": 0})
    j.append({"op": "w", "i": 1})
    old = (tmp_path / "j" / "journal.log").read_bytes()
    j.snapshot({"applied": 2})
    j.close()
    (tmp_path / "j" / "journal.log").write_bytes(old)

    j2 = Journal(tmp_path / "j")
    snap, records = j2.recover()
    assert snap == {"applied": 2}
    assert records == []  # both records predate the snapshot
    j2.close()


def test_group_commit(tmp_path):
    j = Journal(tmp_path / "j")
    j.recover()
    j.append_many([{"op": "w", "i": i} for i in range(100)])
    j.close()
    j2 = Journal(tmp_path / "j")
    _, records = j2.recover()
    assert len(records) == 100
    assert [r["i"] for r in records] == list(range(100))
    j2.close()
