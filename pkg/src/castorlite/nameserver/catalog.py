"""Namespace catalog: the directory tree, file metadata and tape segments.

All mutations flow through the journal before touching memory, so a
crash after an acknowledged reply can always be replayed.  Mutation
records carry every allocated value (ids, timestamps); replaying them
is pure application with no re-validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

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
)
from castorlite.journal import Journal
from castorlite.nameserver.routes import ROOT, split_path

DIR = "directory"
FILE = "file"


@dataclass
class NsEntry:
    file_id: int
    parent_id: int
    name: str
    kind: str
    size_bytes: int = 0
    mode: int = 0o755
    uid: int = 0
    gid: int = 0
    ctime: int = 0
    mtime: int = 0
    checksum: int | None = None

    def to_dict(self) -> dict:
        return {
            "file_id": self.file_id, "parent_id": self.parent_id,
            "name": self.name, "kind": self.kind,
            "size_bytes": self.size_bytes, "mode": self.mode,
            "uid": self.uid, "gid": self.gid,
            "ctime": self.ctime, "mtime": self.mtime,
            "checksum": self.checksum,
        }


@dataclass
class Segment:
    file_id: int
    copy_no: int
    seg_seq: int
    vid: str
    fseq: int
    seg_size: int
    seg_checksum: int

    def to_dict(self) -> dict:
        return {
            "file_id": self.file_id, "copy_no": self.copy_no,
            "seg_seq": self.seg_seq, "vid": self.vid, "fseq": self.fseq,
            "seg_size": self.seg_size, "seg_checksum": self.seg_checksum,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(file_id=d["file_id"], copy_no=d["copy_no"], seg_seq=d["seg_seq"],
                   vid=d["vid"], fseq=d["fseq"], seg_size=d["seg_size"],
                   seg_checksum=d["seg_checksum"])


@dataclass
class _State:
    entries: dict[int, NsEntry] = field(default_factory=dict)
    children: dict[int, dict[str, int]] = field(default_factory=dict)
    segments: dict[int, list[Segment]] = field(default_factory=dict)
    tape_locations: dict[tuple[str, int], int] = field(default_factory=dict)
    next_file_id: int = 1


class NsCatalog:
    """Journal-backed namespace state. Callers serialize mutations."""

    ROOT_ID = 1

    def __init__(self, journal_dir, clock, domain: str = "cern.ch",
                 snapshot_every: int = 1000):
        self.clock = clock
        self.domain = domain
        self.journal = Journal(journal_dir, snapshot_every=snapshot_every)
        self.st = _State()
        snapshot, records = self.journal.recover()
        if snapshot is not None:
            self._load_snapshot(snapshot)
        for rec in records:
            self._apply(rec)
        if self.ROOT_ID not in self.st.entries:
            self._bootstrap()

    # -- boot -----------------------------------------------------------------

    def _bootstrap(self):
        ts = self.clock.epoch_us()
        self._commit({"op": "mkdir", "file_id": 1, "parent": 0, "name": ROOT,
                      "mode": 0o755, "uid": 0, "gid": 0, "ts": ts})
        self._commit({"op": "mkdir", "file_id": 2, "parent": 1, "name": self.domain,
                      "mode": 0o755, "uid": 0, "gid": 0, "ts": ts})
        self.st.next_file_id = 3

    # -- journal plumbing -------------------------------------------------------

    def _commit(self, rec: dict) -> None:
        self.journal.append(rec)
        self._apply(rec)
        self.journal.maybe_snapshot(self._snapshot_state)

    def _snapshot_state(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.st.entries.values()],
            "segments": [s.to_dict() for segs in self.st.segments.values() for s in segs],
            "next_file_id": self.st.next_file_id,
        }

    def _load_snapshot(self, snap: dict) -> None:
        st = _State()
        for d in snap["entries"]:
            e = NsEntry(**d)
            st.entries[e.file_id] = e
        # children maps need a second pass: parents before children is not
        # guaranteed in the snapshot ordering
        for e in st.entries.values():
            if e.kind == DIR:
                st.children.setdefault(e.file_id, {})
        for e in st.entries.values():
            if e.file_id != self.ROOT_ID:
                st.children.setdefault(e.parent_id, {})[e.name] = e.file_id
        for d in snap["segments"]:
            seg = Segment.from_dict(d)
            st.segments.setdefault(seg.file_id, []).append(seg)
            st.tape_locations[(seg.vid, seg.fseq)] = seg.file_id
        for segs in st.segments.values():
            segs.sort(key=lambda s: (s.copy_no, s.seg_seq))
        st.next_file_id = snap["next_file_id"]
        self.st = st

    # -- replay application: one function per record kind ------------------------

    def _apply(self, rec: dict) -> None:
        st = self.st
        op = rec["op"]
        if op in ("mkdir", "create"):
            kind = DIR if op == "mkdir" else FILE
            e = NsEntry(file_id=rec["file_id"], parent_id=rec["parent"],
                        name=rec["name"], kind=kind, mode=rec["mode"],
                        uid=rec["uid"], gid=rec["gid"],
                        ctime=rec["ts"], mtime=rec["ts"])
            st.entries[e.file_id] = e
            if kind == DIR:
                st.children.setdefault(e.file_id, {})
            if rec["parent"]:
                st.children.setdefault(rec["parent"], {})[e.name] = e.file_id
                parent = st.entries.get(rec["parent"])
                if parent:
                    parent.mtime = rec["ts"]
            st.next_file_id = max(st.next_file_id, e.file_id + 1)
        elif op == "set_size":
            e = st.entries[rec["file_id"]]
            e.size_bytes = rec["size"]
            e.checksum = rec.get("checksum")
            e.mtime = rec["ts"]
        elif op == "remove":
            e = st.entries.pop(rec["file_id"])
            st.children.get(e.parent_id, {}).pop(e.name, None)
            if e.kind == DIR:
                st.children.pop(e.file_id, None)
            for seg in st.segments.pop(e.file_id, []):
                st.tape_locations.pop((seg.vid, seg.fseq), None)
            parent = st.entries.get(e.parent_id)
            if parent:
                parent.mtime = rec["ts"]
        elif op == "rename":
            e = st.entries[rec["file_id"]]
            st.children[e.parent_id].pop(e.name, None)
            old_parent = st.entries.get(e.parent_id)
            if old_parent:
                old_parent.mtime = rec["ts"]
            e.parent_id = rec["new_parent"]
            e.name = rec["new_name"]
            st.children.setdefault(e.parent_id, {})[e.name] = e.file_id
            new_parent = st.entries.get(e.parent_id)
            if new_parent:
                new_parent.mtime = rec["ts"]
        elif op == "add_segment":
            seg = Segment.from_dict(rec["segment"])
            st.segments.setdefault(seg.file_id, []).append(seg)
            st.segments[seg.file_id].sort(key=lambda s: (s.copy_no, s.seg_seq))
            st.tape_locations[(seg.vid, seg.fseq)] = seg.file_id
        elif op == "replace_segments":
            fid, copy_no = rec["file_id"], rec["copy_no"]
            old = [s for s in st.segments.get(fid, []) if s.copy_no == copy_no]
            for s in old:
                st.tape_locations.pop((s.vid, s.fseq), None)
            keep = [s for s in st.segments.get(fid, []) if s.copy_no != copy_no]
            new = [Segment.from_dict(d) for d in rec["segments"]]
            merged = keep + new
            merged.sort(key=lambda s: (s.copy_no, s.seg_seq))
            if merged:
                st.segments[fid] = merged
            else:
                st.segments.pop(fid, None)
            for s in new:
                st.tape_locations[(s.vid, s.fseq)] = fid
        else:
            raise BadRequest(f"unknown journal record {op!r}")

    # -- lookup helpers -----------------------------------------------------------

    def _resolve(self, path: str) -> NsEntry:
        parts = split_path(path)
        node = self.st.entries.get(self.ROOT_ID)
        if node is None:
            raise NotFound(path)
        for comp in parts[1:]:
            kids = self.st.children.get(node.file_id)
            if kids is None:
                raise NotFound(path)
            nxt = kids.get(comp)
            if nxt is None:
                raise NotFound(path)
            node = self.st.entries[nxt]
        return node

    def _resolve_parent(self, path: str) -> tuple[NsEntry, str]:
        parts = split_path(path)
        if len(parts) < 2:
            raise MalformedPath(f"cannot create the root: {path!r}")
        parent_path = "/" + "/".join(parts[:-1])
        parent = self._resolve(parent_path)
        return parent, parts[-1]

    def _entry(self, file_id: int) -> NsEntry:
        e = self.st.entries.get(file_id)
        if e is None:
            raise NotFound(f"file_id {file_id}")
        return e

    def path_of(self, file_id: int) -> str:
        e = self._entry(file_id)
        parts = []
        while True:
            parts.append(e.name)
            if e.file_id == self.ROOT_ID:
                break
            e = self._entry(e.parent_id)
        return "/" + "/".join(reversed(parts))

    # -- operations ------------------------------------------------------------------

    def _make(self, path: str, mode: int, uid: int, gid: int, kind: str) -> int:
        parent, name = self._resolve_parent(path)
        if parent.kind != DIR:
            raise NotADirectory(self.path_of(parent.file_id))
        if name in self.st.children.get(parent.file_id, {}):
            raise Exists(path)
        fid = self.st.next_file_id
        self._commit({"op": "mkdir" if kind == DIR else "create", "file_id": fid,
                      "parent": parent.file_id, "name": name, "mode": mode,
                      "uid": uid, "gid": gid, "ts": self.clock.epoch_us()})
        return fid

    def mkdir(self, path: str, mode: int = 0o755, uid: int = 0, gid: int = 0) -> int:
        return self._make(path, mode, uid, gid, DIR)

    def create_file(self, path: str, mode: int = 0o644, uid: int = 0, gid: int = 0) -> int:
        return self._make(path, mode, uid, gid, FILE)

    def stat(self, path: str) -> NsEntry:
        return self._resolve(path)

    def set_file_size(self, file_id: int, size_bytes: int, checksum: int | None = None) -> None:
        e = self._entry(file_id)
        if e.kind != FILE:
            raise IsADirectory(self.path_of(file_id))
        if size_bytes < 0 or size_bytes >= 2**64:
            raise BadRequest(f"size out of range: {size_bytes}")
        self._commit({"op": "set_size", "file_id": file_id, "size": size_bytes,
                      "checksum": checksum, "ts": self.clock.epoch_us()})

    def unlink(self, path: str) -> None:
        e = self._resolve(path)
        if e.kind == DIR:
            raise IsADirectory(path)
        self._commit({"op": "remove", "file_id": e.file_id, "ts": self.clock.epoch_us()})

    def rmdir(self, path: str) -> None:
        e = self._resolve(path)
        if e.kind != DIR:
            raise NotADirectory(path)
        if e.file_id == self.ROOT_ID:
            raise BadRequest("refusing to remove the namespace root")
        if self.st.children.get(e.file_id):
            raise NotEmpty(path)
        self._commit({"op": "remove", "file_id": e.file_id, "ts": self.clock.epoch_us()})

    def rename(self, old_path: str, new_path: str) -> None:
        e = self._resolve(old_path)
        if e.file_id == self.ROOT_ID:
            raise BadRequest("refusing to rename the namespace root")
        new_parent, new_name = self._resolve_parent(new_path)
        if new_parent.kind != DIR:
            raise NotADirectory(new_path)
        if new_name in self.st.children.get(new_parent.file_id, {}):
            raise Exists(new_path)
        # walking up from the destination must not pass through the source
        probe = new_parent
        while True:
            if probe.file_id == e.file_id:
                raise CycleError(f"{new_path!r} is inside {old_path!r}")
            if probe.file_id == self.ROOT_ID:
                break
            probe = self._entry(probe.parent_id)
        self._commit({"op": "rename", "file_id": e.file_id,
                      "new_parent": new_parent.file_id, "new_name": new_name,
                      "ts": self.clock.epoch_us()})

    def list_dir(self, path: str) -> list[NsEntry]:
        e = self._resolve(path)
        if e.kind != DIR:
            raise NotADirectory(path)
        kids = self.st.children.get(e.file_id, {})
        ordered = sorted(kids.items(), key=lambda kv: kv[0].encode("utf-8"))
        return [self.st.entries[fid] for _, fid in ordered]

    # -- segments ---------------------------------------------------------------

    def _copy_segments(self, file_id: int, copy_no: int) -> list[Segment]:
        return [s for s in self.st.segments.get(file_id, []) if s.copy_no == copy_no]

    def get_segments(self, file_id: int) -> list[Segment]:
        self._entry(file_id)
        return list(self.st.segments.get(file_id, []))

    def segments_on_vid(self, vid: str) -> list[Segment]:
        return [s for segs in self.st.segments.values() for s in segs if s.vid == vid]

    def complete_copies(self, file_id: int) -> list[int]:
        """copy_no values whose segment sizes sum to the file size."""
        e = self._entry(file_id)
        by_copy: dict[int, int] = {}
        for s in self.st.segments.get(file_id, []):
            by_copy[s.copy_no] = by_copy.get(s.copy_no, 0) + s.seg_size
        return sorted(c for c, total in by_copy.items() if total == e.size_bytes)

    def add_segment(self, file_id: int, segment: dict) -> None:
        e = self._entry(file_id)
        if e.kind != FILE:
            raise IsADirectory(self.path_of(file_id))
        seg = Segment.from_dict({**segment, "file_id": file_id})
        if seg.fseq < 1:
            raise BadRequest("fseq is 1-based")
        if (seg.vid, seg.fseq) in self.st.tape_locations:
            raise DuplicateTapeLocation(f"({seg.vid},{seg.fseq}) already in catalog")
        existing = self._copy_segments(file_id, seg.copy_no)
        if seg.seg_seq != len(existing) + 1:
            raise BadRequest(
                f"seg_seq {seg.seg_seq} breaks contiguity (have {len(existing)})")
        total = sum(s.seg_size for s in existing) + seg.seg_size
        if total > e.size_bytes:
            raise SizeMismatch(
                f"copy {seg.copy_no} would hold {total} > file size {e.size_bytes}")
        self._commit({"op": "add_segment", "segment": seg.to_dict()})

    def replace_segments(self, file_id: int, copy_no: int, segments: list[dict]) -> None:
        e = self._entry(file_id)
        if e.kind != FILE:
            raise IsADirectory(self.path_of(file_id))
        new = [Segment.from_dict({**d, "file_id": file_id, "copy_no": copy_no})
               for d in segments]
        new.sort(key=lambda s: s.seg_seq)
        if [s.seg_seq for s in new] != list(range(1, len(new) + 1)):
            raise BadRequest("replacement segments must be contiguous from 1")
        if new and sum(s.seg_size for s in new) != e.size_bytes:
            raise SizeMismatch("replacement copy is not complete")
        own = {(s.vid, s.fseq) for s in self._copy_segments(file_id, copy_no)}
        seen = set()
        for s in new:
            key = (s.vid, s.fseq)
            if key in seen or (key in self.st.tape_locations and key not in own):
                raise DuplicateTapeLocation(f"({s.vid},{s.fseq}) already in catalog")
            seen.add(key)
        self._commit({"op": "replace_segments", "file_id": file_id,
                      "copy_no": copy_no, "segments": [s.to_dict() for s in new]})

    # -- introspection ----------------------------------------------------------------

    def dump(self) -> dict:
        """Canonical observable state: path -> (kind, size). For oracles."""
        out = {}

        def walk(fid: int, prefix: str):
            e = self.st.entries[fid]
            out[prefix] = {"kind": e.kind, "size_bytes": e.size_bytes}
            for name, child in sorted(self.st.children.get(fid, {}).items()):
                walk(child, f"{prefix}/{name}")

        if self.ROOT_ID in self.st.entries:
            walk(self.ROOT_ID, "/" + ROOT)
        return out

    def close(self) -> None:
        self.journal.close()
