"""Deterministic generated payloads.

Challenge workloads push terabytes of simulated data through the stack;
those bytes are never fully materialized.  A generated payload is
defined by (seed, size): its content is a seeded 64 KiB pseudo-random
block repeated to length.  Any byte range can be served on demand and
the CRC-32 of the whole stream is computed in O(log size) with the
classic GF(2) crc-combine construction, so catalog checksums stay exact
without streaming the data.

On disk a generated payload is a small stub next to where the real file
would live: `<path>.vp` containing a one-line JSON descriptor.  Exactly
one of `<path>` and `<path>.vp` exists for a stored copy.
"""

from __future__ import annotations

import json
import random
import zlib
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

BLOCK_BYTES = 64 * 1024
STUB_SUFFIX = ".vp"

_CRC_POLY = 0xEDB88320  # reflected IEEE 802.3


def _gf2_times(mat, vec):
    s = 0
    i = 0
    while vec:
        if vec & 1:
            s ^= mat[i]
        vec >>= 1
        i += 1
    return s


def _gf2_square(mat):
    return [_gf2_times(mat, mat[n]) for n in range(32)]


def crc32_combine(crc1: int, crc2: int, len2: int) -> int:
    """CRC-32 of A||B given crc32(A), crc32(B) and len(B)."""
    if len2 <= 0:
        return crc1
    odd = [0] * 32
    odd[0] = _CRC_POLY
    row = 1
    for n in range(1, 32):
        odd[n] = row
        row <<= 1
    even = _gf2_square(odd)
    odd = _gf2_square(even)
    while True:
        even = _gf2_square(odd)
        if len2 & 1:
            crc1 = _gf2_times(even, crc1)
        len2 >>= 1
        if len2 == 0:
            break
        odd = _gf2_square(even)
        if len2 & 1:
            crc1 = _gf2_times(odd, crc1)
        len2 >>= 1
        if len2 == 0:
            break
    return crc1 ^ crc2


@lru_cache(maxsize=256)
def _block(seed: int) -> bytes:
    return random.Random(seed).randbytes(BLOCK_BYTES)


@lru_cache(maxsize=4096)
def _generated_crc(seed: int, size: int) -> int:
    block = _block(seed)
    full, tail_len = divmod(size, len(block))
    block_crc = zlib.crc32(block)
    # crc of block^full by binary exponentiation over (crc, length) pairs
    acc = (0, 0)  # crc32 of empty string is 0
    base = (block_crc, len(block))
    n = full
    while n:
        if n & 1:
            acc = (crc32_combine(acc[0], base[0], base[1]), acc[1] + base[1])
        n >>= 1
        if n:
            base = (crc32_combine(base[0], base[0], base[1]), base[1] * 2)
    crc = acc[0]
    if tail_len:
        crc = crc32_combine(crc, zlib.crc32(block[:tail_len]), tail_len)
    return crc


@dataclass(frozen=True)
class GeneratedPayload:
    seed: int
    size: int

    def crc32(self) -> int:
        return _generated_crc(self.seed, self.size)

    def read_range(self, offset: int, length: int) -> bytes:
        end = min(self.size, offset + length)
        if offset >= end:
            return b""
        block = _block(self.seed)
        bs = len(block)
        out = bytearray()
        pos = offset
        while pos < end:
            i = pos % bs
            n = min(bs - i, end - pos)
            out += block[i:i + n]
            pos += n
        return bytes(out)

    def chunks(self, chunk_bytes: int = 2**20):
        pos = 0
        while pos < self.size:
            n = min(chunk_bytes, self.size - pos)
            yield self.read_range(pos, n)
            pos += n

    def to_dict(self) -> dict:
        return {"seed": self.seed, "size": self.size, "crc32": self.crc32()}

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratedPayload":
        return cls(seed=d["seed"], size=d["size"])


def stub_path(path) -> Path:
    return Path(str(path) + STUB_SUFFIX)


def write_stub(path, payload: GeneratedPayload) -> None:
    """Store a generated payload at the logical location `path`."""
    p = Path(path)
    if p.exists():
        p.unlink()
    with open(stub_path(p), "w", encoding="utf-8") as fp:
        json.dump({"generated": payload.to_dict()}, fp)


def read_stub(path) -> GeneratedPayload | None:
    sp = stub_path(path)
    if not sp.exists():
        return None
    with open(sp, encoding="utf-8") as fp:
        doc = json.load(fp)
    return GeneratedPayload.from_dict(doc["generated"])


def remove_payload(path) -> bool:
    """Remove whichever of <path> / <path>.vp exists. True if anything went."""
    removed = False
    p = Path(path)
    if p.exists():
        p.unlink()
        removed = True
    sp = stub_path(p)
    if sp.exists():
        sp.unlink()
        removed = True
    return removed


def payload_kind(path) -> str | None:
    """'real', 'virtual', or None when nothing is stored at `path`."""
    if Path(path).exists():
        return "real"
    if stub_path(path).exists():
        return "virtual"
    return None
