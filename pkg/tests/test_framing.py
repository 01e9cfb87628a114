import io
import socket
import threading

import pytest
from hypothesis import given, strategies as st

from castorlite.wire import framing


@given(st.binary(max_size=4096))
def test_file_roundtrip(body):
    buf = io.BytesIO(framing.pack_frame(body))
    assert framing.read_frame_from(buf) == body
    assert framing.read_frame_from(buf) is None


@given(st.lists(st.binary(max_size=200), max_size=10))
def test_file_roundtrip_many(bodies):
    buf = io.BytesIO(b"".join(framing.pack_frame(b) for b in bodies))
    out = []
    while True:
        b = framing.read_frame_from(buf)
        if b is None:
            break
        out.append(b)
    assert out == bodies


@given(st.binary(min_size=1, max_size=256), st.integers(min_value=1, max_value=4))
def test_torn_tail_detected(body, cut):
    frame = framing.pack_frame(body)
    cut = min(cut, len(frame) - 1)
    buf = io.BytesIO(frame[:-cut])
    with pytest.raises(framing.FrameTruncated):
        framing.read_frame_from(buf)


def test_socket_roundtrip():
    a, b = socket.socketpair()
    try:
        payloads = [b"", b"x", b"y" * 100000]
        def send():
            for p in payloads:
                framing.write_frame(a, p)
        th = threading.Thread(target=send)
        th.start()
        got = [framing.read_frame(b) for _ in payloads]
        th.join()
        assert got == payloads
    finally:
        a.close()
        b.close()


@given(
    st.integers(min_value=0, max_value=255),
    st.integers(min_value=0, max_value=2**64 - 1),
    st.integers(min_value=0, max_value=2**64 - 1),
    st.binary(max_size=1024),
)
def test_data_frame_roundtrip(opcode, handle_id, offset, payload):
    body = framing.pack_data(opcode, handle_id, offset, payload)
    marker, parsed = framing.split_marked(body)
    assert marker == framing.MARKER_DATA
    assert parsed == (opcode, handle_id, offset, payload)


def test_control_frame_marker():
    body = framing.pack_control({"op": "x", "args": {"n": 2**63}})
    marker, parsed = framing.split_marked(body)
    assert marker == framing.MARKER_JSON
    assert parsed == {"op": "x", "args": {"n": 2**63}}


def test_json_64bit_sizes_exact():
    for n in (2**31 + 1, 2**32 + 7, 3 * 2**30, 2**63 - 1):
        assert framing.decode_json(framing.encode_json({"v": n}))["v"] == n
