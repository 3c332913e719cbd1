import struct

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trainyard.stores.wal import MAGIC, RecordLog


def write_records(path, records):
    log = RecordLog(path)
    for rec in records:
        log.append(rec)
    log.close()


def test_roundtrip(tmp_path):
    path = tmp_path / "log.bin"
    records = [{"op": "put", "n": i, "payload": "x" * i} for i in range(20)]
    write_records(path, records)
    assert list(RecordLog(path).replay()) == records


def test_reopen_appends(tmp_path):
    path = tmp_path / "log.bin"
    write_records(path, [{"a": 1}])
    log = RecordLog(path)
    log.append({"b": 2})
    log.close()
    assert list(RecordLog(path).replay()) == [{"a": 1}, {"b": 2}]


def test_empty_log(tmp_path):
    path = tmp_path / "log.bin"
    log = RecordLog(path)
    log.close()
    assert list(RecordLog(path).replay()) == []


def test_truncation_sweep(tmp_path):
    # Oracle: cut the file at every possible byte length.  Replay must return
    # exactly the records whose frames fit completely, in order, and must not
    # invent or reorder anything.  This is the crash-mid-append model.
    path = tmp_path / "log.bin"
    records = [{"op": "w", "i": i, "blob": "ab" * (i + 1)} for i in range(8)]
    write_records(path, records)
    raw = path.read_bytes()

    # Reconstruct where each complete frame ends.
    frame_ends = []
    offset = len(MAGIC)
    header = struct.Struct("<II")
    while offset < len(raw):
        length = header.unpack_from(raw, offset)[0]
        offset += header.size + length
        frame_ends.append(offset)
    assert len(frame_ends) == len(records)

    for cut in range(len(raw) + 1):
        trimmed = tmp_path / "trimmed.bin"
        trimmed.write_bytes(raw[:cut])
        got = list(RecordLog(trimmed).replay())
        survivors = sum(1 for end in frame_ends if end <= cut)
        assert got == records[:survivors], f"cut={cut}"


def test_single_byte_corruption_never_fabricates(tmp_path):
    path = tmp_path / "log.bin"
    records = [{"i": i} for i in range(5)]
    write_records(path, records)
    raw = path.read_bytes()
    for pos in range(len(raw)):
        mutated = bytearray(raw)
        mutated[pos] ^= 0xFF
        corrupt = tmp_path / "corrupt.bin"
        corrupt.write_bytes(bytes(mutated))
        got = list(RecordLog(corrupt).replay())
        # Replay stops at the first bad frame; everything it does return must
        # be a clean prefix of what was written.
        assert got == records[: len(got)], f"pos={pos}"


@settings(max_examples=40)
@given(
    st.lists(
        st.dictionaries(
            st.sampled_from(["op", "key", "value", "n", "blob"]),
            st.integers(-1000, 1000) | st.text(alphabet="abc é", max_size=8),
            max_size=4,
        ),
        max_size=12,
    )
)
def test_replay_matches_appends(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("wal") / "log.bin"
    write_records(path, records)
    assert list(RecordLog(path).replay()) == records


def test_append_after_close_fails(tmp_path):
    log = RecordLog(tmp_path / "log.bin")
    log.close()
    with pytest.raises(ValueError):
        log.append({"x": 1})
