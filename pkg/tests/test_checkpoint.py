"""Checkpoint container: byte layout, round-trips, malformed files."""

import struct

import numpy as np
import pytest

from dartsrenet.checkpoint import MAGIC, CheckpointError, load_tensors, save_tensors


def test_round_trip(tmp_path, rng):
    named = {
        "stem.conv0.w": rng.standard_normal((4, 3, 3, 3)).astype(np.float32),
        "renet0.h.f.w0": rng.standard_normal((10, 16)).astype(np.float32),
        "scalar": np.float32(1.5).reshape(()),
    }
    path = tmp_path / "model.drnt"
    save_tensors(path, named)
    loaded = load_tensors(path)
    assert set(loaded) == set(named)
    for name in named:
        np.testing.assert_array_equal(loaded[name], np.asarray(named[name]))
        assert loaded[name].dtype == np.float32


def test_header_layout(tmp_path):
    path = tmp_path / "one.drnt"
    save_tensors(path, {"w": np.arange(6, dtype=np.float32).reshape(2, 3)})
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    version, count = struct.unpack_from("<HI", raw, 4)
    assert (version, count) == (1, 1)
    name_len, = struct.unpack_from("<H", raw, 10)
    assert raw[12:12 + name_len] == b"w"
    rank, = struct.unpack_from("<B", raw, 12 + name_len)
    assert rank == 2
    extents = struct.unpack_from("<2I", raw, 13 + name_len)
    assert extents == (2, 3)


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.drnt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_tensors(path)


def test_bad_version(tmp_path):
    path = tmp_path / "v9.drnt"
    path.write_bytes(MAGIC + struct.pack("<HI", 9, 0))
    with pytest.raises(CheckpointError, match="version"):
        load_tensors(path)


def test_truncated(tmp_path, rng):
    path = tmp_path / "cut.drnt"
    save_tensors(path, {"w": rng.standard_normal((8, 8)).astype(np.float32)})
    path.write_bytes(path.read_bytes()[:-17])
    with pytest.raises(CheckpointError):
        load_tensors(path)
