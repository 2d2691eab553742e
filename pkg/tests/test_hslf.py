"""Binary matrix container: byte-exact storage, validated headers, streaming."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slrd.hslf import (
    MAGIC,
    VERSION,
    FileFormatError,
    load_matrix,
    load_matrix_blocks,
    read_shape,
    save_matrix,
)


class TestRoundTrip:
    def test_float64_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((17, 9))
        p = tmp_path / "m.hslf"
        save_matrix(p, a)
        b = load_matrix(p)
        np.testing.assert_array_equal(a, b)
        assert b.dtype == np.float64

    def test_float32_payload_promotes_on_load(self, tmp_path):
        a = np.arange(6, dtype=np.float64).reshape(2, 3)
        p = tmp_path / "m.hslf"
        save_matrix(p, a, dtype="float32")
        b = load_matrix(p)
        assert b.dtype == np.float64
        np.testing.assert_array_equal(b, a.astype(np.float32).astype(np.float64))

    def test_same_content_same_bytes(self, tmp_path):
        a = np.linspace(-1, 1, 12).reshape(4, 3)
        p1, p2 = tmp_path / "a.hslf", tmp_path / "b.hslf"
        save_matrix(p1, a)
        save_matrix(p2, a.copy(order="F"))  # layout on disk is row-major either way
        assert p1.read_bytes() == p2.read_bytes()

    def test_read_shape_without_payload(self, tmp_path):
        p = tmp_path / "m.hslf"
        save_matrix(p, np.zeros((5, 8)))
        assert read_shape(p) == (5, 8)


class TestStreaming:
    def test_blocks_concatenate_to_the_matrix(self, tmp_path):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((23, 4))
        p = tmp_path / "m.hslf"
        save_matrix(p, a)
        blocks = list(load_matrix_blocks(p, block_rows=7))
        assert [b.shape[0] for b in blocks] == [7, 7, 7, 2]
        np.testing.assert_array_equal(np.vstack(blocks), a)


class TestHeaderValidation:
    def _valid_bytes(self):
        a = np.ones((2, 2))
        import io, tempfile, os

        path = tempfile.mktemp(suffix=".hslf")
        save_matrix(path, a)
        data = open(path, "rb").read()
        os.unlink(path)
        return bytearray(data)

    def test_bad_magic_rejected(self, tmp_path):
        data = self._valid_bytes()
        data[:4] = b"XSLF"
        p = tmp_path / "m.hslf"
        p.write_bytes(data)
        with pytest.raises(FileFormatError):
            load_matrix(p)

    def test_bad_version_rejected(self, tmp_path):
        data = self._valid_bytes()
        struct.pack_into("<I", data, 4, VERSION + 1)
        p = tmp_path / "m.hslf"
        p.write_bytes(data)
        with pytest.raises(FileFormatError):
            load_matrix(p)

    def test_unknown_dtype_code_rejected(self, tmp_path):
        data = self._valid_bytes()
        data[8] = 7
        p = tmp_path / "m.hslf"
        p.write_bytes(data)
        with pytest.raises(FileFormatError):
            load_matrix(p)

    def test_truncated_payload_rejected(self, tmp_path):
        data = self._valid_bytes()
        p = tmp_path / "m.hslf"
        p.write_bytes(data[:-8])
        with pytest.raises(FileFormatError):
            load_matrix(p)

    def test_trailing_garbage_rejected(self, tmp_path):
        data = self._valid_bytes()
        p = tmp_path / "m.hslf"
        p.write_bytes(bytes(data) + b"\x00")
        with pytest.raises(FileFormatError):
            load_matrix(p)

    def test_magic_constant(self):
        assert MAGIC == b"HSLF"


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    rows=st.integers(1, 40),
    cols=st.integers(1, 12),
)
def test_roundtrip_any_shape(tmp_path_factory, seed, rows, cols):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((rows, cols))
    p = tmp_path_factory.mktemp("hslf") / "m.hslf"
    save_matrix(p, a)
    np.testing.assert_array_equal(load_matrix(p), a)
    assert read_shape(p) == (rows, cols)
