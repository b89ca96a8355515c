import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from geosic import io
from geosic.errors import FormatError


def test_gsf_roundtrip_bitwise(tmp_path, rng):
    im = rng.random((5, 7)).astype(np.float32)
    path = tmp_path / "a.gsf"
    io.write_gsf(im, path)
    back = io.read_gsf(path)
    assert back.tobytes() == im.tobytes()
    assert back.shape == (5, 7)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float32, array_shapes(min_dims=1, max_dims=4, max_side=5),
              elements=st.floats(width=32, allow_nan=False)))
def test_gsf_roundtrip_property(a):
    assert io.decode_gsf(io.encode_gsf(a)).tobytes() == a.astype("<f4").tobytes()


def test_gsf_header_layout():
    data = io.encode_gsf(np.zeros((3, 2)))
    assert data[:4] == b"GSF1"
    assert struct.unpack("<3I", data[4:16]) == (2, 3, 2)
    assert len(data) == 16 + 6 * 4


def test_gsf_truncated_payload_names_expected_count():
    data = b"GSF1" + struct.pack("<3I", 2, 3, 2) + np.zeros(5, "<f4").tobytes()
    with pytest.raises(FormatError, match="expected 6 values") as err:
        io.decode_gsf(data)
    assert err.value.offset == 16 + 20


@pytest.mark.parametrize("data", [b"GSF", b"XXXX\x02\x00\x00\x00", b"GSF1\x00\x00\x00\x00",
                                  b"GSF1\x02\x00\x00\x00\x03\x00"])
def test_gsf_malformed_header(data):
    with pytest.raises(FormatError):
        io.decode_gsf(data)


def test_pgm_scaling():
    data = b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])
    im = io.decode_pgm(data)
    assert np.array_equal(im, np.array([[0, 1], [128 / 255, 64 / 255]]))


def test_pgm_comments_and_roundtrip(tmp_path):
    data = b"P5 # comment\n# another\n3 1\n255\n" + bytes([1, 2, 3])
    im = io.decode_pgm(data)
    assert np.allclose(im * 255, [[1, 2, 3]])
    path = tmp_path / "x.pgm"
    io.write_image(im, path)
    assert np.array_equal(io.read_image(path), im)


def test_pgm_write_clamps(tmp_path):
    path = tmp_path / "c.pgm"
    io.write_image(np.array([[-1.0, 2.0]]), path)
    assert io.read_image(path).tolist() == [[0.0, 1.0]]


def test_pgm_errors():
    with pytest.raises(FormatError, match="maxval"):
        io.decode_pgm(b"P5\n2 2\n65535\n" + bytes(8))
    with pytest.raises(FormatError, match="truncated") as err:
        io.decode_pgm(b"P5\n2 2\n255\n" + bytes(3))
    assert err.value.offset == 11 + 3
    with pytest.raises(FormatError):
        io.decode_pgm(b"P6\n2 2\n255\n" + bytes(4))
    with pytest.raises(FormatError):
        io.decode_pgm(b"P5\n2 x\n255\n" + bytes(4))


def test_read_image_dispatch(tmp_path, rng):
    im = rng.random((4, 4))
    io.write_image(im, tmp_path / "a.gsf")
    assert np.array_equal(io.read_image(tmp_path / "a.gsf"), im.astype(np.float32))
    (tmp_path / "b.bin").write_bytes(b"JUNKJUNK")
    with pytest.raises(FormatError):
        io.read_image(tmp_path / "b.bin")
