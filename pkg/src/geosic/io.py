"""Binary image formats: 8-bit PGM (P5) and the native GSF1 float container.

GSF1 layout (little-endian)::

    b"GSF1" | u32 rank | u32 dims[rank] | float32 payload (row-major, prod(dims) values)

Dimensions are written in array-shape order (outermost axis first), so a
``(H, W)`` image is stored as ``rank=2, dims=[H, W]``. Spectral velocities use
``rank=4, dims=[2, 2, trunc_h, trunc_w]`` (component, real/imag, ky, kx).
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import FormatError

GSF_MAGIC = b"GSF1"


def encode_gsf(array):
    array = np.ascontiguousarray(array, dtype="<f4")
    header = GSF_MAGIC + struct.pack("<I", array.ndim) + struct.pack(f"<{array.ndim}I", *array.shape)
    return header + array.tobytes()


def decode_gsf(data):
    if len(data) < 8:
        raise FormatError("file too short for a GSF1 header", offset=len(data))
    if data[:4] != GSF_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {GSF_MAGIC!r}", offset=0)
    (rank,) = struct.unpack_from("<I", data, 4)
    if rank == 0 or rank > 8:
        raise FormatError(f"unsupported rank {rank}", offset=4)
    dims_end = 8 + 4 * rank
    if len(data) < dims_end:
        raise FormatError(f"header truncated: {rank} dims declared", offset=len(data))
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    expected = int(np.prod(dims, dtype=np.int64))
    available = (len(data) - dims_end) // 4
    if len(data) - dims_end != 4 * expected:
        raise FormatError(
            f"truncated payload: expected {expected} values for dims {list(dims)}, "
            f"found {available}" if available < expected else
            f"trailing data: expected {expected} values for dims {list(dims)}, found {available}",
            offset=dims_end + 4 * min(available, expected))
    return np.frombuffer(data, dtype="<f4", count=expected, offset=dims_end).reshape(dims)


def write_gsf(array, path):
    with open(path, "wb") as fh:
        fh.write(encode_gsf(array))


def read_gsf(path):
    with open(path, "rb") as fh:
        return decode_gsf(fh.read())


def _pgm_token(data, pos):
    """Next whitespace-delimited header token, skipping '#' comments."""
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("unexpected end of PGM header", offset=pos)
    return data[start:pos], start, pos


def decode_pgm(data):
    if data[:2] != b"P5":
        raise FormatError(f"bad magic {data[:2]!r}, expected b'P5'", offset=0)
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        tok, start, pos = _pgm_token(data, pos)
        if not tok.isdigit():
            raise FormatError(f"malformed {name} {tok!r}", offset=start)
        values.append(int(tok))
    width, height, maxval = values
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}, only 255 is supported", offset=start)
    if width == 0 or height == 0:
        raise FormatError("zero image dimension", offset=start)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after maxval", offset=pos)
    pos += 1
    expected = width * height
    payload = data[pos:pos + expected]
    if len(payload) < expected:
        raise FormatError(
            f"truncated payload: expected {expected} bytes, found {len(payload)}",
            offset=pos + len(payload))
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width).astype(float) / 255.0


def encode_pgm(image):
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"PGM stores 2D images, got shape {image.shape}")
    h, w = image.shape
    pixels = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


def read_image(path):
    """Read a ``.pgm`` or ``.gsf`` image as a float64 ``(H, W)`` array."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return decode_pgm(data)
    if data[:4] == GSF_MAGIC:
        grid = decode_gsf(data)
        if grid.ndim != 2:
            raise FormatError(f"expected a rank-2 image, found rank {grid.ndim}", offset=4)
        return grid.astype(float)
    raise FormatError(f"unrecognised image magic {data[:4]!r}", offset=0)


def write_image(image, path):
    """Write by extension: ``.pgm`` (8-bit, clamped) or anything else as GSF1."""
    if os.fspath(path).lower().endswith(".pgm"):
        with open(path, "wb") as fh:
            fh.write(encode_pgm(image))
    else:
        write_gsf(np.asarray(image), path)
