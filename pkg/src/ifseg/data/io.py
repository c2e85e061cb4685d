"""Readers for raw 16-bit volumes and ANALYZE 7.5 header/image pairs, plus PGM output."""

from __future__ import annotations

import os
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

ANALYZE_HEADER_SIZE = 348

# datatype code -> numpy base type (byte order applied later)
_ANALYZE_DTYPES = {
    2: "u1",   # unsigned char
    4: "i2",   # signed short
    8: "i4",   # signed int
    16: "f4",  # float
}


class VolumeFormatError(ValueError):
    """A volume file does not match its declared layout."""


def _expect_size(path: Path, nbytes: int, dims: Sequence[int], itemsize: int) -> None:
    expected = int(np.prod(dims)) * itemsize
    if nbytes != expected:
        raise VolumeFormatError(
            f"{path}: {nbytes} bytes on disk but dims {tuple(dims)} x {itemsize} bytes need {expected}")


def read_raw16(path: str | os.PathLike, dims: Sequence[int]) -> np.ndarray:
    """Big-endian unsigned 16-bit samples, ``dims`` = (D, H, W), W fastest."""
    path = Path(path)
    buf = path.read_bytes()
    _expect_size(path, len(buf), dims, 2)
    return np.frombuffer(buf, dtype=">u2").reshape(tuple(dims)).astype(np.float64)


def write_raw16(path: str | os.PathLike, volume: np.ndarray) -> None:
    arr = np.asarray(volume)
    if arr.min() < 0 or arr.max() > 0xFFFF:
        raise ValueError("raw16 values must fit in an unsigned 16-bit integer")
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype=">u2").tobytes())


def _header_byte_order(raw: bytes, path: Path) -> str:
    (le,) = struct.unpack("<i", raw[:4])
    if le == ANALYZE_HEADER_SIZE:
        return "<"
    (be,) = struct.unpack(">i", raw[:4])
    if be == ANALYZE_HEADER_SIZE:
        return ">"
    raise VolumeFormatError(f"{path}: header size field is {le} (little) / {be} (big), expected 348")


def read_analyze_header(path: str | os.PathLike) -> dict:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < ANALYZE_HEADER_SIZE:
        raise VolumeFormatError(f"{path}: header is {len(raw)} bytes, expected {ANALYZE_HEADER_SIZE}")
    order = _header_byte_order(raw, path)
    dim = struct.unpack(f"{order}8h", raw[40:56])
    datatype, bitpix = struct.unpack(f"{order}2h", raw[70:74])
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise VolumeFormatError(f"{path}: dim[0] = {ndim} is not a valid rank")
    shape = [d for d in dim[1:ndim + 1]]
    if any(d < 1 for d in shape):
        raise VolumeFormatError(f"{path}: non-positive dimension in {shape}")
    return {"byte_order": order, "dims": shape, "datatype": datatype, "bitpix": bitpix}


def read_analyze(path: str | os.PathLike) -> np.ndarray:
    """Read ``name.hdr`` + ``name.img`` into a D x H x W float array.

    The header's first dimension varies fastest on disk, so header dims
    (x, y, z) come back as an array of shape (z, y, x).
    """
    path = Path(path)
    hdr_path = path.with_suffix(".hdr")
    img_path = path.with_suffix(".img")
    header = read_analyze_header(hdr_path)
    code = header["datatype"]
    if code not in _ANALYZE_DTYPES:
        raise VolumeFormatError(f"{hdr_path}: unsupported ANALYZE datatype code {code}")
    dtype = np.dtype(header["byte_order"] + _ANALYZE_DTYPES[code])
    dims = header["dims"]
    while len(dims) > 3 and dims[-1] == 1:
        dims = dims[:-1]
    if len(dims) > 3:
        raise VolumeFormatError(f"{hdr_path}: only 3-D volumes are supported, got dims {dims}")
    dims = list(dims) + [1] * (3 - len(dims))
    buf = img_path.read_bytes()
    _expect_size(img_path, len(buf), dims, dtype.itemsize)
    return np.frombuffer(buf, dtype=dtype).reshape(tuple(reversed(dims))).astype(np.float64)


def write_analyze(path: str | os.PathLike, volume: np.ndarray, byte_order: str = "<", datatype: int = 4) -> None:
    """Write a minimal ANALYZE 7.5 pair; ``volume`` is (z, y, x)."""
    path = Path(path)
    base = _ANALYZE_DTYPES[datatype]
    dtype = np.dtype(byte_order + base)
    arr = np.asarray(volume)
    z, y, x = arr.shape
    hdr = bytearray(ANALYZE_HEADER_SIZE)
    struct.pack_into(f"{byte_order}i", hdr, 0, ANALYZE_HEADER_SIZE)
    struct.pack_into(f"{byte_order}8h", hdr, 40, 3, x, y, z, 1, 0, 0, 0)
    struct.pack_into(f"{byte_order}2h", hdr, 70, datatype, dtype.itemsize * 8)
    path.with_suffix(".hdr").write_bytes(bytes(hdr))
    path.with_suffix(".img").write_bytes(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def load_volume(path: str | os.PathLike, fmt: str = "analyze", dims: Optional[Sequence[int]] = None) -> np.ndarray:
    if fmt == "raw16":
        if dims is None:
            raise ValueError("raw16 volumes need explicit dims (D, H, W)")
        return read_raw16(path, dims)
    if fmt == "analyze":
        return read_analyze(path)
    raise ValueError(f"unknown volume format {fmt!r}")


def write_pgm(path: str | os.PathLike, image: np.ndarray, maxval: int = 255) -> None:
    """Binary (P5) PGM; values must be integers in [0, maxval]."""
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {arr.shape}")
    if not 1 <= maxval <= 255:
        raise ValueError("only 8-bit PGM is written")
    if arr.size and (arr.min() < 0 or arr.max() > maxval):
        raise ValueError(f"PGM values must be in [0, {maxval}]")
    h, w = arr.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + arr.astype(np.uint8).tobytes())


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    buf = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        start = pos
        while not buf[pos:pos + 1].isspace():
            pos += 1
        fields.append(buf[start:pos])
    if fields[0] != b"P5":
        raise VolumeFormatError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    pos += 1
    data = np.frombuffer(buf[pos:pos + w * h], dtype=np.uint8)
    if data.size != w * h or maxval > 255:
        raise VolumeFormatError(f"{path}: truncated or 16-bit PGM")
    return data.reshape(h, w)
