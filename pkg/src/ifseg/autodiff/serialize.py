"""Flat binary container for named float64 arrays.

Layout: the 6-byte magic ``IFSEG1``, then per entry: name length (u32 LE),
UTF-8 name, rank (u32 LE), each dim (u32 LE), and the values as raw
little-endian float64 in row-major order. Entries run to end of file.
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

MAGIC = b"IFSEG1"


class ContainerError(ValueError):
    """Malformed or truncated container file."""


def dumps(entries: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC]
    for name, arr in entries.items():
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr).astype("<f8").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    if buf[: len(MAGIC)] != MAGIC:
        raise ContainerError("bad magic: not an IFSEG1 container")
    pos = len(MAGIC)
    out: dict[str, np.ndarray] = {}

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise ContainerError(f"truncated container while reading {what} at byte {pos}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    while pos < len(buf):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(8 * count, f"values of {name!r}"), dtype="<f8")
        if name in out:
            raise ContainerError(f"duplicate entry {name!r}")
        out[name] = data.astype(np.float64).reshape(dims)
    return out


def write_container(path: str | os.PathLike, entries: Mapping[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(entries))


def read_container(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads(fh.read())
