"""Flat binary parameter container.

Layout: magic "MIRT", version u32, then per entry: name length u16, UTF-8
name, rank u8, extents as u32s, raw little-endian IEEE-754 single-precision
values.  Rank 0 carries exactly one scalar.  Entry order is preserved, so a
round trip is byte-identical for the same inputs.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"MIRT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, arrays: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for name, arr in arrays.items():
            a = np.asarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", a.ndim))
            for extent in a.shape:
                fh.write(struct.pack("<I", extent))
            fh.write(a.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}")
    pos = 8
    out: dict[str, np.ndarray] = {}
    while pos < len(raw):
        (nlen,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        name = raw[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        shape = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=pos).reshape(shape)
        pos += 4 * count
        out[name] = arr.copy()
    return out
