"""Flat binary feature cache: b"HSFT", u32 version, then per block
u32[2] dims followed by row-major little-endian f64 values.

Blocks carry no keys; callers write them in (segment, channel, window) order
and read them back in the same order.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"HSFT"
VERSION = 1


class CacheFormatError(ValueError):
    pass


def write_feature_cache(path, blocks) -> int:
    n = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        for arr in blocks:
            arr = np.asarray(arr, dtype="<f8")
            if arr.ndim != 2:
                raise CacheFormatError(f"blocks must be 2-D, got shape {arr.shape}")
            fh.write(struct.pack("<II", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())
            n += 1
    return n


def read_feature_cache(path) -> list:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CacheFormatError("not a feature cache (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise CacheFormatError(f"unsupported cache version {version}")
    pos, out = 8, []
    while pos < len(data):
        if pos + 8 > len(data):
            raise CacheFormatError("truncated block header")
        rows, cols = struct.unpack_from("<II", data, pos)
        pos += 8
        nbytes = rows * cols * 8
        if pos + nbytes > len(data):
            raise CacheFormatError("truncated block payload")
        out.append(np.frombuffer(data, dtype="<f8", count=rows * cols, offset=pos).reshape(rows, cols).copy())
        pos += nbytes
    return out
