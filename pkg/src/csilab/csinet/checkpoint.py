"""Binary checkpoint format.

Layout (little endian): ``b"CSIN"``, u32 version, u32 count, then per array in
lexicographic name order: u16 name length, UTF-8 name, u8 ndim, u32 dims,
f64 values in row-major order.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .config import ModelConfig
from .model import expected_shapes

MAGIC = b"CSIN"
VERSION = 1


class CheckpointError(ValueError):
    """Malformed checkpoint or one that does not fit the model configuration."""


def encode(arrays: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def decode(data: bytes) -> dict:
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        pos = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos : pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", data, pos)
            pos += 1
            dims = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            size = int(np.prod(dims, dtype=np.int64))
            if pos + 8 * size > len(data):
                raise CheckpointError(f"truncated data for {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(dims).astype(float)
            pos += 8 * size
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from exc
    if pos != len(data):
        raise CheckpointError("trailing bytes after last array")
    return out


def verify(arrays: dict, cfg: ModelConfig) -> None:
    """Raise unless every model parameter is present with the configured shape."""
    want = expected_shapes(cfg)
    missing = sorted(set(want) - set(arrays))
    if missing:
        raise CheckpointError(f"missing parameters: {missing[:5]}")
    for name, shape in want.items():
        if arrays[name].shape != shape:
            raise CheckpointError(f"{name}: shape {arrays[name].shape} != expected {shape}")
    extra = sorted(k for k in set(arrays) - set(want) if not k.startswith("norm."))
    if extra:
        raise CheckpointError(f"unexpected parameters: {extra[:5]}")
    bad = [k for k, v in arrays.items() if not np.all(np.isfinite(v))]
    if bad:
        raise CheckpointError(f"non-finite values in {bad[:5]}")


def save(path, arrays: dict) -> str:
    """Write ``arrays`` and return the sha256 of the file contents."""
    data = encode(arrays)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load(path, cfg: ModelConfig | None = None) -> dict:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    arrays = decode(data)
    if cfg is not None:
        verify(arrays, cfg)
    return arrays


def digest(arrays: dict) -> str:
    return hashlib.sha256(encode(arrays)).hexdigest()
