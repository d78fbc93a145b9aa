"""Flat binary parameter container.

Layout (little-endian)::

    magic  b"S2SCKPT\\0"   8 bytes
    version                u32
    count                  u32
    count x record:
        name_len           u32
        name               utf-8 bytes
        rank               u32
        extents            rank x u64
        payload            prod(extents) x f64
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import Module, Parameter

MAGIC = b"S2SCKPT\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def to_bytes(arrays: Mapping[str, np.ndarray | Parameter]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        if isinstance(arr, Parameter):
            arr = arr.value
        arr = np.asarray(arr, dtype=np.float64)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.astype("<f8", copy=False).tobytes(order="C"))
    return b"".join(parts)


def from_bytes(data: bytes) -> dict[str, np.ndarray]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    version, count = struct.unpack_from("<II", data, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off = 16
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off:off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if off + 8 * size > len(data):
                raise CheckpointError(f"truncated payload for {name!r}")
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).astype(np.float64).reshape(shape)
            off += 8 * size
            if name in out:
                raise CheckpointError(f"duplicate parameter name {name!r}")
            out[name] = arr
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    if off != len(data):
        raise CheckpointError(f"{len(data) - off} trailing bytes after last record")
    return out


def save(path, arrays: Mapping[str, np.ndarray | Parameter]) -> None:
    Path(path).write_bytes(to_bytes(arrays))


def load(path) -> dict[str, np.ndarray]:
    return from_bytes(Path(path).read_bytes())


def snapshot(model: Module) -> dict[str, np.ndarray]:
    return {name: p.value.copy() for name, p in model.named_parameters()}


def load_into(model: Module, arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
    params = model.parameters()
    if strict and set(params) != set(arrays):
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        raise CheckpointError(f"checkpoint mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    for name, arr in arrays.items():
        if name not in params:
            continue
        p = params[name]
        if p.value.shape != arr.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} does not match model {p.value.shape}")
        p.value[...] = arr
