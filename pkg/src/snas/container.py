"""Versioned binary container shared by weight files and dataset exports.

Layout (all little-endian)::

    b"SNAS" | u32 version | 32-byte skeleton digest | u32 tensor count
    per tensor: u32 ndim | u32 dims[ndim] | float32 payload
    u32 label count | int32 labels          (count is 0 for weight files)
"""
from __future__ import annotations

import struct
from typing import Optional, Sequence

import numpy as np

from snas.errors import ParseError

MAGIC = b"SNAS"
VERSION = 1


def write_container(path, tensors: Sequence[np.ndarray], skeleton_hash: str,
                    labels: Optional[Sequence[int]] = None) -> None:
    digest = bytes.fromhex(skeleton_hash) if skeleton_hash else bytes(32)
    if len(digest) != 32:
        raise ValueError("skeleton hash must be a 64-character hex digest")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(digest)
        fh.write(struct.pack("<I", len(tensors)))
        for t in tensors:
            t = np.ascontiguousarray(t, dtype="<f4")
            fh.write(struct.pack("<I", t.ndim))
            fh.write(struct.pack(f"<{t.ndim}I", *t.shape))
            fh.write(t.tobytes())
        lab = np.asarray([] if labels is None else labels, dtype="<i4")
        fh.write(struct.pack("<I", lab.size))
        fh.write(lab.tobytes())


def read_container(path):
    """Return ``(tensors, skeleton_hash, labels)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ParseError(f"{path}: not an SNAS container")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(data):
            raise ParseError(f"{path}: truncated container")
        vals = struct.unpack_from(fmt, data, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported container version {version}")
    skeleton_hash = data[pos:pos + 32].hex()
    pos += 32
    (count,) = take("<I")
    tensors = []
    for _ in range(count):
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        if pos + 4 * n > len(data):
            raise ParseError(f"{path}: truncated tensor payload")
        tensors.append(np.frombuffer(data, dtype="<f4", count=n, offset=pos)
                       .reshape(shape).astype(np.float32))
        pos += 4 * n
    (nlab,) = take("<I")
    labels = np.frombuffer(data, dtype="<i4", count=nlab, offset=pos).astype(np.int64)
    pos += 4 * nlab
    if pos != len(data):
        raise ParseError(f"{path}: trailing bytes after container payload")
    if skeleton_hash == "0" * 64:
        skeleton_hash = ""
    return tensors, skeleton_hash, labels
