"""Versioned binary container for trained models.

Layout (little-endian)::

    magic      4 bytes   b"TXDM"
    version    uint16
    type tag   16 bytes  ASCII, NUL padded
    meta       uint32 length + UTF-8 JSON
    n_arrays   uint32
    per array: uint16 name length, name, uint8 ndim, ndim x uint64 dims,
               float64 payload (C order)

Integer arrays are stored as float64; values stay exact below 2**53.
"""

from __future__ import annotations

import io
import json
import struct
from pathlib import Path

import numpy as np

from .dataset import atomic_write_bytes
from .errors import ConfigMismatchError, FormatError

MAGIC = b"TXDM"
VERSION = 1


def dumps(type_tag: str, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    tag = type_tag.encode("ascii")
    if len(tag) > 16:
        raise ValueError(f"type tag too long: {type_tag!r}")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    buf.write(tag.ljust(16, b"\0"))
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))
    return buf.getvalue()


def loads(data: bytes, expect_tag: str | None = None):
    """Parse container bytes into ``(type_tag, meta, arrays)``."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated model container")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise FormatError("not a model container (bad magic)")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    tag = bytes(take(16)).rstrip(b"\0").decode("ascii")
    if expect_tag is not None and tag != expect_tag:
        raise FormatError(f"expected a {expect_tag!r} container, found {tag!r}")
    (mlen,) = struct.unpack("<I", take(4))
    meta = json.loads(bytes(take(mlen)).decode("utf-8"))
    (n_arrays,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(n_arrays):
        (nlen,) = struct.unpack("<H", take(2))
        name = bytes(take(nlen)).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(bytes(take(8 * count)), dtype="<f8").reshape(shape).copy()
    return tag, meta, arrays


def save(path, type_tag: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    atomic_write_bytes(path, dumps(type_tag, meta, arrays))


def load(path, expect_tag: str | None = None, config_hash: str | None = None):
    tag, meta, arrays = loads(Path(path).read_bytes(), expect_tag)
    check_config_hash(meta, config_hash, path)
    return tag, meta, arrays


def check_config_hash(meta: dict, expected: str | None, where="artifact") -> None:
    if expected is None:
        return
    found = meta.get("config_hash")
    if found is not None and found != expected:
        raise ConfigMismatchError(
            f"{where}: built with config {found}, current config is {expected}")
