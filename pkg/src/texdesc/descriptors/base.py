"""DescriptorSet and its on-disk format."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import atomic_write_bytes
from ..errors import FormatError

DESCRIPTOR_MAGIC = b"TXDS"


@dataclass(frozen=True)
class DescriptorSet:
    """``n`` local descriptors of dimension ``dim``.

    ``locations`` holds one ``(x, y, scale)`` row per descriptor, in pixel
    coordinates of the original image. ``flags`` carries soft warnings such
    as ``"too_small"`` or ``"degenerate"``.
    """

    descriptors: np.ndarray
    locations: np.ndarray
    kind: str
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        d = np.asarray(self.descriptors, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError(f"descriptors must be 2-D, got shape {d.shape}")
        loc = np.asarray(self.locations, dtype=np.float64).reshape(-1, 3)
        if loc.shape[0] != d.shape[0]:
            raise ValueError("locations and descriptors disagree on n")
        if not np.all(np.isfinite(d)):
            raise ValueError("descriptor rows must be finite")
        object.__setattr__(self, "descriptors", d)
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "flags", frozenset(self.flags))

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def __len__(self):
        return self.descriptors.shape[0]

    @classmethod
    def empty(cls, dim: int, kind: str, flags=()):
        return cls(np.zeros((0, dim)), np.zeros((0, 3)), kind, frozenset(flags))

    def with_descriptors(self, descriptors: np.ndarray, kind: str | None = None) -> "DescriptorSet":
        return DescriptorSet(descriptors, self.locations, kind or self.kind, self.flags)


def write_descriptors(ds: DescriptorSet, path) -> None:
    """Little-endian: magic, 16-byte kind tag, uint64 n, uint32 d,
    float32 rows, float32 ``(x, y, scale)`` locations."""
    tag = ds.kind.encode("ascii")
    if len(tag) > 16:
        raise ValueError(f"kind tag too long: {ds.kind!r}")
    header = DESCRIPTOR_MAGIC + tag.ljust(16, b"\0") + struct.pack("<QI", len(ds), ds.dim)
    body = (np.ascontiguousarray(ds.descriptors, dtype="<f4").tobytes()
            + np.ascontiguousarray(ds.locations, dtype="<f4").tobytes())
    atomic_write_bytes(path, header + body)


def read_descriptors(path) -> DescriptorSet:
    data = Path(path).read_bytes()
    if data[:4] != DESCRIPTOR_MAGIC or len(data) < 32:
        raise FormatError(f"{path}: not a descriptor file")
    kind = data[4:20].rstrip(b"\0").decode("ascii")
    n, d = struct.unpack("<QI", data[20:32])
    need = 32 + 4 * n * d + 12 * n
    if len(data) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(data)}")
    rows = np.frombuffer(data, dtype="<f4", count=n * d, offset=32).reshape(n, d)
    loc = np.frombuffer(data, dtype="<f4", count=3 * n, offset=32 + 4 * n * d).reshape(n, 3)
    return DescriptorSet(rows.astype(np.float64), loc.astype(np.float64), kind)
