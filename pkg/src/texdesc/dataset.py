"""Image loading, dataset manifests and train/val/test splits."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_ACCEPTED_FORMATS = {"PNG", "JPEG"}


@dataclass(frozen=True)
class ImagePlane:
    """Single-channel image, values in [0, 1], shape ``(height, width)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"ImagePlane needs a non-empty 2-D array, got shape {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("ImagePlane values must be finite and in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ImageRgb:
    """Three-channel image, values in [0, 1], shape ``(height, width, 3)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"ImageRgb needs shape (h, w, 3), got {v.shape}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("ImageRgb values must be finite and in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def to_gray(self) -> ImagePlane:
        return ImagePlane(_luma(self.values))


def _luma(rgb: np.ndarray) -> np.ndarray:
    # difference form keeps neutral pixels (r = g = b) exact
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    return np.clip(r + LUMA_WEIGHTS[1] * (g - r) + LUMA_WEIGHTS[2] * (b - r), 0.0, 1.0)


def load_image(path, mode: str = "gray") -> ImagePlane | ImageRgb:
    """Decode a PNG or JPEG file into an image with values in [0, 1].

    ``mode="gray"`` converts with the BT.601 weights 0.299/0.587/0.114;
    ``mode="rgb"`` keeps the three planes.
    """
    if mode not in ("gray", "rgb"):
        raise ValueError(f"mode must be 'gray' or 'rgb', got {mode!r}")
    path = Path(path)
    # missing or unreadable files surface as OSError from open()
    with open(path, "rb") as fh:
        try:
            img = Image.open(fh)
            img.load()
        except UnidentifiedImageError as exc:
            raise FormatError(f"{path}: not a decodable image") from exc
        if img.format not in _ACCEPTED_FORMATS:
            raise FormatError(f"{path}: unsupported format {img.format}")
        if img.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(img, dtype=np.float64) / 65535.0
            rgb = np.repeat(arr[..., None], 3, axis=2)
        else:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    if mode == "rgb":
        return ImageRgb(rgb)
    return ImagePlane(_luma(rgb))


def save_image(image: ImagePlane | ImageRgb, path) -> None:
    """Write an image as 8-bit PNG."""
    arr = np.round(np.asarray(image.values) * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L" if arr.ndim == 2 else "RGB").save(path, format="PNG")


# -- manifests ---------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    labels: tuple[str, ...]


@dataclass(frozen=True)
class Manifest:
    """Ordered image entries with their label sets.

    Paths are relative to ``root``.
    """

    entries: tuple[ManifestEntry, ...]
    vocabulary: tuple[str, ...]
    root: str = "."

    def __post_init__(self):
        seen = set()
        vocab = set(self.vocabulary)
        if len(vocab) != len(self.vocabulary):
            raise ValueError("manifest vocabulary has duplicate labels")
        for e in self.entries:
            if e.path in seen:
                raise ValueError(f"duplicate manifest path {e.path!r}")
            seen.add(e.path)
            missing = set(e.labels) - vocab
            if missing:
                raise ValueError(f"{e.path}: labels {sorted(missing)} not in vocabulary")

    def __len__(self):
        return len(self.entries)

    @property
    def paths(self) -> list[str]:
        return [e.path for e in self.entries]

    def resolve(self, entry_or_path) -> Path:
        p = entry_or_path.path if isinstance(entry_or_path, ManifestEntry) else entry_or_path
        return Path(self.root) / p

    def label_matrix(self) -> np.ndarray:
        """Binary ``(n_entries, n_labels)`` membership matrix."""
        index = {w: k for k, w in enumerate(self.vocabulary)}
        out = np.zeros((len(self.entries), len(self.vocabulary)), dtype=np.int8)
        for i, e in enumerate(self.entries):
            for lab in e.labels:
                out[i, index[lab]] = 1
        return out

    def class_indices(self) -> np.ndarray:
        """Single-label view: index of each entry's first label."""
        index = {w: k for k, w in enumerate(self.vocabulary)}
        if any(len(e.labels) == 0 for e in self.entries):
            raise ValueError("every entry needs at least one label for a class view")
        return np.array([index[e.labels[0]] for e in self.entries], dtype=np.int64)


def read_manifest(path, vocabulary: Sequence[str] | None = None) -> Manifest:
    """Read a JSON-lines manifest; one ``{"path": ..., "labels": [...]}`` per line.

    Without an explicit vocabulary, the sorted union of labels is used.
    """
    path = Path(path)
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                entries.append(ManifestEntry(str(obj["path"]), tuple(obj["labels"])))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad manifest record") from exc
    if vocabulary is None:
        vocabulary = sorted({lab for e in entries for lab in e.labels})
    return Manifest(tuple(entries), tuple(vocabulary), root=str(path.parent))


def write_manifest(manifest: Manifest, path) -> None:
    lines = [json.dumps({"path": e.path, "labels": list(e.labels)}) for e in manifest.entries]
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- splits ------------------------------------------------------------------


@dataclass(frozen=True)
class Split:
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]

    def check_disjoint(self) -> None:
        a, b, c = set(self.train), set(self.val), set(self.test)
        if a & b or a & c or b & c:
            raise AssertionError("train/val/test subsets overlap")


@dataclass(frozen=True)
class SplitSet:
    splits: tuple[Split, ...]
    n_items: int
    seed: int | None = None

    def __len__(self):
        return len(self.splits)

    def __getitem__(self, k) -> Split:
        return self.splits[k]

    def __iter__(self):
        return iter(self.splits)


def _three_way(perm: np.ndarray) -> Split:
    train, val, test = np.array_split(perm, 3)
    return Split(tuple(sorted(int(i) for i in train)),
                 tuple(sorted(int(i) for i in val)),
                 tuple(sorted(int(i) for i in test)))


def make_splits(n_items: int, n_splits: int = 10, seed: int = 0) -> SplitSet:
    """Random train/val/test partitions of ``range(n_items)`` in thirds."""
    if n_items < 3:
        raise ValueError(f"need at least 3 items to split, got {n_items}")
    children = np.random.SeedSequence(seed).spawn(n_splits)
    splits = tuple(_three_way(np.random.default_rng(s).permutation(n_items))
                   for s in children)
    return SplitSet(splits, n_items, seed)


def make_stratified_splits(labels: Sequence[int], n_splits: int = 10, seed: int = 0) -> SplitSet:
    """Like :func:`make_splits` but each class is split into thirds separately.

    Each class needs at least 3 items.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    children = np.random.SeedSequence(seed).spawn(n_splits)
    splits = []
    for s in children:
        rng = np.random.default_rng(s)
        tr, va, te = [], [], []
        for c in classes:
            members = np.flatnonzero(labels == c)
            if len(members) < 3:
                raise ValueError(f"class {c!r} has fewer than 3 items")
            part = _three_way(members[rng.permutation(len(members))])
            tr += part.train
            va += part.val
            te += part.test
        splits.append(Split(tuple(sorted(tr)), tuple(sorted(va)), tuple(sorted(te))))
    return SplitSet(tuple(splits), len(labels), seed)


def write_splits(splits: SplitSet, manifest: Manifest, directory) -> None:
    """Write ``trainN.txt``/``valN.txt``/``testN.txt`` (N from 1), one path per line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = manifest.paths
    for n, split in enumerate(splits, 1):
        for name, ids in (("train", split.train), ("val", split.val), ("test", split.test)):
            atomic_write_text(directory / f"{name}{n}.txt",
                              "".join(paths[i] + "\n" for i in ids))


def read_splits(directory, manifest: Manifest) -> SplitSet:
    directory = Path(directory)
    index = {p: i for i, p in enumerate(manifest.paths)}
    splits = []
    n = 1
    while (directory / f"train{n}.txt").exists():
        parts = []
        for name in ("train", "val", "test"):
            lines = (directory / f"{name}{n}.txt").read_text(encoding="utf-8").split()
            try:
                parts.append(tuple(sorted(index[p] for p in lines)))
            except KeyError as exc:
                raise ValueError(f"split file {name}{n}.txt names unknown image {exc}") from None
        splits.append(Split(*parts))
        n += 1
    if not splits:
        raise FileNotFoundError(f"no split files in {directory}")
    return SplitSet(tuple(splits), len(manifest), None)


# -- misc I/O helpers ----------------------------------------------------------


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def iter_images(manifest: Manifest, mode: str = "gray", indices: Iterable[int] | None = None):
    idx = range(len(manifest)) if indices is None else indices
    for i in idx:
        yield load_image(manifest.resolve(manifest.entries[i]), mode)
