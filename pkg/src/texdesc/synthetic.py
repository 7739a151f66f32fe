"""Parametric texture generator used as a small stand-in for real texture datasets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataset import (ImagePlane, Manifest, ManifestEntry, make_stratified_splits, save_image,
                      write_manifest, write_splits)

CLASSES = ("stripes", "checks", "dots", "honeycomb", "noise-grain", "waves")

# attribute word that each synthetic class exemplifies
CLASS_ATTRIBUTE = {
    "stripes": "striped",
    "checks": "chequered",
    "dots": "dotted",
    "honeycomb": "honeycombed",
    "noise-grain": "sprinkled",
    "waves": "swirly",
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Classes, counts and jitter ranges; each range is ``(low, high)``.

    Orientation is in radians, frequency in cycles per pixel, phase in
    radians and noise is the standard deviation of additive Gaussian noise.
    """

    classes: tuple = CLASSES
    images_per_class: int = 60
    size: int = 64
    orientation: tuple = (0.0, np.pi)
    frequency: tuple = (0.06, 0.18)
    phase: tuple = (0.0, 2 * np.pi)
    contrast: tuple = (0.4, 1.0)
    noise: tuple = (0.0, 0.1)
    seed: int = 0
    n_splits: int = 10

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if len(self.classes) < 2:
            raise ValueError("need at least 2 classes")
        unknown = set(self.classes) - set(CLASSES)
        if unknown:
            raise ValueError(f"unknown synthetic classes {sorted(unknown)}")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("synthetic classes repeat")
        if self.images_per_class < 1 or self.size < 8:
            raise ValueError("need >= 1 image per class and size >= 8")
        for name in ("orientation", "frequency", "phase", "contrast", "noise"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if lo > hi:
                raise ValueError(f"{name} range is inverted")
        if self.frequency[0] <= 0 or self.frequency[1] > 0.5:
            raise ValueError("frequency must lie in (0, 0.5]")
        if not (0 <= self.contrast[0] and self.contrast[1] <= 1):
            raise ValueError("contrast must lie in [0, 1]")
        if self.noise[0] < 0:
            raise ValueError("noise must be nonnegative")

    @classmethod
    def zero_jitter(cls, classes=CLASSES, images_per_class=3, size=64, orientation=0.0,
                    frequency=0.1, phase=0.0, contrast=1.0, seed=0):
        return cls(tuple(classes), images_per_class, size, (orientation, orientation),
                   (frequency, frequency), (phase, phase), (contrast, contrast), (0.0, 0.0),
                   seed)

    def to_dict(self):
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


@dataclass(frozen=True)
class TextureParams:
    orientation: float
    frequency: float
    phase: float
    contrast: float
    noise: float
    extra: dict = field(default_factory=dict)


def _coords(size, theta):
    y, x = np.mgrid[0:size, 0:size].astype(np.float64)
    u = -x * np.sin(theta) + y * np.cos(theta)
    v = x * np.cos(theta) + y * np.sin(theta)
    return u, v


def _stripes(size, p, rng):
    u, _ = _coords(size, p.orientation)
    return np.sin(2 * np.pi * p.frequency * u + p.phase)


def _checks(size, p, rng):
    u, v = _coords(size, p.orientation)
    f = p.frequency / 2
    prod = np.sin(2 * np.pi * f * u + p.phase) * np.sin(2 * np.pi * f * v + p.phase)
    return np.tanh(8.0 * prod)


def _dots(size, p, rng):
    u, v = _coords(size, p.orientation)
    f = p.frequency / 1.5
    du = np.mod(u * f + p.phase / (2 * np.pi), 1.0) - 0.5
    dv = np.mod(v * f + p.phase / (2 * np.pi), 1.0) - 0.5
    return 2.0 * np.exp(-(du ** 2 + dv ** 2) / (2 * 0.12 ** 2)) - 1.0


def _honeycomb(size, p, rng):
    # hexagonal cells are the Voronoi cells of a triangular lattice; walls
    # are where the nearest and second-nearest lattice points are equidistant
    u, v = _coords(size, p.orientation)
    period = 1.5 / p.frequency
    shift = p.phase / (2 * np.pi)
    a = u / period + shift
    b = v / period + shift
    # lattice coordinates in the basis (1, 0), (1/2, sqrt(3)/2)
    j = b / (np.sqrt(3) / 2)
    i = a - 0.5 * j
    i0, j0 = np.floor(i), np.floor(j)
    dists = []
    for di in (-1, 0, 1, 2):
        for dj in (-1, 0, 1, 2):
            pi, pj = i0 + di, j0 + dj
            pa = pi + 0.5 * pj
            pb = pj * np.sqrt(3) / 2
            dists.append(np.hypot(a - pa, b - pb))
    d = np.sort(np.stack(dists), axis=0)
    gap = (d[1] - d[0]) * period
    return 1.0 - 2.0 * np.exp(-(gap / 1.2) ** 2)


def _noise_grain(size, p, rng):
    field_ = rng.standard_normal((size, size))
    grain = gaussian_filter(field_, sigma=0.15 / p.frequency, mode="wrap")
    grain /= np.abs(grain).max() + 1e-12
    return np.clip(2.0 * grain, -1.0, 1.0)


def _waves(size, p, rng):
    u, v = _coords(size, p.orientation)
    bend = 4.0 * np.sin(2 * np.pi * p.frequency * 0.35 * v + 0.5 * p.phase)
    return np.sin(2 * np.pi * p.frequency * (u + bend) + p.phase)


_RENDER = {"stripes": _stripes, "checks": _checks, "dots": _dots, "honeycomb": _honeycomb,
           "noise-grain": _noise_grain, "waves": _waves}


def render_pattern(name: str, size: int, params: TextureParams, rng=None) -> np.ndarray:
    """Pattern in ``[-1, 1]`` before contrast and noise are applied."""
    if rng is None:
        rng = np.random.default_rng(0)
    return _RENDER[name](size, params, rng)


def finish(pattern: np.ndarray, params: TextureParams, rng) -> np.ndarray:
    img = 0.5 + 0.5 * params.contrast * pattern
    if params.noise > 0:
        img = img + rng.normal(0.0, params.noise, img.shape)
    return np.clip(img, 0.0, 1.0)


def _draw(rng, lo_hi):
    lo, hi = lo_hi
    return lo if lo == hi else float(rng.uniform(lo, hi))


def sample_params(spec: SyntheticSpec, rng) -> TextureParams:
    return TextureParams(_draw(rng, spec.orientation), _draw(rng, spec.frequency),
                         _draw(rng, spec.phase), _draw(rng, spec.contrast),
                         _draw(rng, spec.noise))


def render_corpus(spec: SyntheticSpec):
    """Render every image in memory.

    Returns ``(images, labels, params)`` with integer labels indexing
    ``spec.classes``. The grain field of ``noise-grain`` depends on the
    image's phase draw only, so zero jitter gives identical images.
    """
    class_seeds = np.random.SeedSequence(spec.seed).spawn(len(spec.classes))
    images, labels, params = [], [], []
    for c, (name, cseed) in enumerate(zip(spec.classes, class_seeds)):
        for ss in cseed.spawn(spec.images_per_class):
            rng = np.random.default_rng(ss)
            p = sample_params(spec, rng)
            grain_rng = np.random.default_rng([spec.seed, c, int(round(p.phase * 1e6))])
            img = finish(render_pattern(name, spec.size, p, grain_rng), p, rng)
            images.append(ImagePlane(img))
            labels.append(c)
            params.append(p)
    return images, np.array(labels, dtype=np.int64), params


def generate_synthetic_corpus(spec: SyntheticSpec, out_dir, attribute_labels: bool = False
                              ) -> Manifest:
    """Write PNG images, ``manifest.jsonl`` and stratified splits under ``out_dir``.

    With ``attribute_labels`` each image is labelled with the attribute word
    its class exemplifies (see ``CLASS_ATTRIBUTE``) instead of the class name.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    images, labels, _ = render_corpus(spec)
    label_of = {c: CLASS_ATTRIBUTE[c] if attribute_labels else c for c in spec.classes}
    entries = []
    counters = {}
    for img, lab in zip(images, labels):
        name = spec.classes[lab]
        k = counters.get(name, 0)
        counters[name] = k + 1
        rel = f"images/{name}_{k:04d}.png"
        save_image(img, out / rel)
        entries.append(ManifestEntry(rel, (label_of[name],)))
    manifest = Manifest(tuple(entries), tuple(label_of[c] for c in spec.classes), str(out))
    write_manifest(manifest, out / "manifest.jsonl")
    if spec.images_per_class >= 3:
        write_splits(make_stratified_splits(labels, spec.n_splits, spec.seed), manifest,
                     out / "splits")
    return manifest


# Material task: each material blends two base patterns with its own
# frequency band, so attribute responses carry information about it.
MATERIALS = {
    "fabric": (("stripes", 0.6), ("checks", 0.4), (0.10, 0.14)),
    "stone": (("noise-grain", 0.8), ("dots", 0.2), (0.06, 0.10)),
    "mesh": (("honeycomb", 0.7), ("checks", 0.3), (0.10, 0.14)),
    "wood": (("waves", 0.7), ("stripes", 0.3), (0.06, 0.10)),
    "foam": (("dots", 0.6), ("noise-grain", 0.4), (0.10, 0.14)),
}


def render_materials(images_per_class: int = 30, size: int = 64, seed: int = 1,
                     materials=tuple(MATERIALS)):
    """Blended-pattern material images; returns ``(images, labels)``."""
    class_seeds = np.random.SeedSequence([seed, 7919]).spawn(len(materials))
    images, labels = [], []
    for c, (name, cseed) in enumerate(zip(materials, class_seeds)):
        (a, wa), (b, wb), band = MATERIALS[name]
        spec = SyntheticSpec(classes=(a, b), images_per_class=1, size=size, frequency=band)
        for ss in cseed.spawn(images_per_class):
            rng = np.random.default_rng(ss)
            p = sample_params(spec, rng)
            q = TextureParams(_draw(rng, spec.orientation), p.frequency, _draw(rng, spec.phase),
                              p.contrast, p.noise)
            pattern = wa * render_pattern(a, size, p, rng) + wb * render_pattern(b, size, q, rng)
            images.append(ImagePlane(finish(pattern, p, rng)))
            labels.append(c)
    return images, np.array(labels, dtype=np.int64)
