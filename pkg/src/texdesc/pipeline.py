"""Run configuration, seed derivation and the end-to-end recognition pipeline."""

from __future__ import annotations

import hashlib
import json
import time
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import tomli
import tomli_w

from .dataset import (ImageRgb, atomic_write_text, iter_images, make_stratified_splits,
                      read_manifest, read_splits)
from .descriptors import DESCRIPTOR_KINDS, needs_rgb
from .evaluation import ExperimentReport, run_experiment
from .features import encode_images, fit_recipe
from .learn import KernelSpec
from .synthetic import SyntheticSpec, render_corpus

DESCRIPTOR_DIMS = {"sift": 128, "lm": 48, "mr8": 8, "patch3": 9, "patch7": 49, "patch3rgb": 27,
                   "lbpvq": 59}


def default_vocabulary_size(descriptor: str, encoding: str) -> int:
    """Full-scale vocabulary sizes per descriptor and encoding."""
    if encoding == "ifv":
        return 256
    if encoding == "vlad":
        return 512
    if descriptor == "lbpvq":
        return 512
    if descriptor in ("lm", "mr8"):
        return 470
    return 1024


def derive_seed(root: int, component: str) -> int:
    """Independent 32-bit seed for a named component of a run.

    The component name is hashed into the spawn key of the root seed
    sequence, so seeds do not depend on the order components are run in.
    """
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=(zlib.crc32(component.encode()),))
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    descriptor: str = "sift"
    descriptor_params: dict = field(default_factory=dict)
    encoding: str = "ifv"
    vocabulary_size: int | None = None
    pca_dim: int | None = 80
    max_descriptors: int = 100_000
    max_iter: int = 100
    kernel: str = "linear"
    kernel_normalize: bool = False
    C_grid: tuple = (0.1, 1.0, 10.0, 100.0)
    synthetic: dict = field(default_factory=dict)
    vocab_images_per_class: int = 8
    n_splits: int = 10
    manifest: str | None = None
    splits_dir: str | None = None

    def __post_init__(self):
        if self.descriptor not in DESCRIPTOR_KINDS:
            raise ValueError(f"unknown descriptor {self.descriptor!r}")
        if self.encoding not in ("bovw", "vlad", "ifv"):
            raise ValueError(f"unknown encoding {self.encoding!r}")
        KernelSpec(self.kernel)
        if self.vocabulary_size is not None and self.vocabulary_size < 1:
            raise ValueError("vocabulary_size must be positive")
        if self.pca_dim is not None and self.pca_dim < 1:
            raise ValueError("pca_dim must be positive")
        grid = tuple(float(c) for c in self.C_grid)
        if not grid or any(c <= 0 for c in grid):
            raise ValueError("C grid must be nonempty and positive")
        object.__setattr__(self, "C_grid", grid)
        SyntheticSpec(**self.synthetic_kwargs())

    @property
    def size(self) -> int:
        return self.vocabulary_size or default_vocabulary_size(self.descriptor, self.encoding)

    @property
    def effective_pca(self) -> int | None:
        """PCA dimension actually applied: IFV only, and only when it reduces."""
        if self.encoding != "ifv" or self.pca_dim is None:
            return None
        return self.pca_dim if self.pca_dim < DESCRIPTOR_DIMS[self.descriptor] else None

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, None, self.kernel_normalize)

    def synthetic_kwargs(self) -> dict:
        out = dict(self.synthetic)
        for k in ("classes", "orientation", "frequency", "phase", "contrast", "noise"):
            if k in out:
                out[k] = tuple(out[k])
        return out

    def to_dict(self) -> dict:
        return {
            "run": {"seed": self.seed},
            "descriptor": {"kind": self.descriptor, **self.descriptor_params},
            "encoder": {"kind": self.encoding, "size": self.size,
                        "pca_dim": self.pca_dim if self.pca_dim is not None else 0,
                        "max_descriptors": self.max_descriptors, "max_iter": self.max_iter},
            "kernel": {"kind": self.kernel, "normalize": self.kernel_normalize},
            "svm": {"C_grid": list(self.C_grid)},
            "synthetic": {k: list(v) if isinstance(v, tuple) else v
                          for k, v in self.synthetic.items()},
            "data": {"vocab_images_per_class": self.vocab_images_per_class,
                     "n_splits": self.n_splits,
                     **({"manifest": self.manifest} if self.manifest else {}),
                     **({"splits": self.splits_dir} if self.splits_dir else {})},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {"run", "descriptor", "encoder", "kernel", "svm", "synthetic", "data"}
        unknown = set(d) - known - set(_COMMAND_SECTIONS)
        if unknown:
            raise ValueError(f"unknown config sections {sorted(unknown)}")
        desc = dict(d.get("descriptor", {}))
        enc = d.get("encoder", {})
        ker = d.get("kernel", {})
        data = d.get("data", {})
        pca = enc.get("pca_dim", 80)
        kw = dict(
            seed=int(d.get("run", {}).get("seed", 0)),
            descriptor=desc.pop("kind", "sift"),
            descriptor_params=desc,
            encoding=enc.get("kind", "ifv"),
            vocabulary_size=enc.get("size"),
            pca_dim=pca if pca else None,
            max_descriptors=int(enc.get("max_descriptors", 100_000)),
            max_iter=int(enc.get("max_iter", 100)),
            kernel=ker.get("kind", "linear"),
            kernel_normalize=bool(ker.get("normalize", False)),
            C_grid=tuple(d.get("svm", {}).get("C_grid", (0.1, 1.0, 10.0, 100.0))),
            synthetic=dict(d.get("synthetic", {})),
            vocab_images_per_class=int(data.get("vocab_images_per_class", 8)),
            n_splits=int(data.get("n_splits", 10)),
            manifest=data.get("manifest"),
            splits_dir=data.get("splits"),
        )
        return cls(**kw)

    @classmethod
    def from_toml(cls, path) -> "PipelineConfig":
        with open(path, "rb") as fh:
            try:
                return cls.from_dict(tomli.load(fh))
            except tomli.TOMLDecodeError as exc:
                raise ValueError(f"{path}: {exc}") from None

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=int(seed))


# sections holding per-command flag defaults; they do not affect the pipeline hash
_COMMAND_SECTIONS = ("extract", "train-codebook", "train-gmm", "encode", "train", "predict",
                     "describe", "cluster", "evaluate", "annotate-sim", "gen-synthetic",
                     "pipeline")


def load_config_dict(path) -> dict:
    with open(path, "rb") as fh:
        try:
            return tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from None


def _load_manifest_images(config: PipelineConfig):
    manifest = read_manifest(config.manifest)
    mode = "rgb" if needs_rgb(config.descriptor) else "gray"
    images = list(iter_images(manifest, mode))
    labels = manifest.class_indices()
    if config.splits_dir:
        splits = read_splits(config.splits_dir, manifest)
    else:
        splits = make_stratified_splits(labels, config.n_splits, derive_seed(config.seed, "splits"))
    # vocabularies see only the training images of the first split
    vocab_images = [images[i] for i in splits[0].train]
    return images, labels, splits, vocab_images


def _synthetic_images(config: PipelineConfig):
    kw = config.synthetic_kwargs()
    spec = SyntheticSpec(**{**kw, "seed": derive_seed(config.seed, "corpus")})
    images, labels, _ = render_corpus(spec)
    vspec = replace(spec, images_per_class=config.vocab_images_per_class,
                    seed=derive_seed(config.seed, "vocabulary-corpus"))
    vocab_images, _, _ = render_corpus(vspec)
    splits = make_stratified_splits(labels, config.n_splits, derive_seed(config.seed, "splits"))
    return images, labels, splits, vocab_images


def prepare_features(config: PipelineConfig):
    """Images, labels, splits, recipe and encoded features for a run."""
    if config.manifest:
        images, labels, splits, vocab_images = _load_manifest_images(config)
    else:
        images, labels, splits, vocab_images = _synthetic_images(config)
    if needs_rgb(config.descriptor):
        if not all(isinstance(im, ImageRgb) for im in images):
            raise ValueError(f"{config.descriptor} needs RGB images")
    recipe = fit_recipe(vocab_images, config.descriptor, config.encoding, config.size,
                        seed=derive_seed(config.seed, "vocabulary"),
                        descriptor_params=config.descriptor_params,
                        pca_dim=config.effective_pca, max_descriptors=config.max_descriptors,
                        max_iter=config.max_iter)
    features = encode_images(recipe, images)
    return images, labels, splits, recipe, features


def run_pipeline(config: PipelineConfig):
    """Vocabulary, encoding and per-split SVM evaluation for one configuration.

    Returns ``(report, seconds)``. The report itself carries no timing so
    that identical seeds give byte-identical report files.
    """
    start = time.perf_counter()
    _, labels, splits, recipe, features = prepare_features(config)
    recipe_info = {"descriptor": config.descriptor, "encoding": config.encoding,
                   "size": config.size, "pca_dim": config.effective_pca,
                   "recipe_hash": recipe.digest(), "config_hash": config.digest()}
    report = run_experiment(features, labels, splits, config.kernel_spec(), config.C_grid,
                            recipe=recipe_info, config=config.to_dict())
    report.wall_time_s = None
    return report, time.perf_counter() - start


def write_report(report: ExperimentReport, out_dir, seconds: float | None = None) -> Path:
    """Write ``report.json`` and, separately, ``timing.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out / "report.json", report.to_json() + "\n")
    if seconds is not None:
        atomic_write_text(out / "timing.json", json.dumps({"wall_time_s": seconds}) + "\n")
    return out / "report.json"

