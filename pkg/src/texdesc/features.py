"""Feature recipes: descriptor extraction plus a trained vocabulary and an encoding."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import container
from .dataset import ImagePlane, ImageRgb
from .descriptors import extract, needs_rgb
from .encoders import (Codebook, GmmModel, PcaModel, encode_bovw, encode_ifv, encode_vlad,
                       train_gmm, train_kmeans, train_pca)
from .encoders.encoding import EncodedVector

ENCODINGS = ("bovw", "vlad", "ifv")


@dataclass(frozen=True)
class FeatureRecipe:
    """How an image becomes one global vector.

    ``vocabulary`` is a Codebook for bovw/vlad and a GmmModel for ifv.
    """

    descriptor: str
    encoding: str
    vocabulary: Codebook | GmmModel
    pca: PcaModel | None = None
    descriptor_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValueError(f"unknown encoding {self.encoding!r}")
        want = GmmModel if self.encoding == "ifv" else Codebook
        if not isinstance(self.vocabulary, want):
            raise ValueError(f"{self.encoding} needs a {want.__name__} vocabulary")
        if self.pca is not None and self.encoding != "ifv":
            raise ValueError("PCA is only applied before IFV")

    @property
    def dim(self) -> int:
        v = self.vocabulary
        if self.encoding == "bovw":
            return v.K
        if self.encoding == "vlad":
            return v.K * v.dim
        return 2 * v.K * v.dim

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps([self.descriptor, self.encoding, self.descriptor_params],
                            sort_keys=True).encode())
        h.update(self.vocabulary.digest().encode())
        if self.pca is not None:
            h.update(self.pca.digest().encode())
        return h.hexdigest()[:16]

    def vocabulary_tag(self) -> str:
        """The vocabulary hash stamped on vectors this recipe encodes."""
        tag = self.vocabulary.digest()
        if self.pca is not None:
            tag += f"+pca{self.pca.output_dim}:{self.pca.digest()}"
        return tag

    def descriptors(self, image):
        if needs_rgb(self.descriptor):
            if not isinstance(image, ImageRgb):
                raise ValueError(f"{self.descriptor} descriptors need an RGB image")
        elif isinstance(image, ImageRgb):
            image = image.to_gray()
        return extract(image, self.descriptor, **self.descriptor_params)

    def encode_descriptors(self, ds) -> EncodedVector:
        if self.encoding == "bovw":
            return encode_bovw(ds, self.vocabulary)
        if self.encoding == "vlad":
            return encode_vlad(ds, self.vocabulary)
        return encode_ifv(ds, self.vocabulary, self.pca)

    def encode(self, image: ImagePlane | ImageRgb) -> EncodedVector:
        return self.encode_descriptors(self.descriptors(image))

    def to_container(self, prefix: str = ""):
        """``(meta, arrays)`` for embedding in a model container."""
        v = self.vocabulary
        if isinstance(v, Codebook):
            arrays = {prefix + "centers": v.centers}
        else:
            arrays = {prefix + "priors": v.priors, prefix + "means": v.means,
                      prefix + "variances": v.variances}
        if self.pca is not None:
            arrays[prefix + "pca_mean"] = self.pca.mean
            arrays[prefix + "pca_basis"] = self.pca.basis
        meta = {"descriptor": self.descriptor, "encoding": self.encoding,
                "descriptor_params": self.descriptor_params,
                "variance_floor": getattr(v, "variance_floor", None),
                "trained_on": getattr(v, "trained_on", None)}
        return meta, arrays

    @classmethod
    def from_container(cls, meta, arrays, prefix: str = ""):
        if meta["encoding"] == "ifv":
            vocab = GmmModel(arrays[prefix + "priors"], arrays[prefix + "means"],
                             arrays[prefix + "variances"], meta["variance_floor"])
        else:
            vocab = Codebook(arrays[prefix + "centers"], meta.get("trained_on") or "unknown")
        pca = None
        if prefix + "pca_mean" in arrays:
            pca = PcaModel(arrays[prefix + "pca_mean"], arrays[prefix + "pca_basis"])
        return cls(meta["descriptor"], meta["encoding"], vocab, pca,
                   dict(meta.get("descriptor_params") or {}))

    def save(self, path, meta=None):
        m, arrays = self.to_container()
        container.save(path, "recipe", {**m, **(meta or {})}, arrays)

    @classmethod
    def load(cls, path, config_hash=None):
        _, meta, arrays = container.load(path, "recipe", config_hash)
        return cls.from_container(meta, arrays)


def pool_descriptors(descriptor_sets, max_total: int | None, seed: int) -> np.ndarray:
    """Stack descriptor rows, subsampled uniformly without replacement to ``max_total``."""
    X = np.vstack([ds.descriptors for ds in descriptor_sets if len(ds)])
    if max_total is not None and len(X) > max_total:
        rng = np.random.default_rng(seed)
        X = X[np.sort(rng.choice(len(X), size=max_total, replace=False))]
    return X


def fit_recipe(images, descriptor: str, encoding: str, size: int, seed: int = 0,
               descriptor_params: dict | None = None, pca_dim: int | None = None,
               max_descriptors: int | None = 100_000, max_iter: int = 100) -> FeatureRecipe:
    """Learn the vocabulary of a recipe from a list of images."""
    params = dict(descriptor_params or {})
    probe = FeatureRecipe(descriptor, "bovw", Codebook(np.zeros((1, 1))), None, params)
    sets = [probe.descriptors(im) for im in images]
    X = pool_descriptors(sets, max_descriptors, seed)
    kind = sets[0].kind if sets else descriptor
    if encoding == "ifv":
        pca = None
        if pca_dim is not None and pca_dim < X.shape[1]:
            pca = train_pca(X, pca_dim)
            X = pca.project(X)
        gmm = train_gmm(X, size, seed=seed, max_iter=max_iter)
        return FeatureRecipe(descriptor, encoding, gmm, pca, params)
    cb = train_kmeans(X, size, seed=seed, max_iter=max_iter, kind=kind)
    return FeatureRecipe(descriptor, encoding, cb, None, params)


def encode_images(recipe: FeatureRecipe, images) -> np.ndarray:
    return np.vstack([recipe.encode(im).values for im in images])
