"""Describable texture attributes: the vocabulary, attribute classifier banks,
the attribute-score image descriptor, ranked descriptions and clustering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import container
from .encoders import nearest_center, train_kmeans
from .encoders.encoding import EncodedVector
from .features import FeatureRecipe
from .learn import KernelSpec, PlattParams, fit_spec, kernel_matrix, platt_apply, platt_fit
from .learn.svm import train_svm

VOCABULARY = (
    "banded", "blotchy", "braided", "bubbly", "bumpy", "chequered", "cobwebbed", "cracked",
    "crosshatched", "crystalline", "dotted", "fibrous", "flecked", "freckled", "frilly",
    "gauzy", "grid", "grooved", "honeycombed", "interlaced", "knitted", "lacelike", "lined",
    "marbled", "matted", "meshed", "paisley", "perforated", "pitted", "pleated",
    "polka-dotted", "porous", "potholed", "scaly", "smeared", "spiralled", "sprinkled",
    "stained", "stratified", "striped", "studded", "swirly", "veined", "waffled", "woven",
    "wrinkled", "zigzagged",
)
WORD_INDEX = {w: i for i, w in enumerate(VOCABULARY)}


def check_words(words) -> tuple:
    """Validate a list of attribute words and return it in vocabulary order."""
    words = tuple(words)
    unknown = [w for w in words if w not in WORD_INDEX]
    if unknown:
        raise ValueError(f"not attribute words: {unknown}")
    if len(set(words)) != len(words):
        raise ValueError("attribute words repeat")
    return tuple(sorted(words, key=WORD_INDEX.__getitem__))


@dataclass(frozen=True)
class AttributeVector:
    """Raw classifier scores per attribute word, plus calibrated probabilities if known."""

    scores: np.ndarray
    words: tuple = VOCABULARY
    probabilities: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.shape != (len(self.words),) or not np.all(np.isfinite(s)):
            raise ValueError("attribute scores must be finite, one per word")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)
        if self.probabilities is not None:
            p = np.asarray(self.probabilities, dtype=np.float64)
            if p.shape != s.shape:
                raise ValueError("probabilities must match scores")
            p.setflags(write=False)
            object.__setattr__(self, "probabilities", p)


@dataclass(frozen=True)
class AttributeBank:
    """One kernel SVM per attribute word, all on the same feature recipe.

    Any set of unique labels works; for describable attributes pass them in
    vocabulary order (see :func:`check_words`) so ties rank as expected.

    ``coef`` is ``(Q, n_train)`` with ``alpha * y`` per training item and
    ``train_features`` the ``(n_train, D)`` vectors the kernel is taken
    against. ``platt`` holds one PlattParams per word or None when
    uncalibrated; ``stale`` lists words whose calibration could not be
    refreshed on the last recalibration.
    """

    words: tuple
    coef: np.ndarray
    bias: np.ndarray
    train_features: np.ndarray
    spec: KernelSpec
    recipe: FeatureRecipe | None = None
    platt: tuple | None = None
    C: float = 1.0
    stale: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        words = tuple(self.words)
        if len(set(words)) != len(words):
            raise ValueError("bank words repeat")
        coef = np.asarray(self.coef, dtype=np.float64)
        bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        X = np.asarray(self.train_features, dtype=np.float64)
        if coef.shape != (len(words), len(X)) or bias.shape != (len(words),):
            raise ValueError("bank coefficient shapes disagree")
        if self.platt is not None and len(self.platt) != len(words):
            raise ValueError("need one calibration per word")
        if self.spec.needs_lambda and self.spec.lam is None:
            raise ValueError("bank kernel lambda is unset")
        for a in (coef, bias, X):
            a.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "coef", coef)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "train_features", X)
        object.__setattr__(self, "stale", frozenset(self.stale))

    @property
    def calibrated(self) -> bool:
        return self.platt is not None

    def scores(self, features) -> np.ndarray:
        """``(m, Q)`` raw scores for encoded feature rows."""
        F = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if F.shape[1] != self.train_features.shape[1]:
            raise ValueError(f"feature dim {F.shape[1]} does not match bank "
                             f"dim {self.train_features.shape[1]}")
        K = kernel_matrix(F, self.train_features, self.spec).values
        return K @ self.coef.T + self.bias

    def probabilities(self, scores) -> np.ndarray:
        if self.platt is None:
            raise ValueError("bank is not calibrated")
        S = np.atleast_2d(scores)
        return np.stack([platt_apply(p, S[:, q]) for q, p in enumerate(self.platt)], axis=1)

    def save(self, path, meta=None):
        arrays = {"coef": self.coef, "bias": self.bias, "train_features": self.train_features}
        if self.platt is not None:
            arrays["platt"] = np.array([[p.A, p.B] for p in self.platt])
        m = {"words": list(self.words), "spec": self.spec.as_dict(), "C": self.C,
             "stale": sorted(self.stale), "recipe": None}
        if self.recipe is not None:
            rmeta, rarrays = self.recipe.to_container("recipe_")
            m["recipe"] = rmeta
            arrays.update(rarrays)
        container.save(path, "attrbank", {**m, **(meta or {})}, arrays)

    @classmethod
    def load(cls, path, config_hash=None):
        _, meta, a = container.load(path, "attrbank", config_hash)
        recipe = (FeatureRecipe.from_container(meta["recipe"], a, "recipe_")
                  if meta.get("recipe") else None)
        platt = (tuple(PlattParams(float(A), float(B)) for A, B in a["platt"])
                 if "platt" in a else None)
        return cls(tuple(meta["words"]), a["coef"], a["bias"], a["train_features"],
                   KernelSpec(**meta["spec"]), recipe, platt, meta["C"],
                   frozenset(meta.get("stale", ())))


def train_attribute_bank(features, labels, words, spec: KernelSpec = KernelSpec("linear"),
                         C: float = 1.0, recipe: FeatureRecipe | None = None,
                         calibration=None) -> AttributeBank:
    """Train one binary SVM per word.

    ``labels`` is an ``(n, Q)`` boolean matrix aligned with ``words``.
    ``calibration`` is an optional ``(features, labels)`` pair of held-out
    items used to fit the Platt sigmoids; without it the training scores
    are used.
    """
    words = tuple(words)
    if len(set(words)) != len(words):
        raise ValueError("bank words repeat")
    X = np.asarray(features, dtype=np.float64)
    Y = np.asarray(labels).astype(bool)
    if Y.shape != (len(X), len(words)):
        raise ValueError("label matrix must be (n_items, n_words)")
    spec = fit_spec(X, spec)
    K = kernel_matrix(X, spec=spec)
    models = [train_svm(K, np.where(Y[:, q], 1.0, -1.0), C) for q in range(len(words))]
    bank = AttributeBank(words, np.stack([m.coef for m in models]),
                         np.array([m.bias for m in models]), X, spec, recipe, None, C)
    Xc, Yc = (X, Y) if calibration is None else (np.asarray(calibration[0], float),
                                                 np.asarray(calibration[1]).astype(bool))
    S = bank.scores(Xc)
    platt = tuple(platt_fit(S[:, q], np.where(Yc[:, q], 1, -1)) for q in range(len(words)))
    return AttributeBank(words, bank.coef, bank.bias, X, spec, recipe, platt, C)


def attribute_vector_from_feature(feature, bank: AttributeBank) -> AttributeVector:
    """Score an already encoded image; the encoding must come from the bank's recipe."""
    if isinstance(feature, EncodedVector):
        want = bank.recipe
        if want is not None and (feature.recipe.encoding != want.encoding
                                 or feature.recipe.vocabulary != want.vocabulary_tag()):
            raise ValueError("encoded vector was not produced by the bank's recipe")
        feature = feature.values
    s = bank.scores(feature)[0]
    p = bank.probabilities(s)[0] if bank.calibrated else None
    return AttributeVector(s, bank.words, p)


def extract_attribute_vector(image, bank: AttributeBank) -> AttributeVector:
    """Encode the image once with the bank's recipe and score every attribute."""
    if bank.recipe is None:
        raise ValueError("bank carries no feature recipe")
    return attribute_vector_from_feature(bank.recipe.encode(image), bank)


def rank_words(probabilities, words, top_k: int):
    """Top-k ``(word, probability)`` pairs, vocabulary order breaking ties."""
    p = np.asarray(probabilities, dtype=np.float64)
    k = max(0, min(int(top_k), len(words)))
    order = np.argsort(-p, kind="stable")[:k]
    return [(words[i], float(p[i])) for i in order]


def describe(image, bank: AttributeBank, top_k: int = 3):
    """The ``top_k`` most probable attribute words for an image (clipped to the bank size)."""
    if not bank.calibrated:
        raise ValueError("describe needs a calibrated bank")
    vec = extract_attribute_vector(image, bank)
    return rank_words(vec.probabilities, bank.words, top_k)


@dataclass(frozen=True)
class AttributeClusters:
    assignments: np.ndarray
    centers: np.ndarray
    dominant: tuple

    def to_json(self) -> str:
        return json.dumps({"assignments": self.assignments.tolist(),
                           "clusters": [{"id": c, "size": int(np.sum(self.assignments == c)),
                                         "dominant": list(d)}
                                        for c, d in enumerate(self.dominant)]}, indent=2)


def cluster_by_attributes(vectors, k: int, seed: int = 0, words=VOCABULARY,
                          n_dominant: int = 3) -> AttributeClusters:
    """k-means on attribute score vectors.

    Rows are put in a canonical (lexicographic) order before clustering, so
    the partition does not depend on the input order. Dominant attributes
    are the words with the highest mean score in each cluster.
    """
    X = np.vstack([v.scores if isinstance(v, AttributeVector) else np.asarray(v, float)
                   for v in vectors])
    if isinstance(vectors[0], AttributeVector):
        words = vectors[0].words
    if k < 1 or len(X) < k:
        raise ValueError(f"need at least k={k} vectors, got {len(X)}")
    canon = X[np.lexsort(X.T[::-1])]
    cb = train_kmeans(canon, k, seed=seed)
    assign, _ = nearest_center(X, cb.centers)
    dominant = []
    for c in range(k):
        members = X[assign == c]
        mean = members.mean(axis=0) if len(members) else cb.centers[c]
        top = np.argsort(-mean, kind="stable")[:n_dominant]
        dominant.append(tuple(words[i] for i in top))
    return AttributeClusters(assign, cb.centers, tuple(dominant))


def recalibrate_on_target(bank: AttributeBank, scores, labels) -> AttributeBank:
    """Refit the Platt sigmoid of every word on target-domain scores.

    ``scores`` and ``labels`` are ``(n, Q)``. Words whose target sample has
    a single class keep their old calibration and are listed in ``stale``.
    SVM weights are not touched.
    """
    S = np.asarray(scores, dtype=np.float64)
    Y = np.asarray(labels).astype(bool)
    if S.shape != Y.shape or S.shape[1] != len(bank.words):
        raise ValueError("scores and labels must be (n, n_words)")
    old = bank.platt or (None,) * len(bank.words)
    platt, stale = [], set()
    for q, word in enumerate(bank.words):
        if Y[:, q].all() or not Y[:, q].any():
            if old[q] is None:
                raise ValueError(f"{word!r} has one class in the target sample and no calibration")
            platt.append(old[q])
            stale.add(word)
        else:
            platt.append(platt_fit(S[:, q], np.where(Y[:, q], 1, -1)))
    return AttributeBank(bank.words, bank.coef, bank.bias, bank.train_features, bank.spec,
                         bank.recipe, tuple(platt), bank.C, frozenset(stale))
