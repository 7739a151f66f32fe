"""Joint attribute annotation: co-occurrence planning, noisy vote aggregation
and a simulator standing in for crowd annotators.

Attributes are integer indices ``0..Q-1`` (into ``VOCABULARY`` by default).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .dataset import atomic_write_text

N_ATTRIBUTES = 47
LAPLACE_EPS = 0.5
LABEL_THRESHOLD = 0.6


# -- co-occurrence and planning -------------------------------------------------


@dataclass(frozen=True)
class CooccurrenceModel:
    """``p_cond[q, r]`` is the probability that attribute r is present on an
    item whose key attribute is q."""

    p_cond: np.ndarray
    support: np.ndarray
    p0: float

    def __post_init__(self):
        p = np.asarray(self.p_cond, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("p_cond must be square")
        if np.any(p < 0) or np.any(p > 1) or not np.all(np.diag(p) == 1.0):
            raise ValueError("p_cond entries must be in [0, 1] with unit diagonal")
        p.setflags(write=False)
        object.__setattr__(self, "p_cond", p)
        object.__setattr__(self, "support", np.asarray(self.support, dtype=np.int64))

    @property
    def n_attributes(self) -> int:
        return self.p_cond.shape[0]


def estimate_cooccurrence(labels, keys, n_attributes: int | None = None,
                          eps: float = LAPLACE_EPS, require_coverage: bool = True,
                          p0: float | None = None) -> CooccurrenceModel:
    """Laplace-smoothed ``p(r | q) = (count_r + eps) / (n_q + 2 eps)`` over
    exhaustively labeled items with key attribute q.

    ``labels`` is an ``(n, Q)`` boolean matrix of full labels and ``keys``
    the key attribute of each item. Key attributes with no items raise
    unless ``require_coverage`` is off, in which case their row is the
    smoothed value ``1/2``.
    """
    Y = np.asarray(labels).astype(bool)
    keys = np.asarray(keys, dtype=np.int64)
    Q = n_attributes if n_attributes is not None else Y.shape[1]
    if Y.ndim != 2 or Y.shape[1] != Q or keys.shape != (len(Y),):
        raise ValueError("labels must be (n_items, n_attributes) with one key per item")
    if np.any(~Y[np.arange(len(Y)), keys]):
        raise ValueError("every item must carry its key attribute")
    counts = np.zeros((Q, Q))
    np.add.at(counts, keys, Y.astype(np.float64))
    support = np.bincount(keys, minlength=Q)
    if require_coverage and np.any(support == 0):
        gaps = np.flatnonzero(support == 0).tolist()
        raise ValueError(f"key attributes without exhaustive items: {gaps}")
    p = (counts + eps) / (support[:, None] + 2 * eps)
    np.fill_diagonal(p, 1.0)
    return CooccurrenceModel(p, support, 1.0 / Q if p0 is None else p0)


def _ranked(q: int, score: np.ndarray, budget: int) -> list:
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    order = [int(r) for r in np.argsort(-score, kind="stable") if r != q]
    return order[:budget]


def suggest_attributes(q: int, model: CooccurrenceModel, budget: int) -> list:
    """Other attributes by decreasing ``p(r | q)``; index order breaks ties."""
    return _ranked(q, model.p_cond[q], budget)


def _adjust(p_row, probabilities, p0):
    s = np.asarray(probabilities, dtype=np.float64)
    with np.errstate(divide="ignore"):
        odds = np.where(p_row < 1.0, p_row / np.where(p_row < 1.0, 1.0 - p_row, 1.0), np.inf)
    return s * odds * (1.0 - p0) / p0


def adjusted_scores(q: int, probabilities, model: CooccurrenceModel) -> np.ndarray:
    """``sigma_r * p(r|q) / (1 - p(r|q)) * (1 - p0) / p0`` for every attribute r."""
    return _adjust(model.p_cond[q], probabilities, model.p0)


def suggest_attributes_cv(q: int, probabilities, model: CooccurrenceModel, budget: int) -> list:
    """Rank other attributes by co-occurrence odds weighted by calibrated
    classifier probabilities for the item."""
    return _ranked(q, adjusted_scores(q, probabilities, model), budget)


# -- votes and aggregation ----------------------------------------------------


@dataclass(frozen=True)
class AnnotatorModel:
    """Per-annotator true-positive and true-negative rates with Beta prior pseudo-counts."""

    sensitivity: float = 0.8
    specificity: float = 0.8
    prior_a: float = 8.0
    prior_b: float = 2.0

    def __post_init__(self):
        for r in (self.sensitivity, self.specificity):
            if not 0.0 < r < 1.0:
                raise ValueError("annotator rates must lie in (0, 1)")


@dataclass(frozen=True)
class AnnotationBatch:
    """Binary votes ``(attribute, item, annotator, vote)`` plus known key attributes."""

    attribute: np.ndarray
    item: np.ndarray
    annotator: np.ndarray
    vote: np.ndarray
    keys: dict = field(default_factory=dict)

    def __post_init__(self):
        cols = [np.asarray(c, dtype=np.int64).reshape(-1)
                for c in (self.attribute, self.item, self.annotator, self.vote)]
        if len({len(c) for c in cols}) != 1:
            raise ValueError("vote columns differ in length")
        if not np.all(np.isin(cols[3], (0, 1))):
            raise ValueError("votes must be 0 or 1")
        triples = np.stack(cols[:3], axis=1)
        if len(np.unique(triples, axis=0)) != len(triples):
            raise ValueError("an annotator voted twice on the same attribute and item")
        for name, c in zip(("attribute", "item", "annotator", "vote"), cols):
            c.setflags(write=False)
            object.__setattr__(self, name, c)
        object.__setattr__(self, "keys", {int(k): int(v) for k, v in self.keys.items()})

    def __len__(self):
        return len(self.vote)

    @property
    def n_annotators(self) -> int:
        return int(self.annotator.max()) + 1 if len(self) else 0

    def pairs(self):
        """Sorted unique ``(attribute, item)`` pairs with at least one vote."""
        return sorted(set(zip(self.attribute.tolist(), self.item.tolist())))

    def to_csv(self, path):
        lines = ["attribute,item,annotator,vote"]
        lines += [f"{a},{i},{j},{v}" for a, i, j, v in
                  zip(self.attribute, self.item, self.annotator, self.vote)]
        atomic_write_text(path, "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path, keys=None):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        cols = {k: [int(r[k]) for r in rows] for k in ("attribute", "item", "annotator", "vote")}
        return cls(cols["attribute"], cols["item"], cols["annotator"], cols["vote"], keys or {})


@dataclass(frozen=True)
class PosteriorLabels:
    marginals: dict
    threshold: float = LABEL_THRESHOLD
    unobserved: frozenset = frozenset()
    clamped: frozenset = frozenset()

    def label(self, attribute: int, item: int) -> int:
        return int(self.marginals[(attribute, item)] >= self.threshold)

    def labels(self) -> dict:
        return {k: int(v >= self.threshold) for k, v in self.marginals.items()}

    def to_csv(self, path):
        lines = ["attribute,item,marginal,label"]
        lines += [f"{q},{i},{m:.10g},{int(m >= self.threshold)}"
                  for (q, i), m in sorted(self.marginals.items())]
        atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class AggregationResult:
    posterior: PosteriorLabels
    annotators: tuple
    class_prior: np.ndarray
    rounds: int


def _clip_rate(r):
    return float(np.clip(r, 1e-6, 1 - 1e-6))


def aggregate(batch: AnnotationBatch, n_attributes: int = N_ATTRIBUTES, annotators=None,
              class_prior=0.5, fixed: bool = False, queries=(), max_rounds: int = 100,
              tol: float = 1e-6, threshold: float = LABEL_THRESHOLD,
              clamp_keys: bool = True) -> AggregationResult:
    """Posterior marginals of true labels under a per-annotator
    sensitivity/specificity model.

    Alternates an exact per-pair E-step (given rates and a per-attribute
    class prior) with MAP updates of every annotator's rates under their
    Beta pseudo-counts and of each attribute's class prior. With
    ``fixed=True`` the given rates and prior are used as they are and one
    E-step is returned. Key attributes are clamped to 1 and also
    calibrate annotators in the M-step. Pairs listed in ``queries`` with no
    votes get the class prior and are reported as unobserved.
    """
    n_ann = batch.n_annotators
    if annotators is None:
        annotators = [AnnotatorModel() for _ in range(n_ann)]
    annotators = list(annotators)
    if len(annotators) < n_ann:
        raise ValueError(f"batch has {n_ann} annotators, got {len(annotators)} models")
    prior = np.broadcast_to(np.asarray(class_prior, dtype=np.float64), (n_attributes,)).copy()
    pairs = batch.pairs()
    index = {p: k for k, p in enumerate(pairs)}
    pid = np.array([index[(a, i)] for a, i in zip(batch.attribute.tolist(), batch.item.tolist())],
                   dtype=np.int64)
    pair_attr = np.array([a for a, _ in pairs], dtype=np.int64)
    clamped = np.array([clamp_keys and batch.keys.get(i) == a for a, i in pairs], dtype=bool)
    v = batch.vote.astype(np.float64)
    j = batch.annotator
    sens = np.array([m.sensitivity for m in annotators], dtype=np.float64)
    spec = np.array([m.specificity for m in annotators], dtype=np.float64)
    pa = np.array([m.prior_a for m in annotators], dtype=np.float64)
    pb = np.array([m.prior_b for m in annotators], dtype=np.float64)

    def e_step():
        llr_pos = np.log(sens[j]) - np.log1p(-spec[j])
        llr_neg = np.log1p(-sens[j]) - np.log(spec[j])
        per_vote = np.where(v > 0, llr_pos, llr_neg)
        total = np.bincount(pid, weights=per_vote, minlength=len(pairs))
        m = expit(logit(np.clip(prior[pair_attr], 1e-12, 1 - 1e-12)) + total)
        m[clamped] = 1.0
        return m

    m = e_step()
    rounds = 1
    if not fixed:
        for _ in range(max_rounds):
            mv = m[pid]
            n_ann_all = len(annotators)
            pos_w = np.bincount(j, weights=mv, minlength=n_ann_all)
            neg_w = np.bincount(j, weights=1.0 - mv, minlength=n_ann_all)
            tp = np.bincount(j, weights=mv * v, minlength=n_ann_all)
            tn = np.bincount(j, weights=(1.0 - mv) * (1.0 - v), minlength=n_ann_all)
            sens = np.clip((tp + pa - 1) / (pos_w + pa + pb - 2), 1e-6, 1 - 1e-6)
            spec = np.clip((tn + pa - 1) / (neg_w + pa + pb - 2), 1e-6, 1 - 1e-6)
            free = ~clamped
            num = np.bincount(pair_attr[free], weights=m[free], minlength=n_attributes)
            den = np.bincount(pair_attr[free], minlength=n_attributes)
            prior = np.where(den > 0, (num + 1.0) / (den + 2.0), prior)
            new = e_step()
            rounds += 1
            change = np.max(np.abs(new - m)) if len(m) else 0.0
            m = new
            if change < tol:
                break
    marginals = {p: float(m[k]) for k, p in enumerate(pairs)}
    unobserved = set()
    for q, i in queries:
        if (q, i) not in marginals:
            marginals[(q, i)] = float(prior[q])
            unobserved.add((q, i))
    fitted = tuple(AnnotatorModel(_clip_rate(s), _clip_rate(t), float(a), float(b))
                   for s, t, a, b in zip(sens, spec, pa, pb))
    post = PosteriorLabels(marginals, threshold, frozenset(unobserved),
                           frozenset(p for p, c in zip(pairs, clamped) if c))
    return AggregationResult(post, fitted, prior, rounds)


def majority_vote(batch: AnnotationBatch) -> dict:
    """Label 1 when strictly more than half of a pair's votes are 1."""
    out = {}
    for (a, i), votes in _group_votes(batch).items():
        out[(a, i)] = int(2 * sum(votes) > len(votes))
    return out


def _group_votes(batch):
    groups = {}
    for a, i, v in zip(batch.attribute.tolist(), batch.item.tolist(), batch.vote.tolist()):
        groups.setdefault((a, i), []).append(v)
    return groups


def simulate_annotators(true_labels, population, pairs=None, votes_per_pair: int = 5,
                        seed: int = 0, keys=None) -> AnnotationBatch:
    """Draw Bernoulli votes for every requested ``(attribute, item)`` pair.

    Each pair is voted on by ``votes_per_pair`` distinct annotators drawn
    from ``population``; a vote is 1 with probability ``sensitivity`` when
    the label is true and ``1 - specificity`` when it is false.
    """
    Y = np.asarray(true_labels).astype(bool)
    population = list(population)
    if votes_per_pair > len(population):
        raise ValueError("more votes per pair than annotators")
    if pairs is None:
        pairs = [(q, i) for i in range(Y.shape[0]) for q in range(Y.shape[1])]
    rng = np.random.default_rng(seed)
    sens = np.array([m.sensitivity for m in population])
    spec = np.array([m.specificity for m in population])
    A, I, J, V = [], [], [], []
    for q, i in pairs:
        who = rng.choice(len(population), size=votes_per_pair, replace=False)
        p1 = np.where(Y[i, q], sens[who], 1.0 - spec[who])
        votes = (rng.random(votes_per_pair) < p1).astype(np.int64)
        A += [q] * votes_per_pair
        I += [i] * votes_per_pair
        J += who.tolist()
        V += votes.tolist()
    return AnnotationBatch(A, I, J, V, keys or {})


# -- simulated worlds and recall curves ------------------------------------------


@dataclass(frozen=True)
class AnnotationWorld:
    """Full ground truth for items collected per key attribute.

    ``probabilities`` are calibrated classifier probabilities per item and
    attribute, consistent with the base rate ``p0``.
    """

    labels: np.ndarray
    keys: np.ndarray
    probabilities: np.ndarray
    companions: tuple

    @property
    def n_attributes(self) -> int:
        return self.labels.shape[1]

    def extras(self, i: int) -> np.ndarray:
        row = self.labels[i].copy()
        row[self.keys[i]] = False
        return np.flatnonzero(row)


def make_world(n_attributes: int = N_ATTRIBUTES, items_per_key: int = 12,
               extra_mean: float = 2.5, n_companions: int = 6, background: float = 0.1,
               signal: float = 2.0, seed: int = 0) -> AnnotationWorld:
    """Sparse, correlated attribute world.

    Each key attribute has ``n_companions`` related attributes carrying
    ``1 - background`` of the expected ``extra_mean`` extra attributes per
    item, with Dirichlet-distributed shares; the rest is spread evenly over
    the other attributes. Classifier scores are ``signal * truth`` plus
    unit Gaussian noise, turned into exact posteriors under base rate
    ``1 / n_attributes``.
    """
    rng = np.random.default_rng(seed)
    Q = n_attributes
    rates = np.zeros((Q, Q))
    companions = []
    for q in range(Q):
        others = np.array([r for r in range(Q) if r != q])
        comp = np.sort(rng.choice(others, size=n_companions, replace=False))
        share = rng.dirichlet(np.ones(n_companions))
        rates[q, others] = extra_mean * background / (Q - 1 - n_companions)
        rates[q, comp] = np.minimum(extra_mean * (1 - background) * share, 0.95)
        rates[q, q] = 1.0
        companions.append(tuple(int(c) for c in comp))
    keys = np.repeat(np.arange(Q), items_per_key)
    labels = rng.random((len(keys), Q)) < rates[keys]
    labels[np.arange(len(keys)), keys] = True
    scores = signal * labels + rng.standard_normal(labels.shape)
    p0 = 1.0 / Q
    log_lr = signal * scores - 0.5 * signal ** 2
    probs = expit(logit(p0) + log_lr)
    return AnnotationWorld(labels, keys, probs, tuple(companions))


@dataclass(frozen=True)
class RecallCurve:
    budgets: tuple
    recall: tuple
    full_recall: tuple


def recall_curve(world: AnnotationWorld, planner: str = "plain", budgets=range(0, 13),
                 eps: float = LAPLACE_EPS) -> RecallCurve:
    """Leave-one-out recall of non-key attributes.

    For every item, co-occurrence is estimated from all other items, the
    planner suggests ``budget`` attributes for its key, and we count how
    many of its true extra attributes are covered. ``recall`` is the
    covered fraction of all extra occurrences; ``full_recall`` the fraction
    of items whose extras are all covered.
    """
    if planner not in ("plain", "cv"):
        raise ValueError(f"unknown planner {planner!r}")
    budgets = tuple(int(b) for b in budgets)
    Y, keys = world.labels, world.keys
    Q = world.n_attributes
    counts = np.zeros((Q, Q))
    np.add.at(counts, keys, Y.astype(np.float64))
    support = np.bincount(keys, minlength=Q)
    covered = np.zeros(len(budgets))
    full = np.zeros(len(budgets))
    total = 0
    max_b = max(budgets) if budgets else 0
    for i in range(len(Y)):
        q = keys[i]
        row = (counts[q] - Y[i] + eps) / (support[q] - 1 + 2 * eps)
        row[q] = 1.0
        score = row if planner == "plain" else _adjust(row, world.probabilities[i], 1.0 / Q)
        ranked = _ranked(q, score, max_b)
        extras = set(world.extras(i).tolist())
        total += len(extras)
        for k, b in enumerate(budgets):
            hit = len(extras.intersection(ranked[:b]))
            covered[k] += hit
            full[k] += hit == len(extras)
    recall = covered / total if total else np.ones(len(budgets))
    return RecallCurve(budgets, tuple(float(r) for r in recall),
                       tuple(float(f) for f in full / len(Y)))


def write_recall_csv(curves: dict, path):
    lines = ["planner,budget,recall,full_recall"]
    for name, c in curves.items():
        lines += [f"{name},{b},{r:.6f},{f:.6f}" for b, r, f in zip(c.budgets, c.recall,
                                                                     c.full_recall)]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
