import numpy as np
import pytest

from oracles import label_posterior_oracle, loo_recall_oracle
from texdesc.annotation import (AnnotationBatch, AnnotatorModel, CooccurrenceModel,
                                PosteriorLabels, adjusted_scores, aggregate,
                                estimate_cooccurrence, majority_vote, make_world, recall_curve,
                                simulate_annotators, suggest_attributes, suggest_attributes_cv)


def _batch(votes, attribute=0, item=0, keys=None):
    n = len(votes)
    return AnnotationBatch([attribute] * n, [item] * n, list(range(n)), votes, keys or {})


class TestCooccurrence:
    def test_smoothed_counts(self):
        labels = np.zeros((12, 3), dtype=bool)
        labels[:, 0] = labels[:, 1] = True
        model = estimate_cooccurrence(labels, [0] * 12, require_coverage=False)
        assert model.p_cond[0, 1] == pytest.approx(12.5 / 13)
        assert model.p_cond[0, 2] == pytest.approx(0.5 / 13)
        np.testing.assert_array_equal(np.diag(model.p_cond), 1.0)
        assert model.p_cond[1, 2] == 0.5

    def test_missing_coverage(self):
        with pytest.raises(ValueError, match=r"\[1, 2\]"):
            estimate_cooccurrence(np.eye(3, dtype=bool)[[0]], [0])

    def test_key_must_be_labeled(self):
        with pytest.raises(ValueError):
            estimate_cooccurrence(np.zeros((1, 2), dtype=bool), [0], require_coverage=False)


def _three_attribute_model():
    p = np.array([[1.0, 0.4, 0.1], [0.2, 1.0, 0.2], [0.3, 0.3, 1.0]])
    return CooccurrenceModel(p, [12, 12, 12], 1 / 3)


class TestPlanning:
    def test_budget_zero(self):
        assert suggest_attributes(0, _three_attribute_model(), 0) == []

    def test_hand_built_ranking(self):
        assert suggest_attributes(0, _three_attribute_model(), 1) == [1]
        assert suggest_attributes(0, _three_attribute_model(), 5) == [1, 2]
        with pytest.raises(ValueError):
            suggest_attributes(0, _three_attribute_model(), -1)

    def test_full_budget_sorted(self, rng):
        world = make_world(items_per_key=3, seed=2)
        model = estimate_cooccurrence(world.labels, world.keys)
        out = suggest_attributes(5, model, 46)
        assert sorted(out) == [r for r in range(47) if r != 5]
        p = model.p_cond[5, out]
        assert np.all(np.diff(p) <= 0)

    def test_cv_reduces_to_plain_with_uniform_scores(self):
        world = make_world(items_per_key=4, seed=1)
        model = estimate_cooccurrence(world.labels, world.keys)
        uniform = np.full(47, model.p0)
        for q in (0, 17, 46):
            assert suggest_attributes_cv(q, uniform, model, 46) == suggest_attributes(q, model, 46)

    def test_cv_cancellation_gives_index_order(self):
        p0 = 1 / 47
        p = np.full((47, 47), p0)
        np.fill_diagonal(p, 1.0)
        model = CooccurrenceModel(p, np.ones(47), p0)
        adj = adjusted_scores(3, np.full(47, p0), model)
        np.testing.assert_allclose(np.delete(adj, 3), p0)
        assert suggest_attributes_cv(3, np.full(47, p0), model, 5) == [0, 1, 2, 4, 5]

    def test_cv_even_odds_scales_by_46(self, rng):
        p = np.full((47, 47), 0.5)
        np.fill_diagonal(p, 1.0)
        model = CooccurrenceModel(p, np.ones(47), 1 / 47)
        sigma = rng.random(47)
        adj = adjusted_scores(0, sigma, model)
        np.testing.assert_allclose(adj[1:], 46 * sigma[1:], rtol=1e-13)
        want = [int(r) for r in np.argsort(-sigma, kind="stable") if r != 0][:10]
        assert suggest_attributes_cv(0, sigma, model, 10) == want

    def test_cv_full_budget_permutation(self, rng):
        world = make_world(items_per_key=3, seed=4)
        model = estimate_cooccurrence(world.labels, world.keys)
        out = suggest_attributes_cv(9, world.probabilities[0], model, 60)
        assert sorted(out) == [r for r in range(47) if r != 9]


class TestAggregation:
    def test_unanimous_votes(self):
        res = aggregate(_batch([1] * 5), n_attributes=1)
        m = res.posterior.marginals[(0, 0)]
        assert m > 0.99 and res.posterior.label(0, 0) == 1
        fixed = aggregate(_batch([1] * 5), n_attributes=1, fixed=True)
        assert fixed.posterior.marginals[(0, 0)] == pytest.approx(
            label_posterior_oracle([1] * 5, [0.8] * 5, [0.8] * 5, 0.5), abs=1e-12)

    def test_three_to_two(self):
        res = aggregate(_batch([1, 1, 1, 0, 0]), n_attributes=1, fixed=True)
        assert res.posterior.marginals[(0, 0)] == pytest.approx(0.8, abs=1e-12)
        assert res.posterior.label(0, 0) == 1

    def test_matches_exact_enumeration(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 6))
            votes = rng.integers(0, 2, n).tolist()
            sens = rng.uniform(0.55, 0.95, n)
            spec = rng.uniform(0.55, 0.95, n)
            prior = float(rng.uniform(0.1, 0.9))
            models = [AnnotatorModel(s, t) for s, t in zip(sens, spec)]
            res = aggregate(_batch(votes), 1, models, class_prior=prior, fixed=True)
            assert res.posterior.marginals[(0, 0)] == pytest.approx(
                label_posterior_oracle(votes, sens, spec, prior), abs=1e-12)

    def test_random_annotator_is_discovered(self, rng):
        n = 500
        A, I, J, V = [], [], [], []
        for i in range(n):
            for q, truth in ((0, 1), (1, 0)):
                for j in range(4):
                    A.append(q), I.append(i), J.append(j), V.append(truth)
                A.append(q), I.append(i), J.append(4), V.append(int(rng.random() < 0.5))
        batch = AnnotationBatch(A, I, J, V, {i: 0 for i in range(n)})
        res = aggregate(batch, n_attributes=2)
        bad = res.annotators[4]
        assert abs(bad.sensitivity - 0.5) <= 0.05 and abs(bad.specificity - 0.5) <= 0.05
        labels = res.posterior.labels()
        assert all(labels[(0, i)] == 1 and labels[(1, i)] == 0 for i in range(n))

    def test_monotone_in_positive_votes(self, rng):
        models = [AnnotatorModel(float(s), float(t))
                  for s, t in zip(rng.uniform(0.6, 0.9, 6), rng.uniform(0.6, 0.9, 6))]
        votes = [0, 1, 0, 0, 1]
        before = aggregate(_batch(votes), 1, models, fixed=True).posterior.marginals[(0, 0)]
        after = aggregate(_batch(votes + [1]), 1, models, fixed=True).posterior.marginals[(0, 0)]
        assert after >= before

    def test_perfect_annotator_reproduced(self, rng):
        votes = rng.integers(0, 2, 30)
        batch = AnnotationBatch(np.arange(30) % 3, np.arange(30) // 3, np.zeros(30), votes)
        res = aggregate(batch, 3, [AnnotatorModel(1 - 1e-9, 1 - 1e-9)], fixed=True)
        labels = res.posterior.labels()
        assert [labels[(a, i)] for a, i in zip(np.arange(30) % 3, np.arange(30) // 3)] == \
            votes.tolist()

    def test_clamped_keys_never_flip(self):
        batch = AnnotationBatch([2] * 5 + [1] * 5, [0] * 10, list(range(5)) * 2,
                                [0] * 5 + [1] * 5, {0: 2})
        res = aggregate(batch, 3)
        assert res.posterior.marginals[(2, 0)] == 1.0
        assert (2, 0) in res.posterior.clamped

    def test_unobserved_query(self):
        res = aggregate(_batch([1, 1]), 2, class_prior=0.3, fixed=True, queries=[(1, 7)])
        assert res.posterior.marginals[(1, 7)] == pytest.approx(0.3)
        assert res.posterior.unobserved == {(1, 7)}

    def test_majority_vote(self):
        assert majority_vote(_batch([1, 1, 0])) == {(0, 0): 1}
        assert majority_vote(_batch([1, 0])) == {(0, 0): 0}


class TestSimulator:
    def test_perfect_annotators(self, rng):
        Y = rng.random((40, 5)) < 0.3
        pop = [AnnotatorModel(0.999, 0.999) for _ in range(6)]
        batch = simulate_annotators(Y, pop, seed=1)
        truth = Y[batch.item, batch.attribute]
        assert np.mean(batch.vote == truth) >= 0.99

    def test_coin_flip_annotators(self):
        Y = np.zeros((200, 1), dtype=bool)
        Y[:100] = True
        batch = simulate_annotators(Y, [AnnotatorModel(0.5, 0.5)] * 5, seed=2)
        assert len(batch) == 1000
        assert abs(batch.vote.mean() - 0.5) <= 0.05

    def test_deterministic(self, rng):
        Y = rng.random((10, 4)) < 0.5
        pop = [AnnotatorModel(0.7, 0.9)] * 8
        a = simulate_annotators(Y, pop, seed=3)
        b = simulate_annotators(Y, pop, seed=3)
        for col in ("attribute", "item", "annotator", "vote"):
            np.testing.assert_array_equal(getattr(a, col), getattr(b, col))

    def test_errors(self):
        with pytest.raises(ValueError):
            simulate_annotators(np.ones((1, 1)), [AnnotatorModel()], votes_per_pair=2)
        with pytest.raises(ValueError):
            AnnotatorModel(1.0, 0.5)
        with pytest.raises(ValueError):
            AnnotationBatch([0, 0], [0, 0], [1, 1], [0, 1])


@pytest.fixture(scope="module")
def world():
    return make_world(items_per_key=12, seed=0)


class TestRecallCurve:
    def test_endpoints(self, world):
        for planner in ("plain", "cv"):
            curve = recall_curve(world, planner, budgets=[0, 46])
            assert curve.recall == (0.0, 1.0)
            assert curve.full_recall[1] == 1.0

    def test_matches_enumeration_oracle(self, world):
        got = recall_curve(world, "plain", budgets=[10]).recall[0]
        assert got == pytest.approx(loo_recall_oracle(world.labels, world.keys, 10), abs=1e-12)

    def test_monotone(self, world):
        for planner in ("plain", "cv"):
            r = recall_curve(world, planner, budgets=range(0, 47, 3)).recall
            assert np.all(np.diff(r) >= 0)

    def test_world_sparsity(self, world):
        extras = np.mean([len(world.extras(i)) for i in range(len(world.keys))])
        assert 2.0 <= extras <= 3.0

    def test_unknown_planner(self, world):
        with pytest.raises(ValueError):
            recall_curve(world, "greedy")


class TestCsv:
    def test_batch_round_trip(self, tmp_path, rng):
        Y = rng.random((6, 3)) < 0.5
        batch = simulate_annotators(Y, [AnnotatorModel()] * 5, seed=0, keys={0: 1})
        batch.to_csv(tmp_path / "votes.csv")
        back = AnnotationBatch.from_csv(tmp_path / "votes.csv", batch.keys)
        for col in ("attribute", "item", "annotator", "vote"):
            np.testing.assert_array_equal(getattr(back, col), getattr(batch, col))
        assert (tmp_path / "votes.csv").read_text().startswith("attribute,item,annotator,vote\n")

    def test_posterior_csv(self, tmp_path):
        PosteriorLabels({(0, 1): 0.75, (2, 0): 0.5}).to_csv(tmp_path / "p.csv")
        lines = (tmp_path / "p.csv").read_text().splitlines()
        assert lines == ["attribute,item,marginal,label", "0,1,0.75,1", "2,0,0.5,0"]
