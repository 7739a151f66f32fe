import json

import numpy as np
import pytest

from texdesc.dataset import Split, make_stratified_splits
from texdesc.errors import UndefinedMetricError
from texdesc.evaluation import (ConfusionMatrix, accuracy, average_precision, evaluate_split,
                                mean_ap, mean_class_accuracy, run_experiment)
from texdesc.learn import KernelSpec


class TestAveragePrecision:
    def test_perfect_ranking(self):
        assert average_precision([0.9, 0.8, 0.1, 0.0], [1, 1, 0, 0]) == 1.0

    def test_single_hit_at_rank_two(self):
        assert average_precision([0.9, 0.1], [0, 1]) == 0.5

    def test_hand_value(self):
        assert average_precision([4, 3, 2, 1], [1, 0, 1, 0]) == pytest.approx(
            (1 + 2 / 3) / 2, abs=1e-15)

    def test_ties_keep_input_order(self):
        assert average_precision([1.0, 1.0], [0, 1]) == 0.5
        assert average_precision([1.0, 1.0], [1, 0]) == 1.0

    def test_monotone_invariance(self, rng):
        s = rng.normal(size=30)
        r = rng.random(30) < 0.4
        r[0] = True
        assert average_precision(np.exp(3 * s) + 2, r) == average_precision(s, r)

    def test_no_relevant_items(self):
        with pytest.raises(UndefinedMetricError):
            average_precision([0.1, 0.2], [0, 0])

    def test_mean_ap(self):
        assert mean_ap([1.0, 0.5]) == 0.75
        with pytest.raises(UndefinedMetricError):
            mean_ap([])


class TestConfusion:
    def test_diagonal(self):
        cm = ConfusionMatrix(np.diag([3, 4, 5]))
        assert accuracy(cm) == 1.0 and mean_class_accuracy(cm) == 1.0

    def test_uniform(self):
        assert accuracy(ConfusionMatrix([[1, 1], [1, 1]])) == 0.5

    def test_hand_values(self):
        cm = ConfusionMatrix([[3, 1], [2, 4]])
        assert accuracy(cm) == pytest.approx(0.7)
        assert mean_class_accuracy(cm) == pytest.approx((0.75 + 2 / 3) / 2)
        assert mean_class_accuracy(cm) == pytest.approx(0.7083, abs=1e-4)

    def test_from_labels(self):
        cm = ConfusionMatrix.from_labels([0, 0, 1, 2], [0, 1, 1, 2])
        np.testing.assert_array_equal(cm.counts, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])
        np.testing.assert_array_equal(cm.counts.sum(axis=1), [2, 1, 1])

    def test_empty_and_invalid(self):
        with pytest.raises(UndefinedMetricError):
            accuracy(ConfusionMatrix(np.zeros((2, 2))))
        with pytest.raises(UndefinedMetricError):
            mean_class_accuracy(ConfusionMatrix(np.zeros((2, 2))))
        with pytest.raises(ValueError):
            ConfusionMatrix([[1, -1], [0, 0]])


class TestExperiment:
    def test_one_hot_features(self):
        labels = np.repeat(np.arange(4), 6)
        F = np.eye(4)[labels]
        report = run_experiment(F, labels, make_stratified_splits(labels, 3, seed=0),
                                KernelSpec("linear"))
        assert report.mean == 1.0 and report.std == 0.0
        assert report.mean_map == 1.0

    def test_random_labels_near_chance(self, rng):
        labels = np.repeat([0, 1], 45)
        F = rng.random((90, 8))
        splits = make_stratified_splits(labels, 10, seed=1)
        report = run_experiment(F, labels, splits, KernelSpec("exp-chi2"))
        n_test = sum(len(s.test) for s in splits)
        bound = 3 * np.sqrt(0.25 / n_test)
        assert abs(report.mean - 0.5) <= bound

    def test_deterministic_report(self, rng):
        labels = np.repeat(np.arange(3), 6)
        F = rng.random((18, 5)) + np.eye(3)[labels].repeat(2, axis=1)[:, :5]
        splits = make_stratified_splits(labels, 2, seed=4)
        a = run_experiment(F, labels, splits, KernelSpec("hellinger")).to_dict()
        b = run_experiment(F, labels, splits, KernelSpec("hellinger")).to_dict()
        a.pop("wall_time_s"), b.pop("wall_time_s")
        assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)

    def test_overlapping_split_rejected(self, rng):
        labels = np.repeat([0, 1], 3)
        with pytest.raises(AssertionError):
            evaluate_split(rng.random((6, 2)), labels, Split((0, 3), (1, 4), (0, 5)),
                           KernelSpec(), [1.0])

    def test_combined_channels(self, rng):
        labels = np.repeat(np.arange(3), 6)
        F1 = np.eye(3)[labels]
        F2 = rng.random((18, 4))
        split = make_stratified_splits(labels, 1, seed=0)[0]
        res = evaluate_split([F1, F2], labels, split,
                             [KernelSpec("linear", normalize=True), KernelSpec("exp-chi2")],
                             [1.0], weights=[0.9, 0.1])
        assert res["accuracy"] == 1.0
        assert res["lambda"][0] is None and res["lambda"][1] > 0
