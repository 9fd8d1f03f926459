import math

import numpy as np
import pytest

from glimg.dataset import split_dataset
from glimg.engine import HyperParams, fit
from glimg.errors import DataError
from glimg.evaluation import (
    FunctionScorer,
    ItemPopScorer,
    ModelScorer,
    evaluate,
    hit_ratio,
    item_pop_scores,
    ndcg,
    precision,
    recall,
    top_n,
)

from conftest import dense, random_matrix


class TestTopN:
    def test_sorting(self):
        items = top_n(np.array([0.1, 0.9, 0.5]), np.zeros(3, dtype=bool), 2)
        assert items.tolist() == [1, 2]

    def test_exclusion(self):
        rated = np.array([False, True, False])
        items = top_n(np.array([0.1, 0.9, 0.5]), rated, 2)
        assert items.tolist() == [2, 0]

    def test_tie_break_by_index(self):
        items = top_n(np.array([1.0, 1.0, 1.0]), np.zeros(3, dtype=bool), 3)
        assert items.tolist() == [0, 1, 2]

    def test_short_list(self):
        items = top_n(np.array([1.0, 2.0]), np.array([False, True]), 5)
        assert items.tolist() == [0]

    def test_bad_n(self):
        with pytest.raises(DataError):
            top_n(np.array([1.0]), np.array([False]), 0)


class TestMetrics:
    def test_hit_ratio_definition(self):
        lists = {0: [1, 2], 1: [3, 4], 2: [5, 6], 3: [7, 8]}
        test_items = {0: {1}, 1: {4}, 2: {9}, 3: {8}}
        assert hit_ratio(lists, test_items, 2) == 0.75

    def test_hit_ratio_zero(self):
        assert hit_ratio({0: [1]}, {0: {2}}, 1) == 0.0

    def test_hit_ratio_no_users(self):
        with pytest.raises(DataError):
            hit_ratio({}, {}, 10)

    def test_ndcg_perfect_single(self):
        assert ndcg({0: [5]}, {0: {5}}, 1) == 1.0

    def test_ndcg_no_hits(self):
        assert ndcg({0: [1, 2]}, {0: {3}}, 2) == 0.0

    def test_ndcg_position_two(self):
        # hit at position 2 of 2, one test item: (1/log2(3)) / (1/log2(2))
        value = ndcg({0: [9, 5]}, {0: {5}}, 2)
        assert value == pytest.approx(1.0 / math.log2(3), abs=1e-4)
        assert value == pytest.approx(0.6309, abs=1e-4)

    def test_ndcg_normalizer_saturates(self):
        # 3 test items but only the top min(N, 3) = 2 positions count as ideal
        assert ndcg({0: [1, 2]}, {0: {1, 2, 3}}, 2) == pytest.approx(1.0)

    def test_precision_recall_definitions(self):
        lists = {0: [1, 2, 3, 4, 5, 6, 7, 8, 9, 10]}
        test_items = {0: {1, 2, 11, 12}}
        assert precision(lists, test_items, 10) == pytest.approx(0.2)
        assert recall(lists, test_items, 10) == pytest.approx(0.5)

    def test_counting_oracle_random_instance(self, rng):
        num_items = 30
        lists = {u: rng.permutation(num_items)[:10].tolist() for u in range(8)}
        test_items = {u: set(rng.choice(num_items, 5, replace=False).tolist()) for u in range(8)}
        n = 10
        hits = {u: len([i for i in lists[u][:n] if i in test_items[u]]) for u in lists}
        assert hit_ratio(lists, test_items, n) == pytest.approx(
            sum(1 for u in lists if hits[u] > 0) / 8)
        assert precision(lists, test_items, n) == pytest.approx(
            sum(hits[u] / n for u in lists) / 8)
        assert recall(lists, test_items, n) == pytest.approx(
            sum(hits[u] / 5 for u in lists) / 8)
        # NDCG against a scalar re-implementation
        expected = 0.0
        for u in lists:
            dcg = sum(1.0 / math.log2(pos + 2)
                      for pos, item in enumerate(lists[u][:n]) if item in test_items[u])
            idcg = sum(1.0 / math.log2(pos + 2) for pos in range(min(n, 5)))
            expected += dcg / idcg
        assert ndcg(lists, test_items, n) == pytest.approx(expected / 8)

    def test_precision_consistency_identity(self, rng):
        lists = {u: rng.permutation(20)[:10].tolist() for u in range(5)}
        test_items = {u: set(rng.choice(20, 4, replace=False).tolist()) for u in range(5)}
        total_hits = sum(len(set(lists[u]) & test_items[u]) for u in lists)
        assert precision(lists, test_items, 10) * 10 == pytest.approx(total_hits / 5)


class TestItemPop:
    def test_popular_first(self, rng):
        matrix = random_matrix(rng, num_users=10, num_items=6)
        scores = item_pop_scores(matrix)
        counts = (dense(matrix) != 0).sum(axis=0)
        assert np.array_equal(scores, counts)

    def test_implicit_counts_not_sums(self, rng):
        matrix = random_matrix(rng)
        assert item_pop_scores(matrix).max() <= matrix.num_users


class TestEvaluate:
    def make_split(self, rng, **kwargs):
        matrix = random_matrix(rng, num_users=20, num_items=12, density=0.7, **kwargs)
        return split_dataset(matrix, seed=0)

    def test_perfect_scorer_hr_one(self, rng):
        split = self.make_split(rng)

        def oracle(u, _row):
            scores = np.zeros(split.test.num_items)
            scores[split.test.user_items(u)] = 1.0
            return scores

        report = evaluate(FunctionScorer(oracle), split, [10])
        assert report.metrics[10]["hr"] == 1.0
        assert report.metrics[10]["ndcg"] == pytest.approx(1.0)

    def test_random_scorer_matches_recount(self, rng):
        split = self.make_split(rng)
        score_matrix = rng.random((split.train.num_users, split.train.num_items))
        report = evaluate(FunctionScorer(lambda u, row: score_matrix[u]), split, [5])

        # independent end-to-end recount
        lists, test_items = {}, {}
        for u in range(split.train.num_users):
            t = set(split.test.user_items(u).tolist())
            if not t:
                continue
            test_items[u] = t
            rated = set(split.train.user_items(u).tolist())
            ranked = sorted(
                (i for i in range(split.train.num_items) if i not in rated),
                key=lambda i: (-score_matrix[u, i], i),
            )
            lists[u] = ranked[:5]
        assert report.metrics[5]["hr"] == pytest.approx(hit_ratio(lists, test_items, 5))
        assert report.metrics[5]["ndcg"] == pytest.approx(ndcg(lists, test_items, 5))
        assert report.metrics[5]["precision"] == pytest.approx(precision(lists, test_items, 5))
        assert report.metrics[5]["recall"] == pytest.approx(recall(lists, test_items, 5))

    def test_metrics_in_unit_interval(self, rng):
        split = self.make_split(rng)
        model = fit(split.train, HyperParams(k=2, seed=0))
        report = evaluate(model, split, [5, 10])
        for n, vals in report.metrics.items():
            for value in vals.values():
                assert 0.0 <= value <= 1.0

    def test_rank_invariance_under_monotone_transform(self, rng):
        split = self.make_split(rng)
        score_matrix = rng.random((split.train.num_users, split.train.num_items))
        a = evaluate(FunctionScorer(lambda u, row: score_matrix[u]), split, [5])
        b = evaluate(FunctionScorer(lambda u, row: np.exp(3 * score_matrix[u])), split, [5])
        assert a.metrics == b.metrics

    def test_empty_test_split_rejected(self, rng):
        matrix = random_matrix(rng, num_users=4, num_items=3, density=0.4)
        split = split_dataset(matrix, seed=0)
        if split.test.nnz == 0:
            with pytest.raises(DataError):
                evaluate(ItemPopScorer(split.train), split, [5])
        else:
            pytest.skip("random split produced a non-empty test set")

    def test_report_serialization(self, tmp_path, rng):
        split = self.make_split(rng)
        report = evaluate(ItemPopScorer(split.train), split, [5, 10])
        text = report.to_json(tmp_path / "r.json")
        assert (tmp_path / "r.json").exists()
        assert '"10"' in text
        table = report.to_table()
        assert "NDCG" in table and "@10" in table
