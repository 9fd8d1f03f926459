"""Top-N evaluation harness: ranked lists, HR/NDCG/Precision/Recall, ItemPop.

All metrics are averaged over evaluated users, i.e. users with at least one
test item; users with an empty test split are excluded and counted. Relevance
is binary: an item is a hit iff it appears in the user's test split. Ties in
scores break by ascending item index so every run is reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import DatasetSplit, RatingMatrix
from .engine import GlimgModel
from .errors import DataError

_CHUNK = 1024  # users scored per batch


def top_n(scores: np.ndarray, rated_mask: np.ndarray, n: int) -> np.ndarray:
    """Indices of the n highest-scored unrated items.

    Ties break by ascending item index; with fewer than n eligible items the
    list is shorter.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    scores = np.asarray(scores, dtype=np.float64)
    eligible = np.flatnonzero(~np.asarray(rated_mask, dtype=bool))
    order = np.argsort(-scores[eligible], kind="stable")
    return eligible[order[:n]]


def hit_ratio(lists: Mapping[int, Sequence[int]], test_items: Mapping[int, set], n: int) -> float:
    """Fraction of evaluated users with at least one test item in their top-n."""
    users = _evaluated_users(lists, test_items)
    if not users:
        raise DataError("no users with test items to evaluate")
    hits = sum(1 for u in users if set(list(lists[u])[:n]) & test_items[u])
    return hits / len(users)


def ndcg(lists: Mapping[int, Sequence[int]], test_items: Mapping[int, set], n: int) -> float:
    """Binary-relevance NDCG@n averaged over evaluated users.

    The per-user normalizer is the DCG of an ideal list whose first
    min(n, #test items) positions are all relevant, so a perfect list scores 1.
    """
    users = _evaluated_users(lists, test_items)
    if not users:
        raise DataError("no users with test items to evaluate")
    discounts = 1.0 / np.log2(np.arange(2, n + 2))
    total = 0.0
    for u in users:
        rel = np.array([item in test_items[u] for item in list(lists[u])[:n]], dtype=float)
        dcg = float((rel * discounts[: len(rel)]).sum())
        ideal_len = min(n, len(test_items[u]))
        idcg = float(discounts[:ideal_len].sum())
        total += dcg / idcg
    return total / len(users)


def precision(lists: Mapping[int, Sequence[int]], test_items: Mapping[int, set], n: int) -> float:
    """Average fraction of the top-n that the user liked (hit count / n)."""
    users = _evaluated_users(lists, test_items)
    if not users:
        raise DataError("no users with test items to evaluate")
    total = sum(len(set(list(lists[u])[:n]) & test_items[u]) / n for u in users)
    return total / len(users)


def recall(lists: Mapping[int, Sequence[int]], test_items: Mapping[int, set], n: int) -> float:
    """Average fraction of the user's test items that made the top-n."""
    users = _evaluated_users(lists, test_items)
    if not users:
        raise DataError("no users with test items to evaluate")
    total = sum(
        len(set(list(lists[u])[:n]) & test_items[u]) / len(test_items[u]) for u in users
    )
    return total / len(users)


def _evaluated_users(lists, test_items) -> list[int]:
    return [u for u in lists if test_items.get(u)]


def item_pop_scores(train: RatingMatrix) -> np.ndarray:
    """Popularity scores: per-item training rating counts, shared by all users."""
    return np.asarray((train.matrix != 0).sum(axis=0), dtype=np.float64).ravel()


class Scorer:
    """Batch scorer interface used by evaluate()."""

    def score_users(self, user_indices: np.ndarray, train: RatingMatrix) -> np.ndarray:
        raise NotImplementedError


class ModelScorer(Scorer):
    """Scores users with a fitted model, batching users per cluster."""

    def __init__(self, model: GlimgModel):
        self.model = model

    def score_users(self, user_indices: np.ndarray, train: RatingMatrix) -> np.ndarray:
        out = np.zeros((len(user_indices), train.num_items))
        clusters = self.model.assignment.assignment[user_indices]
        for cm in self.model.clusters:
            local = np.flatnonzero(clusters == cm.cluster_id)
            if len(local) == 0:
                continue
            block = np.asarray(train.matrix[user_indices[local]].todense())
            out[local] = block @ cm.solve_operator
        return out


class ItemPopScorer(Scorer):
    """Non-personalized baseline: every user gets the popularity vector."""

    def __init__(self, train: RatingMatrix):
        self.scores = item_pop_scores(train)

    def score_users(self, user_indices: np.ndarray, train: RatingMatrix) -> np.ndarray:
        return np.tile(self.scores, (len(user_indices), 1))


class FunctionScorer(Scorer):
    """Adapter for a per-user scoring function (used by tests and oracles)."""

    def __init__(self, fn: Callable[[int, np.ndarray], np.ndarray]):
        self.fn = fn

    def score_users(self, user_indices: np.ndarray, train: RatingMatrix) -> np.ndarray:
        return np.vstack([self.fn(int(u), train.user_row(int(u))) for u in user_indices])


@dataclass
class EvalReport:
    """Metric values per list length, all in [0, 1]."""

    metrics: dict[int, dict[str, float]]
    num_users_evaluated: int
    num_users_skipped: int
    config: dict = field(default_factory=dict)

    def to_json(self, path: str | Path | None = None) -> str:
        payload = {
            "metrics": {str(n): vals for n, vals in sorted(self.metrics.items())},
            "num_users_evaluated": self.num_users_evaluated,
            "num_users_skipped": self.num_users_skipped,
            "config": self.config,
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n", encoding="utf-8")
        return text

    def to_table(self) -> str:
        """Plain-text table, metric values in percent."""
        lines = [f"{'Metric(%)':<14}" + "".join(f"{'@' + str(n):>10}" for n in sorted(self.metrics))]
        for name in ("ndcg", "hr", "precision", "recall"):
            row = f"{name.upper():<14}"
            for n in sorted(self.metrics):
                row += f"{100.0 * self.metrics[n][name]:>10.2f}"
            lines.append(row)
        lines.append(f"users evaluated: {self.num_users_evaluated} "
                     f"(skipped, empty test: {self.num_users_skipped})")
        return "\n".join(lines)


def evaluate(
    scorer: Scorer | GlimgModel,
    split: DatasetSplit,
    n_list: Sequence[int] = (10, 50),
    test: RatingMatrix | None = None,
    config: dict | None = None,
) -> EvalReport:
    """Generate top-N lists for every user with test items and aggregate all
    four metrics at each requested list length.

    ``test`` defaults to the split's test matrix; pass the validation matrix
    for model selection.
    """
    if isinstance(scorer, GlimgModel):
        scorer = ModelScorer(scorer)
    if not n_list:
        raise DataError("n_list must be non-empty")
    train = split.train
    target = test if test is not None else split.test
    if target.nnz == 0:
        raise DataError("test split is empty")
    n_max = max(n_list)

    test_items: dict[int, set] = {}
    skipped = 0
    eval_users = []
    for u in range(train.num_users):
        items = set(target.user_items(u).tolist())
        if items:
            eval_users.append(u)
            test_items[u] = items
        else:
            skipped += 1
    eval_users = np.asarray(eval_users, dtype=np.int64)

    lists: dict[int, np.ndarray] = {}
    for start in range(0, len(eval_users), _CHUNK):
        batch = eval_users[start : start + _CHUNK]
        scores = scorer.score_users(batch, train)
        for i, u in enumerate(batch):
            rated = np.zeros(train.num_items, dtype=bool)
            rated[train.user_items(int(u))] = True
            lists[int(u)] = top_n(scores[i], rated, n_max)

    metrics = {
        int(n): {
            "hr": hit_ratio(lists, test_items, n),
            "ndcg": ndcg(lists, test_items, n),
            "precision": precision(lists, test_items, n),
            "recall": recall(lists, test_items, n),
        }
        for n in n_list
    }
    return EvalReport(
        metrics=metrics,
        num_users_evaluated=len(eval_users),
        num_users_skipped=skipped,
        config=dict(config or {}),
    )
