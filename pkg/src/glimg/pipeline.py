"""End-to-end runs shared by the CLI and the HTTP service.

Each step reads and writes plain artifacts in an output directory: split CSVs
plus manifest, a binary model file, evaluation reports (JSON and text table),
a sweep CSV, and a timing log. Every step is deterministic given its config.
"""

from __future__ import annotations

import csv
import itertools
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import dataset as ds
from .engine import GlimgModel, HyperParams, fit, load_model, predict_user, save_model
from .errors import DataError
from .evaluation import EvalReport, ItemPopScorer, evaluate, item_pop_scores, top_n

SWEEPABLE = ("sigma", "mu", "gamma", "g", "k")


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs; echoed verbatim into every output artifact."""

    data_path: str | None = None
    data_format: str = "csv"
    min_ratings: int = 30
    implicit: bool = False
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    split_seed: int = 0
    params: HyperParams = field(default_factory=HyperParams)
    n_list: tuple[int, ...] = (10, 50)
    out_dir: str = "runs/default"

    def to_dict(self) -> dict:
        return {
            "data_path": self.data_path,
            "data_format": self.data_format,
            "min_ratings": self.min_ratings,
            "implicit": self.implicit,
            "ratios": list(self.ratios),
            "split_seed": self.split_seed,
            "params": self.params.to_dict(),
            "n_list": list(self.n_list),
            "out_dir": self.out_dir,
        }


def prepare(config: RunConfig) -> ds.DatasetSplit:
    """Load -> filter -> optional implicit transform -> split -> write manifests."""
    if not config.data_path:
        raise DataError("no input data path configured")
    records = ds.load_ratings(config.data_path, config.data_format)
    records = ds.filter_min_ratings(records, config.min_ratings)
    if config.implicit:
        records = ds.to_implicit(records)
    if not records:
        raise DataError("no ratings survive the density filter")
    matrix = ds.build_matrix(records)
    split = ds.split_dataset(matrix, config.ratios, config.split_seed)
    ds.write_split(split, config.out_dir, threshold=config.min_ratings)
    return split


def train(
    config: RunConfig,
    split: ds.DatasetSplit | None = None,
    model_path: str | Path | None = None,
) -> tuple[Path, dict]:
    """Fit the model on the prepared train split and persist it.

    Returns the model path and a per-phase wall-clock timing dict, which is
    also appended to ``timing.json`` in the output directory.
    """
    out = Path(config.out_dir)
    if split is None:
        split = ds.read_split(out)
    t0 = time.perf_counter()
    model = fit(split.train, config.params)
    fit_seconds = time.perf_counter() - t0
    path = Path(model_path) if model_path else out / "model.bin"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    timing = {
        "phase_seconds": {"fit": fit_seconds},
        "num_users": split.train.num_users,
        "num_items": split.train.num_items,
        "config": config.to_dict(),
    }
    with open(out / "timing.json", "w", encoding="utf-8") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
    return path, timing


def evaluate_model(
    model: GlimgModel | str | Path,
    split: ds.DatasetSplit | str | Path,
    n_list: Sequence[int] = (10, 50),
    out_dir: str | Path | None = None,
    use_validation: bool = False,
) -> EvalReport:
    """Evaluate a fitted model (or a model file) against a split (or split dir),
    writing the JSON report and text table if an output directory is given."""
    if not isinstance(model, GlimgModel):
        model = load_model(model)
    if not isinstance(split, ds.DatasetSplit):
        split = ds.read_split(split)
    target = split.validation if use_validation else split.test
    report = evaluate(model, split, n_list, test=target,
                      config={"params": model.params.to_dict(), "n_list": list(n_list)})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        suffix = "validation" if use_validation else "test"
        report.to_json(out / f"eval_{suffix}.json")
        (out / f"eval_{suffix}.txt").write_text(report.to_table() + "\n", encoding="utf-8")
    return report


@dataclass
class Recommendation:
    user_id: str
    items: list[tuple[str, float]]
    latency_ms: float
    fallback: bool


def recommend(
    model: GlimgModel | str | Path,
    split: ds.DatasetSplit | str | Path,
    user_id: str,
    n: int = 10,
) -> Recommendation:
    """Top-n items for one user; unknown users fall back to popularity."""
    if not isinstance(model, GlimgModel):
        model = load_model(model)
    if not isinstance(split, ds.DatasetSplit):
        split = ds.read_split(split)
    train = split.train
    u = train.user_index(user_id)
    t0 = time.perf_counter()
    if u is None:
        scores = item_pop_scores(train)
        rated = np.zeros(train.num_items, dtype=bool)
        fallback = True
    else:
        row = train.user_row(u)
        scores = predict_user(model, row, u).scores
        rated = row != 0
        fallback = False
    items = top_n(scores, rated, n)
    latency_ms = (time.perf_counter() - t0) * 1000.0
    return Recommendation(
        user_id=user_id,
        items=[(train.item_ids[i], float(scores[i])) for i in items],
        latency_ms=latency_ms,
        fallback=fallback,
    )


def _parse_grid(spec: dict[str, Sequence[float]]) -> list[dict]:
    for key in spec:
        if key not in SWEEPABLE:
            raise DataError(f"cannot sweep {key!r}; choose from {SWEEPABLE}")
    names = list(spec)
    points = []
    for combo in itertools.product(*(spec[name] for name in names)):
        points.append(dict(zip(names, combo)))
    return points


def sweep(
    config: RunConfig,
    grid: dict[str, Sequence[float]],
    split: ds.DatasetSplit | None = None,
) -> tuple[list[dict], dict]:
    """Grid sweep: fit each point, select by validation NDCG@10, report test.

    Writes one CSV row per grid point to ``sweep.csv`` and returns
    (rows, best_row). Global graphs and clusterings are cached across points
    that share sigma / (k, seed).
    """
    points = _parse_grid(grid)
    if not points:
        raise DataError("sweep grid is empty")
    out = Path(config.out_dir)
    if split is None:
        split = ds.read_split(out)
    select_n = 10 if 10 in config.n_list else config.n_list[0]

    rows = []
    for point in points:
        params = replace(config.params, **{k: (int(v) if k == "k" else float(v)) for k, v in point.items()})
        t0 = time.perf_counter()
        model = fit(split.train, params)
        fit_seconds = time.perf_counter() - t0
        val = evaluate(model, split, [select_n], test=split.validation)
        test = evaluate(model, split, config.n_list, test=split.test)
        row = {**{k: params.to_dict()[k] for k in SWEEPABLE},
               "fit_seconds": fit_seconds,
               f"val_ndcg@{select_n}": val.metrics[select_n]["ndcg"]}
        for n in config.n_list:
            for metric in ("ndcg", "hr", "precision", "recall"):
                row[f"test_{metric}@{n}"] = test.metrics[n][metric]
        rows.append(row)

    best = max(rows, key=lambda r: r[f"val_ndcg@{select_n}"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    return rows, best
