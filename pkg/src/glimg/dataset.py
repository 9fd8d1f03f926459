"""Rating data: loading, density filtering, and train/validation/test splits.

Supported input formats are comma/tab separated ``user,item,rating[,timestamp]``
files and the MovieLens ``.dat`` layout with ``::`` separators. Splits are
per-user random: each user's ratings are shuffled with a seeded generator and
partitioned by the configured ratios, so every user keeps training history and
the whole split is reproducible from (matrix, ratios, seed).
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import sparse

from .errors import DataError, ParseError

_DELIMITERS = {"csv": ",", "tsv": "\t", "movielens-dat": "::"}

SPLIT_NAMES = ("train", "validation", "test")


class RatingRecord(NamedTuple):
    user_id: str
    item_id: str
    rating: float
    timestamp: int | None = None


def load_ratings(path: str | Path, format: str = "csv") -> list[RatingRecord]:
    """Read one rating record per line; duplicate (user, item) pairs keep the
    last occurrence (log-replay semantics) at the first occurrence's position.
    """
    if format not in _DELIMITERS:
        raise DataError(f"unknown format {format!r}; expected one of {sorted(_DELIMITERS)}")
    sep = _DELIMITERS[format]
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8", errors="replace").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    by_pair: dict[tuple[str, str], RatingRecord] = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(sep)]
        if len(parts) < 3:
            raise ParseError(f"{path}:{lineno}: expected at least 3 fields, got {len(parts)}", lineno)
        user, item, rating_s = parts[0], parts[1], parts[2]
        try:
            rating = float(rating_s)
        except ValueError:
            # a non-numeric rating on the first line is treated as a header row
            if lineno == 1 and rating_s.lower() in {"rating", "score", "stars"}:
                continue
            raise ParseError(f"{path}:{lineno}: bad rating value {rating_s!r}", lineno) from None
        timestamp: int | None = None
        if len(parts) >= 4 and parts[3]:
            try:
                timestamp = int(float(parts[3]))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad timestamp {parts[3]!r}", lineno) from None
        record = RatingRecord(user, item, rating, timestamp)
        by_pair[(user, item)] = record  # last occurrence wins, insertion order kept
    return list(by_pair.values())


def filter_min_ratings(records: Sequence[RatingRecord], threshold: int) -> list[RatingRecord]:
    """Drop users and items with fewer than ``threshold`` ratings, alternating
    until a fixed point: every surviving user and item has >= threshold ratings
    among the surviving records.
    """
    if threshold < 0:
        raise DataError("threshold must be >= 0")
    kept = list(records)
    if threshold == 0:
        return kept
    while True:
        user_counts = Counter(r.user_id for r in kept)
        item_counts = Counter(r.item_id for r in kept)
        survivors = [
            r for r in kept
            if user_counts[r.user_id] >= threshold and item_counts[r.item_id] >= threshold
        ]
        if len(survivors) == len(kept):
            return survivors
        kept = survivors


def to_implicit(records: Iterable[RatingRecord]) -> list[RatingRecord]:
    """Mark every rating as 1: each entry only says the user rated the item."""
    return [r._replace(rating=1.0) for r in records]


@dataclass(frozen=True)
class RatingMatrix:
    """Sparse m x n rating matrix with bidirectional string-id maps.

    Indices are dense, 0-based, assigned in first-occurrence order of the
    source records. Immutable after construction; safe to share.
    """

    matrix: sparse.csr_matrix
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    @property
    def num_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_items(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def user_index(self, user_id: str) -> int | None:
        return self._user_lookup.get(user_id)

    def item_index(self, item_id: str) -> int | None:
        return self._item_lookup.get(item_id)

    def __post_init__(self):
        object.__setattr__(self, "_user_lookup", {u: i for i, u in enumerate(self.user_ids)})
        object.__setattr__(self, "_item_lookup", {p: i for i, p in enumerate(self.item_ids)})

    def user_row(self, user_index: int) -> np.ndarray:
        return np.asarray(self.matrix[user_index].todense()).ravel()

    def user_items(self, user_index: int) -> np.ndarray:
        """Item indices rated by a user."""
        start, end = self.matrix.indptr[user_index], self.matrix.indptr[user_index + 1]
        return self.matrix.indices[start:end]

    def iter_entries(self) -> Iterable[tuple[int, int, float]]:
        coo = self.matrix.tocoo()
        yield from zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())


def build_matrix(records: Sequence[RatingRecord]) -> RatingMatrix:
    """Assemble records into a RatingMatrix with first-occurrence index maps."""
    if not records:
        raise DataError("cannot build a rating matrix from zero records")
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    rows, cols, vals = [], [], []
    cell: dict[tuple[int, int], float] = {}
    for r in records:
        u = user_index.setdefault(r.user_id, len(user_index))
        p = item_index.setdefault(r.item_id, len(item_index))
        cell[(u, p)] = r.rating  # defensive last-wins if caller skipped load dedup
    for (u, p), v in cell.items():
        rows.append(u)
        cols.append(p)
        vals.append(v)
    m, n = len(user_index), len(item_index)
    mat = sparse.csr_matrix(
        (np.asarray(vals, dtype=np.float64), (rows, cols)), shape=(m, n)
    )
    mat.sort_indices()
    return RatingMatrix(mat, tuple(user_index), tuple(item_index))


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train/validation/test matrices sharing one set of index maps."""

    train: RatingMatrix
    validation: RatingMatrix
    test: RatingMatrix
    seed: int
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __iter__(self):
        return iter((self.train, self.validation, self.test))


def split_dataset(
    matrix: RatingMatrix,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> DatasetSplit:
    """Per-user stratified random split.

    Each user's ratings are shuffled with the seeded generator and cut by the
    ratios (validation and test sizes round down, remainder goes to train).
    Users with fewer than 3 ratings keep everything in train so no training
    row is empty.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must be three positives summing to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    csr = matrix.matrix
    m, n = csr.shape
    buckets = {name: ([], [], []) for name in SPLIT_NAMES}
    for u in range(m):
        start, end = csr.indptr[u], csr.indptr[u + 1]
        items = csr.indices[start:end]
        vals = csr.data[start:end]
        cnt = len(items)
        order = rng.permutation(cnt)
        if cnt < 3:
            parts = {"train": order, "validation": order[:0], "test": order[:0]}
        else:
            n_val = int(ratios[1] * cnt)
            n_test = int(ratios[2] * cnt)
            n_train = cnt - n_val - n_test
            parts = {
                "train": order[:n_train],
                "validation": order[n_train:n_train + n_val],
                "test": order[n_train + n_val:],
            }
        for name, idx in parts.items():
            rows, cols, data = buckets[name]
            rows.extend([u] * len(idx))
            cols.extend(items[idx].tolist())
            data.extend(vals[idx].tolist())

    def _mk(name: str) -> RatingMatrix:
        rows, cols, data = buckets[name]
        mat = sparse.csr_matrix(
            (np.asarray(data, dtype=np.float64), (rows, cols)), shape=(m, n)
        )
        mat.sort_indices()
        return RatingMatrix(mat, matrix.user_ids, matrix.item_ids)

    return DatasetSplit(_mk("train"), _mk("validation"), _mk("test"), seed, tuple(ratios))


def write_split(
    split: DatasetSplit,
    out_dir: str | Path,
    threshold: int | None = None,
) -> None:
    """Write train/validation/test CSVs plus a JSON sidecar with the seed,
    ratios, filter threshold, and index maps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in zip(SPLIT_NAMES, split):
        with open(out / f"{name}.csv", "w", encoding="utf-8") as fh:
            for u, p, v in part.iter_entries():
                fh.write(f"{part.user_ids[u]},{part.item_ids[p]},{v:.17g}\n")
    sidecar = {
        "seed": split.seed,
        "ratios": list(split.ratios),
        "threshold": threshold,
        "user_ids": list(split.train.user_ids),
        "item_ids": list(split.train.item_ids),
        "counts": {name: part.nnz for name, part in zip(SPLIT_NAMES, split)},
    }
    with open(out / "split.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def read_split(in_dir: str | Path) -> DatasetSplit:
    """Read back a split written by write_split, preserving index maps."""
    in_dir = Path(in_dir)
    sidecar_path = in_dir / "split.json"
    if not sidecar_path.exists():
        raise DataError(f"no split manifest at {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    user_ids = tuple(sidecar["user_ids"])
    item_ids = tuple(sidecar["item_ids"])
    u_lookup = {u: i for i, u in enumerate(user_ids)}
    p_lookup = {p: i for i, p in enumerate(item_ids)}
    m, n = len(user_ids), len(item_ids)

    def _read(name: str) -> RatingMatrix:
        rows, cols, data = [], [], []
        for record in load_ratings(in_dir / f"{name}.csv", "csv"):
            rows.append(u_lookup[record.user_id])
            cols.append(p_lookup[record.item_id])
            data.append(record.rating)
        mat = sparse.csr_matrix(
            (np.asarray(data, dtype=np.float64), (rows, cols)), shape=(m, n)
        )
        mat.sort_indices()
        return RatingMatrix(mat, user_ids, item_ids)

    return DatasetSplit(
        _read("train"),
        _read("validation"),
        _read("test"),
        seed=sidecar["seed"],
        ratios=tuple(sidecar["ratios"]),
    )
