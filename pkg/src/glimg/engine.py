"""Core scoring engine: combined global/local graphs and the closed-form solve.

Offline, for each user cluster the global item graph and the cluster's local
graph are blended (g * global + (1-g) * local), symmetrically normalized into
S by the blended degrees D, and the operator (I + alpha * (gamma * D - S))^-1
is materialized once. Online, a user's preference scores are a single
row-times-matrix product against their cluster's operator; the beta scale
factor is dropped since it does not change rankings.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .clustering import ClusterAssignment, kmeans_cluster, nearest_cluster
from .dataset import RatingMatrix
from .errors import DataError, ModelFormatError, NumericalError
from .itemgraph import ItemCorrelationMatrix, build_item_graph, degree_vector

MODEL_MAGIC = b"GLIMGM1\n"
MODEL_VERSION = 1


@dataclass(frozen=True)
class HyperParams:
    """Model hyperparameters.

    mu weighs how strongly predictions stick to observed ratings, gamma weighs
    the degree-based suppression of overly connected items, g balances the
    global graph (g=1) against the per-cluster local graphs (g=0), sigma is
    the similarity kernel width, and k the number of user clusters.
    """

    sigma: float = 0.5
    mu: float = 1.0
    gamma: float = 1.0
    g: float = 0.5
    k: int = 5
    seed: int = 0
    max_iter: int = 100
    tol: float = 1e-6

    def __post_init__(self):
        if self.sigma < 0:
            raise DataError("sigma must be >= 0")
        if self.mu < 0:
            raise DataError("mu must be >= 0")
        if self.gamma < 0:
            raise DataError("gamma must be >= 0")
        if not 0.0 <= self.g <= 1.0:
            raise DataError("g must lie in [0, 1]")
        if self.k < 1:
            raise DataError("k must be >= 1")

    @property
    def alpha(self) -> float:
        return 1.0 / (1.0 + self.mu)

    @property
    def beta(self) -> float:
        return self.mu / (1.0 + self.mu)

    def to_dict(self) -> dict:
        return {
            "sigma": self.sigma, "mu": self.mu, "gamma": self.gamma,
            "g": self.g, "k": self.k, "seed": self.seed,
            "max_iter": self.max_iter, "tol": self.tol,
        }


@dataclass(frozen=True)
class ClusterModel:
    """One cluster's normalized combined graph and its precomputed solve."""

    cluster_id: int
    combined: np.ndarray      # S, symmetric n x n
    degrees: np.ndarray       # D of the blended weight matrix, length n
    solve_operator: np.ndarray  # (I + alpha * (gamma * diag(D) - S))^-1


@dataclass(frozen=True)
class PreferenceVector:
    user_index: int
    scores: np.ndarray


@dataclass(frozen=True)
class GlimgModel:
    params: HyperParams
    clusters: tuple[ClusterModel, ...]
    assignment: ClusterAssignment
    global_graph: ItemCorrelationMatrix
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    @property
    def num_items(self) -> int:
        return self.global_graph.size

    def cluster_of(self, user_index: int) -> int:
        return int(self.assignment.assignment[user_index])


def build_local_graphs(
    train: RatingMatrix, assignment: ClusterAssignment, sigma: float
) -> list[ItemCorrelationMatrix]:
    """One item graph per cluster, built from that cluster's rating rows only."""
    if len(assignment.assignment) != train.num_users:
        raise DataError("assignment does not cover the training matrix's users")
    graphs = []
    for c in range(assignment.num_clusters):
        members = assignment.members(c)
        graphs.append(build_item_graph(train.matrix[members], sigma))
    return graphs


def combine_normalize(
    w_global: np.ndarray, w_local: np.ndarray, g: float
) -> tuple[np.ndarray, np.ndarray]:
    """Blend the two weight matrices and symmetrically normalize.

    M = g * W_global + (1-g) * W_local; D = row sums of M;
    S_ij = M_ij / sqrt(D_i * D_j), with zero rows/columns for isolated items.
    """
    if w_global.shape != w_local.shape:
        raise DataError("global/local weight shapes differ")
    if not 0.0 <= g <= 1.0:
        raise DataError("g must lie in [0, 1]")
    M = g * w_global + (1.0 - g) * w_local
    D = degree_vector(M)
    inv_sqrt = np.zeros_like(D)
    pos = D > 0
    inv_sqrt[pos] = 1.0 / np.sqrt(D[pos])
    S = M * np.outer(inv_sqrt, inv_sqrt)
    return S, D


def build_solve_operator(
    S: np.ndarray, D: np.ndarray, alpha: float, gamma: float,
    cluster_id: int | None = None,
) -> np.ndarray:
    """Invert I + alpha * (gamma * diag(D) - S) once for online scoring."""
    n = S.shape[0]
    A = -alpha * S
    idx = np.arange(n)
    A[idx, idx] += 1.0 + alpha * gamma * D
    try:
        op = scipy.linalg.solve(A, np.eye(n))
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"singular solve operator (cluster {cluster_id}): {exc}") from exc
    if not np.all(np.isfinite(op)):
        raise NumericalError(f"non-finite solve operator (cluster {cluster_id})")
    return op


def fit(train: RatingMatrix, params: HyperParams) -> GlimgModel:
    """Offline training: global graph, user clustering, per-cluster operators."""
    if train.nnz == 0:
        raise DataError("training matrix is empty")
    global_graph = build_item_graph(train, params.sigma)
    assignment = kmeans_cluster(
        train.matrix, params.k, seed=params.seed,
        max_iter=params.max_iter, tol=params.tol,
    )
    local_graphs = build_local_graphs(train, assignment, params.sigma)
    clusters = []
    for c, local in enumerate(local_graphs):
        S, D = combine_normalize(global_graph.weights, local.weights, params.g)
        op = build_solve_operator(S, D, params.alpha, params.gamma, cluster_id=c)
        clusters.append(ClusterModel(c, S, D, op))
    return GlimgModel(
        params=params,
        clusters=tuple(clusters),
        assignment=assignment,
        global_graph=global_graph,
        user_ids=train.user_ids,
        item_ids=train.item_ids,
    )


def predict_user(model: GlimgModel, rating_row: np.ndarray, user_index: int) -> PreferenceVector:
    """Scores for one known user: their training row times the cluster operator."""
    c = model.cluster_of(user_index)
    scores = np.asarray(rating_row, dtype=np.float64) @ model.clusters[c].solve_operator
    return PreferenceVector(user_index, scores)


def predict_row(model: GlimgModel, rating_row: np.ndarray) -> np.ndarray:
    """Scores for an arbitrary rating row (cold-start path): route the row to
    the cluster with the nearest centroid. An all-zero row scores all zeros."""
    row = np.asarray(rating_row, dtype=np.float64)
    c = nearest_cluster(row, model.assignment.centroids)
    return row @ model.clusters[c].solve_operator


def predict_all(model: GlimgModel, train: RatingMatrix) -> np.ndarray:
    """Full m x n score matrix, computed cluster by cluster."""
    m, n = train.num_users, train.num_items
    scores = np.zeros((m, n))
    for cm in model.clusters:
        members = model.assignment.members(cm.cluster_id)
        if len(members) == 0:
            continue
        block = np.asarray(train.matrix[members].todense())
        scores[members] = block @ cm.solve_operator
    return scores


def stationarity_residual(model: GlimgModel, train: RatingMatrix, cluster_id: int) -> float:
    """Max-abs residual of the optimality condition the solve must satisfy,
    with the beta scale reinstated: for Rt = beta * R * op,
    Rt - Rt S + mu (Rt - R) + gamma Rt diag(D) should vanish."""
    p = model.params
    cm = model.clusters[cluster_id]
    members = model.assignment.members(cluster_id)
    R = np.asarray(train.matrix[members].todense())
    Rt = p.beta * (R @ cm.solve_operator)
    residual = Rt - Rt @ cm.combined + p.mu * (Rt - R) + p.gamma * Rt * cm.degrees[None, :]
    if residual.size == 0:
        return 0.0
    return float(np.max(np.abs(residual)))


def save_model(model: GlimgModel, path: str | Path) -> None:
    """Versioned binary container: magic, version, JSON header, then dense
    float64 little-endian blocks (centroids, global weights, per-cluster
    S / D / operator). Round-trips bit for bit."""
    n = model.num_items
    header = {
        "params": model.params.to_dict(),
        "user_ids": list(model.user_ids),
        "item_ids": list(model.item_ids),
        "assignment": model.assignment.assignment.astype(int).tolist(),
        "assignment_seed": model.assignment.seed,
        "iterations_run": model.assignment.iterations_run,
        "num_clusters": model.assignment.num_clusters,
        "num_items": n,
        "global_sigma": model.global_graph.sigma,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)

        def block(arr: np.ndarray):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

        block(model.assignment.centroids)
        block(model.global_graph.weights)
        for cm in model.clusters:
            block(cm.combined)
            block(cm.degrees)
            block(cm.solve_operator)


def load_model(path: str | Path) -> GlimgModel:
    raw = Path(path).read_bytes()
    if len(raw) < len(MODEL_MAGIC) + 12:
        raise ModelFormatError(f"{path}: file too short to be a model")
    if raw[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFormatError(f"{path}: bad magic header")
    offset = len(MODEL_MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if version != MODEL_VERSION:
        raise ModelFormatError(f"{path}: unsupported model version {version}")
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + header_len > len(raw):
        raise ModelFormatError(f"{path}: truncated header")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header: {exc}") from exc
    offset += header_len

    n = header["num_items"]
    k = header["num_clusters"]
    m = len(header["user_ids"])

    def block(shape: tuple[int, ...]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape))
        end = offset + count * 8
        if end > len(raw):
            raise ModelFormatError(f"{path}: truncated matrix block")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset = end
        return arr

    centroids = block((k, n))
    global_w = block((n, n))
    clusters = []
    for c in range(k):
        S = block((n, n))
        D = block((n,))
        op = block((n, n))
        clusters.append(ClusterModel(c, S, D, op))
    if offset != len(raw):
        raise ModelFormatError(f"{path}: trailing bytes after model blocks")

    params = HyperParams(**header["params"])
    assignment = ClusterAssignment(
        num_clusters=k,
        assignment=np.asarray(header["assignment"], dtype=np.int64),
        centroids=centroids,
        seed=header["assignment_seed"],
        iterations_run=header["iterations_run"],
    )
    if len(assignment.assignment) != m:
        raise ModelFormatError(f"{path}: assignment length mismatch")
    return GlimgModel(
        params=params,
        clusters=tuple(clusters),
        assignment=assignment,
        global_graph=ItemCorrelationMatrix(global_w, header["global_sigma"]),
        user_ids=tuple(header["user_ids"]),
        item_ids=tuple(header["item_ids"]),
    )
