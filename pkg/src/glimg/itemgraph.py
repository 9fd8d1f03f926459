"""Item-item correlation graphs from rating columns.

Edge weights are cosine similarity of item rating columns pushed through an
exponential kernel, exp(-sigma * (1 - cos)), which maps [-1, 1] into (0, 1].
Items whose column is all zero (never rated in the slice at hand) are
disconnected: their cosine is taken as 0 and all their edge weights as 0.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .dataset import RatingMatrix
from .errors import DataError, ModelFormatError

_DUMP_HEADER = struct.Struct("<q")  # 8-byte little-endian item count


def cosine_similarity(p_i: np.ndarray, p_j: np.ndarray) -> float:
    """Cosine of two item rating columns; 0 if either column is all zero."""
    p_i = np.asarray(p_i, dtype=np.float64)
    p_j = np.asarray(p_j, dtype=np.float64)
    if p_i.shape != p_j.shape:
        raise DataError(f"column length mismatch: {p_i.shape} vs {p_j.shape}")
    ni = np.linalg.norm(p_i)
    nj = np.linalg.norm(p_j)
    if ni == 0.0 or nj == 0.0:
        return 0.0
    return float(np.dot(p_i, p_j) / (ni * nj))


def kernel_weight(cos_val: float, sigma: float) -> float:
    """exp(-sigma * (1 - cos_val)); equals 1 at cos_val=1 or sigma=0."""
    if sigma < 0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    return float(np.exp(-sigma * (1.0 - cos_val)))


@dataclass(frozen=True)
class ItemCorrelationMatrix:
    """Symmetric n x n edge-weight matrix with zero diagonal, entries in [0, 1]."""

    weights: np.ndarray
    sigma: float

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def _column_matrix(source) -> sparse.csr_matrix | np.ndarray:
    if isinstance(source, RatingMatrix):
        return source.matrix
    return source


def build_item_graph(source, sigma: float) -> ItemCorrelationMatrix:
    """Build the full item graph for a rating matrix (or any m x n array).

    Unrated entries count as zeros in the columns. The result is exactly
    symmetric (upper triangle mirrored) with a zero diagonal.
    """
    if sigma < 0:
        raise DataError(f"sigma must be >= 0, got {sigma}")
    R = _column_matrix(source)
    n = R.shape[1]
    if sparse.issparse(R):
        gram = np.asarray((R.T @ R).todense(), dtype=np.float64)
    else:
        R = np.asarray(R, dtype=np.float64)
        gram = R.T @ R
    norms = np.sqrt(np.diag(gram).clip(min=0.0))
    nonzero = norms > 0.0
    denom = np.outer(norms, norms)
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(denom > 0.0, gram / denom, 0.0)
    np.clip(cos, -1.0, 1.0, out=cos)
    W = np.exp(-sigma * (1.0 - cos))
    W[~nonzero, :] = 0.0
    W[:, ~nonzero] = 0.0
    # mirror the upper triangle so W == W.T bit for bit
    W = np.triu(W, k=1)
    W = W + W.T
    return ItemCorrelationMatrix(W, sigma)


def degree_vector(W: np.ndarray) -> np.ndarray:
    """Row sums of a square non-negative weight matrix."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DataError(f"expected a square matrix, got shape {W.shape}")
    if np.any(W < 0):
        raise DataError("weight matrix has negative entries")
    return W.sum(axis=1)


def save_weights(graph: ItemCorrelationMatrix, path: str | Path) -> None:
    """Cache a weight matrix: 8-byte header with n, then row-major float64."""
    W = np.ascontiguousarray(graph.weights, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(W.shape[0]))
        fh.write(struct.pack("<d", graph.sigma))
        fh.write(W.tobytes())


def load_weights(path: str | Path) -> ItemCorrelationMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < _DUMP_HEADER.size + 8:
        raise ModelFormatError(f"{path}: truncated weight dump")
    (n,) = _DUMP_HEADER.unpack_from(raw, 0)
    (sigma,) = struct.unpack_from("<d", raw, _DUMP_HEADER.size)
    body = raw[_DUMP_HEADER.size + 8:]
    if n < 0 or len(body) != n * n * 8:
        raise ModelFormatError(f"{path}: expected {n}x{n} float64 body")
    W = np.frombuffer(body, dtype="<f8").reshape(n, n).copy()
    return ItemCorrelationMatrix(W, sigma)
