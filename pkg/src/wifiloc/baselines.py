"""Classical fingerprinting references: nearest scan, kNN, weighted kNN.

All three classify by Euclidean distance over the same preprocessed
vectors the network consumes. Search is exhaustive; at ~20k references
of 520 features an index structure buys nothing. Tie-breaking is
deterministic everywhere: neighbor-boundary ties go to the lower
reference index, vote ties to the smaller aggregate distance and then
the lower class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K

#: Softening constant in the inverse-distance weight 1/(d + EPS_WEIGHT).
EPS_WEIGHT = 1e-6


@dataclass(frozen=True)
class ReferenceSet:
    """Preprocessed reference fingerprints with class labels."""

    vectors: np.ndarray  # (n, d) float64
    labels: np.ndarray   # (n,) int64 class indices

    def __post_init__(self):
        object.__setattr__(
            self, "vectors", np.ascontiguousarray(self.vectors, dtype=np.float64)
        )
        object.__setattr__(
            self, "labels", np.ascontiguousarray(self.labels, dtype=np.int64)
        )
        if self.vectors.ndim != 2:
            raise ValueError("reference vectors must be a matrix (n, d)")
        if self.labels.shape != (self.vectors.shape[0],):
            raise ValueError("one label per reference vector required")
        if self.vectors.shape[0] < 1:
            raise ValueError("reference set must be non-empty")

    def __len__(self) -> int:
        return self.vectors.shape[0]


def _query_dists(ref: ReferenceSet, query) -> np.ndarray:
    q = np.ascontiguousarray(query, dtype=np.float64)
    if q.shape != (ref.vectors.shape[1],):
        raise ValueError(
            f"query arity {q.shape} does not match reference arity {ref.vectors.shape[1]}"
        )
    return np.sqrt(K.sq_dists(q[None, :], ref.vectors)[0])


def nearest_scan(ref: ReferenceSet, query) -> int:
    """Label of the closest reference vector; earlier index wins ties."""
    d = _query_dists(ref, query)
    return int(ref.labels[int(np.argmin(d))])


def _vote(dists, labels, k: int, weighted: bool) -> int:
    # stable sort: equal distances keep reference order
    order = np.argsort(dists, kind="stable")[:k]
    scores = {}
    for idx in order:
        c = int(labels[idx])
        d = float(dists[idx])
        score = 1.0 / (d + EPS_WEIGHT) if weighted else 1.0
        total, agg = scores.get(c, (0.0, 0.0))
        scores[c] = (total + score, agg + d)
    # max score, then min aggregate distance, then min class index
    return min(scores, key=lambda c: (-scores[c][0], scores[c][1], c))


def knn_predict(ref: ReferenceSet, query, k: int) -> int:
    """Majority class among the k nearest references."""
    if not 1 <= k <= len(ref):
        raise ValueError(f"k must lie in [1, {len(ref)}], got {k}")
    return _vote(_query_dists(ref, query), ref.labels, k, weighted=False)


def wknn_predict(ref: ReferenceSet, query, k: int) -> int:
    """Class with the largest inverse-distance weight over the k nearest."""
    if not 1 <= k <= len(ref):
        raise ValueError(f"k must lie in [1, {len(ref)}], got {k}")
    return _vote(_query_dists(ref, query), ref.labels, k, weighted=True)


def classify_batch(ref: ReferenceSet, queries, method: str, k: int = 1,
                   chunk: int = 256) -> np.ndarray:
    """Vectorized prediction for many queries (distance matrix in chunks)."""
    if method not in ("nearest", "knn", "wknn"):
        raise ValueError(f"unknown baseline method {method!r}")
    q = np.ascontiguousarray(queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != ref.vectors.shape[1]:
        raise ValueError("query matrix does not match the reference arity")
    if method != "nearest" and not 1 <= k <= len(ref):
        raise ValueError(f"k must lie in [1, {len(ref)}], got {k}")

    out = np.empty(q.shape[0], dtype=np.int64)
    for start in range(0, q.shape[0], chunk):
        block = q[start:start + chunk]
        dists = np.sqrt(K.sq_dists(block, ref.vectors))
        if method == "nearest":
            out[start:start + block.shape[0]] = ref.labels[np.argmin(dists, axis=1)]
        else:
            for i in range(block.shape[0]):
                out[start + i] = _vote(dists[i], ref.labels, k, method == "wknn")
    return out
