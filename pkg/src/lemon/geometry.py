"""Distance functions, exact k-nearest-neighbor search, and text clustering.

All search is exhaustive (no approximate index); ties are broken by
ascending reference index so results are reproducible across runs and
thread counts.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import UsageError, ValidationError

METRICS = ("cosine", "euclidean", "discrete")

# queries are processed in fixed-size tiles; the tile size must not depend
# on the thread count or results could vary with parallelism
_QUERY_TILE = 256


@dataclass(frozen=True)
class NeighborList:
    """k neighbors of one query, ascending distance."""

    indices: np.ndarray
    distances: np.ndarray

    def __post_init__(self):
        if len(self.indices) != len(self.distances):
            raise ValidationError("neighbor indices/distances length mismatch")

    def __len__(self) -> int:
        return len(self.indices)

    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.indices, self.distances)]


def _as_f64(v) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(v, dtype=np.float64))


def _check_pair(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    u, v = _as_f64(u), _as_f64(v)
    if u.ndim != 1 or v.ndim != 1:
        raise ValidationError("distance arguments must be 1-D vectors")
    if u.shape[0] != v.shape[0]:
        raise ValidationError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    return u, v


def cosine_distance(u, v) -> float:
    """1 - cos(u, v); zero vectors are rejected."""
    u, v = _check_pair(u, v)
    nu = float(np.sqrt(np.sum(u * u)))
    nv = float(np.sqrt(np.sum(v * v)))
    if nu == 0.0 or nv == 0.0:
        raise ValidationError("cosine distance undefined for a zero vector")
    return 1.0 - float(np.dot(u, v)) / (nu * nv)


def euclidean_distance(u, v) -> float:
    """L2 norm of u - v on raw (unnormalized) vectors."""
    u, v = _check_pair(u, v)
    diff = u - v
    return float(np.sqrt(np.sum(diff * diff)))


def discrete_distance(a: int, b: int) -> float:
    """0 when the two class ids agree, 1 otherwise."""
    if a is None or b is None:
        raise ValidationError("discrete distance requires class ids on both sides")
    return 0.0 if int(a) == int(b) else 1.0


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Unit-normalize rows; rejects zero rows."""
    m = _as_f64(matrix)
    norms = np.sqrt(np.sum(m * m, axis=1))
    if (norms == 0.0).any():
        row = int(np.argmax(norms == 0.0))
        raise ValidationError(f"row {row} is all zeros (cosine distance undefined)")
    return m / norms[:, None]


def _exclude_vector(m: int, exclude: int | np.ndarray | None) -> np.ndarray:
    if exclude is None:
        return np.full(m, -1, dtype=np.int64)
    if np.isscalar(exclude) or isinstance(exclude, (int, np.integer)):
        return np.full(m, int(exclude), dtype=np.int64)
    arr = np.asarray(exclude, dtype=np.int64)
    if arr.shape != (m,):
        raise ValidationError(f"exclude vector must have one entry per query, got {arr.shape}")
    return np.ascontiguousarray(arr)


def knn_batch(
    reference: np.ndarray,
    queries: np.ndarray,
    k: int,
    metric: str = "cosine",
    exclude: int | np.ndarray | None = None,
    ref_classes: np.ndarray | None = None,
    query_classes: np.ndarray | None = None,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-k for a batch of queries.

    For ``cosine``/``euclidean`` the matrices are embedding rows; for
    ``discrete`` the class id arrays are compared instead and the matrices
    only determine row counts.  Returns (indices, distances), each (m, k).
    """
    if metric not in METRICS:
        raise UsageError(f"unknown metric {metric!r}")
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    ref = _as_f64(reference)
    q = _as_f64(queries)
    if ref.ndim != 2 or q.ndim != 2:
        raise ValidationError("reference and queries must be 2-D")
    m, n = q.shape[0], ref.shape[0]
    excl = _exclude_vector(m, exclude)
    if (excl >= n).any():
        raise ValidationError("exclude index out of range of the reference")

    pool = n - (1 if (excl >= 0).any() else 0)
    if k > pool:
        raise ValidationError(f"k={k} larger than available pool of {pool} reference rows")

    if metric == "discrete":
        if ref_classes is None or query_classes is None:
            raise ValidationError("discrete metric requires class ids for reference and queries")
        rc = np.asarray(ref_classes, dtype=np.int64)
        qc = np.asarray(query_classes, dtype=np.int64)
        dist = (rc[None, :] != qc[:, None]).astype(np.float64)
        for row in range(m):
            if excl[row] >= 0:
                dist[row, excl[row]] = np.inf
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        return order.astype(np.int64), np.take_along_axis(dist, order, axis=1)

    if q.shape[1] != ref.shape[1]:
        raise ValidationError(f"dimension mismatch: query dim {q.shape[1]} vs reference dim {ref.shape[1]}")

    if metric == "cosine":
        ref_in = normalize_rows(ref)
        q_in = normalize_rows(q)
        fn = kernels.topk_cosine
    else:
        ref_in, q_in = ref, q
        fn = kernels.topk_euclidean

    def run_tile(start: int) -> tuple[np.ndarray, np.ndarray]:
        stop = min(start + _QUERY_TILE, m)
        return fn(ref_in, q_in[start:stop], k, excl[start:stop])

    starts = list(range(0, m, _QUERY_TILE))
    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run_tile, starts))
    else:
        parts = [run_tile(s) for s in starts]
    idx = np.vstack([p[0] for p in parts]) if parts else np.empty((0, k), dtype=np.int64)
    dist = np.vstack([p[1] for p in parts]) if parts else np.empty((0, k), dtype=np.float64)
    return idx, dist


def knn_query(
    reference: np.ndarray,
    query: np.ndarray,
    k: int,
    metric: str = "cosine",
    exclude: int | None = None,
    ref_classes: np.ndarray | None = None,
    query_class: int | None = None,
) -> NeighborList:
    """Exact k nearest neighbors of one query vector."""
    q = _as_f64(query).reshape(1, -1)
    qc = None if query_class is None else np.array([query_class], dtype=np.int64)
    idx, dist = knn_batch(
        reference, q, k, metric=metric, exclude=exclude, ref_classes=ref_classes, query_classes=qc
    )
    return NeighborList(indices=idx[0], distances=dist[0])


def pairwise_cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise cosine distance between corresponding rows of a and b."""
    an = normalize_rows(a)
    bn = normalize_rows(b)
    return 1.0 - np.sum(an * bn, axis=1)


def cache_mm_distances(dataset: Dataset) -> np.ndarray:
    """Per-sample cosine distance between a row's image and text embeddings.

    This is always cosine, independent of the metric used for neighbor
    search, and requires both modalities to share an embedding space.
    """
    if dataset.image_embeddings.shape[1] != dataset.text_embeddings.shape[1]:
        raise ValidationError(
            "multimodal distance requires equal image/text dims, got "
            f"{dataset.image_embeddings.shape[1]} vs {dataset.text_embeddings.shape[1]}"
        )
    return pairwise_cosine_rows(dataset.image_embeddings, dataset.text_embeddings)


def _kmeans_fit(points: np.ndarray, num_clusters: int, seed: int, max_iter: int = 100):
    """Lloyd iterations with farthest-point seeding; deterministic per seed."""
    x = _as_f64(points)
    n = x.shape[0]
    if num_clusters < 1:
        raise UsageError(f"num_clusters must be >= 1, got {num_clusters}")
    if num_clusters > n:
        raise ValidationError(f"num_clusters={num_clusters} exceeds {n} rows")

    rng = np.random.default_rng(seed)
    centers = np.empty((num_clusters, x.shape[1]), dtype=np.float64)
    centers[0] = x[int(rng.integers(n))]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, num_clusters):
        centers[j] = x[int(np.argmax(d2))]  # argmax takes the lowest index on ties
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2_all = (
            np.sum(x * x, axis=1)[:, None]
            - 2.0 * x @ centers.T
            + np.sum(centers * centers, axis=1)[None, :]
        )
        new_labels = np.argmin(d2_all, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(num_clusters):
            members = labels == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            # empty cluster: keep the previous center
    return labels, centers


def kmeans_text_clusters(text_embeddings: np.ndarray, num_clusters: int, seed: int = 0) -> np.ndarray:
    """Cluster ids for each text row (standard Euclidean k-means on raw rows)."""
    labels, _ = _kmeans_fit(text_embeddings, num_clusters, seed)
    return labels


def kmeans_assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Nearest-centroid assignment for held-out rows."""
    x = _as_f64(points)
    c = _as_f64(centers)
    d2 = np.sum(x * x, axis=1)[:, None] - 2.0 * x @ c.T + np.sum(c * c, axis=1)[None, :]
    return np.argmin(d2, axis=1).astype(np.int64)


__all__ = [
    "NeighborList",
    "cosine_distance",
    "euclidean_distance",
    "discrete_distance",
    "normalize_rows",
    "knn_query",
    "knn_batch",
    "cache_mm_distances",
    "pairwise_cosine_rows",
    "kmeans_text_clusters",
    "kmeans_assign",
]
