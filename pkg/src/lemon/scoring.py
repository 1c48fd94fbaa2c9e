"""Mislabel scores: the multimodal-neighbor score and the training-free baselines.

The main score for a query pair (x, y) against a reference collection is

    s = d_mm(x, y) + beta * s_n + gamma * s_m

where d_mm is the cosine distance between the pair's own embeddings, s_n
averages text-side distances to the captions of x's nearest image
neighbors, and s_m symmetrically averages image-side distances to the
images of y's nearest text neighbors.  Each neighbor is down-weighted by
exp(-tau1 * proximity) and exp(-tau2 * neighbor_self_distance).

Baselines: ``clip-sim`` (d_mm alone), ``deep-knn`` (share of image
neighbors with a disagreeing discrete label), ``discrepancy`` (mean image
distance to second-degree text neighbors).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, ScoreBreakdown, ScoreRow, ScoreTable
from .errors import UsageError, ValidationError
from .geometry import (
    kmeans_assign,
    _kmeans_fit,
    knn_batch,
    normalize_rows,
    pairwise_cosine_rows,
)

METHODS = ("lemon", "clip-sim", "deep-knn", "discrepancy")

# f64 exp overflows just past 709; the tuner searches unbounded taus
_EXP_CLIP = 700.0


def _guarded_exp(x: np.ndarray) -> np.ndarray:
    return np.exp(np.clip(x, -_EXP_CLIP, _EXP_CLIP))


@dataclass(frozen=True)
class LemonParams:
    """All hyperparameters of the neighbor score.

    Signs of beta/gamma/taus are unconstrained: the unbounded tuner may
    propose negative values and they must be representable.
    """

    k: int = 30
    beta: float = 5.0
    gamma: float = 5.0
    tau1_n: float = 0.1
    tau2_n: float = 5.0
    tau1_m: float = 0.1
    tau2_m: float = 5.0
    dX_metric: str = "cosine"
    dY_metric: str = "cosine"

    def validate(self) -> None:
        if self.k < 1:
            raise UsageError(f"k must be >= 1, got {self.k}")
        if self.dX_metric not in ("cosine", "euclidean"):
            raise UsageError(f"dX_metric must be cosine or euclidean, got {self.dX_metric!r}")
        if self.dY_metric not in ("cosine", "euclidean", "discrete"):
            raise UsageError(f"bad dY_metric {self.dY_metric!r}")
        for name in ("beta", "gamma", "tau1_n", "tau2_n", "tau1_m", "tau2_m"):
            if not np.isfinite(getattr(self, name)):
                raise UsageError(f"{name} must be finite")

    def as_tuple(self) -> tuple:
        """Deterministic ordering key used for tie-breaking in searches."""
        return (
            self.k,
            self.dX_metric,
            self.dY_metric,
            self.beta,
            self.gamma,
            self.tau1_n,
            self.tau2_n,
            self.tau1_m,
            self.tau2_m,
        )

    def to_json_obj(self) -> dict:
        return {
            "k": self.k,
            "beta": self.beta,
            "gamma": self.gamma,
            "tau1_n": self.tau1_n,
            "tau2_n": self.tau2_n,
            "tau1_m": self.tau1_m,
            "tau2_m": self.tau2_m,
            "dX_metric": self.dX_metric,
            "dY_metric": self.dY_metric,
        }

    @staticmethod
    def from_json_obj(obj: dict) -> "LemonParams":
        known = {f for f in LemonParams.__dataclass_fields__}
        bad = set(obj) - known
        if bad:
            raise UsageError(f"unknown parameter fields: {sorted(bad)}")
        params = LemonParams(**obj)
        params.validate()
        return params


@dataclass
class Reference:
    """Precomputed arrays for one reference split of a dataset."""

    positions: np.ndarray  # global dataset indices of the reference rows
    img: np.ndarray  # float64 (n_ref, d_img)
    txt: np.ndarray
    class_ids: np.ndarray | None
    _mm: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return int(self.img.shape[0])

    @property
    def mm(self) -> np.ndarray:
        """Per-row image/text cosine distance, computed once on demand."""
        if self._mm is None:
            if self.img.shape[1] != self.txt.shape[1]:
                raise ValidationError(
                    "multimodal distance requires equal image/text dims, got "
                    f"{self.img.shape[1]} vs {self.txt.shape[1]}"
                )
            self._mm = pairwise_cosine_rows(self.img, self.txt)
        return self._mm


def build_reference(dataset: Dataset, split: str) -> Reference:
    positions = dataset.split_positions(split)
    if positions.size == 0:
        raise ValidationError(f"split {split!r} is empty")
    img = dataset.image_embeddings[positions].astype(np.float64)
    txt = dataset.text_embeddings[positions].astype(np.float64)
    class_ids = None
    classes = [dataset.records[i].class_id for i in positions]
    if all(c is not None for c in classes):
        class_ids = np.array(classes, dtype=np.int64)
    return Reference(
        positions=positions,
        img=np.ascontiguousarray(img),
        txt=np.ascontiguousarray(txt),
        class_ids=class_ids,
    )


@dataclass
class QueryBatch:
    """Queries to score: embeddings plus optional labels and self-exclusion."""

    img: np.ndarray
    txt: np.ndarray
    class_ids: np.ndarray | None
    exclude: np.ndarray  # position in the reference, -1 when not a member
    positions: np.ndarray  # global dataset indices (synthetic for ad hoc queries)


def build_queries(dataset: Dataset, split: str, reference: Reference, reference_split: str) -> QueryBatch:
    positions = dataset.split_positions(split)
    if positions.size == 0:
        raise ValidationError(f"split {split!r} is empty")
    if split == reference_split:
        exclude = np.arange(positions.size, dtype=np.int64)
    else:
        exclude = np.full(positions.size, -1, dtype=np.int64)
    classes = [dataset.records[i].class_id for i in positions]
    class_ids = None
    if all(c is not None for c in classes):
        class_ids = np.array(classes, dtype=np.int64)
    return QueryBatch(
        img=np.ascontiguousarray(dataset.image_embeddings[positions].astype(np.float64)),
        txt=np.ascontiguousarray(dataset.text_embeddings[positions].astype(np.float64)),
        class_ids=class_ids,
        exclude=exclude,
        positions=positions,
    )


def _gathered_pair_distances(
    query_rows: np.ndarray,
    ref_rows: np.ndarray,
    neighbor_idx: np.ndarray,
    metric: str,
    query_classes: np.ndarray | None = None,
    ref_classes: np.ndarray | None = None,
) -> np.ndarray:
    """d(query_i, ref[neighbor_idx[i, j]]) for every (i, j)."""
    if metric == "discrete":
        if query_classes is None or ref_classes is None:
            raise ValidationError("discrete metric requires class ids on both sides")
        return (ref_classes[neighbor_idx] != query_classes[:, None]).astype(np.float64)
    if metric == "cosine":
        qn = normalize_rows(query_rows)
        rn = normalize_rows(ref_rows)
        gathered = rn[neighbor_idx]  # (m, k, d)
        return 1.0 - np.einsum("md,mkd->mk", qn, gathered)
    if metric == "euclidean":
        diff = query_rows[:, None, :] - ref_rows[neighbor_idx]
        return np.sqrt(np.sum(diff * diff, axis=2))
    raise UsageError(f"unknown metric {metric!r}")


def _weighted_neighbor_mean(
    main: np.ndarray, proximity: np.ndarray, self_dist: np.ndarray, tau1: float, tau2: float
) -> np.ndarray:
    """Mean over neighbors of main * e^(-tau1*proximity) * e^(-tau2*self_dist).

    Each exponent is clamped, but the product of two near-overflow factors
    may still be inf; the tuner rejects such settings as non-finite.
    """
    with np.errstate(over="ignore"):
        w = _guarded_exp(-tau1 * proximity) * _guarded_exp(-tau2 * self_dist)
        return np.mean(main * w, axis=1)


@dataclass
class NeighborCache:
    """Everything the score needs for a fixed (k, dX_metric, dY_metric).

    The tuner reuses one cache across thousands of (beta, gamma, tau)
    evaluations; ``lemon_from_cache`` is the single arithmetic path so a
    tuned optimum reproduces exactly when re-scored.
    """

    mm_q: np.ndarray  # d_mm of each query pair
    dY_n: np.ndarray  # (m, k) text-side distance to image-neighbors' captions
    dX_n: np.ndarray  # (m, k) image-side distance to image-neighbors
    mm_n: np.ndarray  # (m, k) image-neighbors' own d_mm
    dX_m: np.ndarray  # (m, k) image-side distance to text-neighbors' images
    dY_m: np.ndarray  # (m, k) text-side distance to text-neighbors
    mm_m: np.ndarray  # (m, k) text-neighbors' own d_mm


def query_mm(reference: Reference, queries: QueryBatch) -> np.ndarray:
    """d_mm per query: reuse the reference cache for member queries."""
    member = queries.exclude >= 0
    out = np.empty(queries.img.shape[0], dtype=np.float64)
    if member.any():
        out[member] = reference.mm[queries.exclude[member]]
    if (~member).any():
        if queries.img.shape[1] != queries.txt.shape[1]:
            raise ValidationError("multimodal distance requires equal image/text dims")
        out[~member] = pairwise_cosine_rows(queries.img[~member], queries.txt[~member])
    return out


def build_neighbor_cache(
    reference: Reference, queries: QueryBatch, params: LemonParams, threads: int = 1
) -> NeighborCache:
    params.validate()
    k = params.k
    if params.dY_metric == "discrete" and (
        reference.class_ids is None or queries.class_ids is None
    ):
        raise ValidationError(
            "discrete label distance requires class_id on every record; "
            "cluster captions explicitly if none exist"
        )

    idx_n, dX_n = knn_batch(
        reference.img,
        queries.img,
        k,
        metric=params.dX_metric,
        exclude=queries.exclude,
        threads=threads,
    )
    idx_m, dY_m = knn_batch(
        reference.txt,
        queries.txt,
        k,
        metric=params.dY_metric,
        exclude=queries.exclude,
        ref_classes=reference.class_ids,
        query_classes=queries.class_ids,
        threads=threads,
    )
    dY_n = _gathered_pair_distances(
        queries.txt,
        reference.txt,
        idx_n,
        params.dY_metric,
        query_classes=queries.class_ids,
        ref_classes=reference.class_ids,
    )
    dX_m = _gathered_pair_distances(queries.img, reference.img, idx_m, params.dX_metric)
    mm_ref = reference.mm
    return NeighborCache(
        mm_q=query_mm(reference, queries),
        dY_n=dY_n,
        dX_n=dX_n,
        mm_n=mm_ref[idx_n],
        dX_m=dX_m,
        dY_m=dY_m,
        mm_m=mm_ref[idx_m],
    )


def neighbor_components(
    cache: NeighborCache, tau1_n: float, tau2_n: float, tau1_m: float, tau2_m: float
) -> tuple[np.ndarray, np.ndarray]:
    """(s_n, s_m) arrays for one tau setting (beta/gamma enter later, linearly)."""
    s_n = _weighted_neighbor_mean(cache.dY_n, cache.dX_n, cache.mm_n, tau1_n, tau2_n)
    s_m = _weighted_neighbor_mean(cache.dX_m, cache.dY_m, cache.mm_m, tau1_m, tau2_m)
    return s_n, s_m


def lemon_from_cache(
    cache: NeighborCache,
    beta: float,
    gamma: float,
    tau1_n: float,
    tau2_n: float,
    tau1_m: float,
    tau2_m: float,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(d_mm, s_n, s_m, s) arrays for one hyperparameter setting."""
    s_n, s_m = neighbor_components(cache, tau1_n, tau2_n, tau1_m, tau2_m)
    s = cache.mm_q + beta * s_n + gamma * s_m
    return cache.mm_q, s_n, s_m, s


def score_lemon_batch(
    reference: Reference, queries: QueryBatch, params: LemonParams, threads: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    cache = build_neighbor_cache(reference, queries, params, threads=threads)
    return lemon_from_cache(
        cache, params.beta, params.gamma, params.tau1_n, params.tau2_n, params.tau1_m, params.tau2_m
    )


def _single_query_batch(
    reference: Reference, query, query_class: int | None
) -> QueryBatch:
    """Accept a reference row index or an (x, y) vector pair."""
    if isinstance(query, (int, np.integer)):
        i = int(query)
        if not 0 <= i < reference.n:
            raise ValidationError(f"query index {i} out of range of the reference")
        cls = None
        if reference.class_ids is not None:
            cls = np.array([reference.class_ids[i]], dtype=np.int64)
        return QueryBatch(
            img=reference.img[i : i + 1],
            txt=reference.txt[i : i + 1],
            class_ids=cls,
            exclude=np.array([i], dtype=np.int64),
            positions=np.array([reference.positions[i]], dtype=np.int64),
        )
    x, y = query
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    cls = None if query_class is None else np.array([query_class], dtype=np.int64)
    return QueryBatch(
        img=np.ascontiguousarray(x),
        txt=np.ascontiguousarray(y),
        class_ids=cls,
        exclude=np.array([-1], dtype=np.int64),
        positions=np.array([-1], dtype=np.int64),
    )


def score_lemon(
    query, reference: Reference, params: LemonParams, query_class: int | None = None
) -> ScoreBreakdown:
    """Score one query: a reference row index (self-excluded) or an (x, y) pair."""
    batch = _single_query_batch(reference, query, query_class)
    d_mm, s_n, s_m, s = score_lemon_batch(reference, batch, params)
    return ScoreBreakdown(d_mm=float(d_mm[0]), s_n=float(s_n[0]), s_m=float(s_m[0]), s=float(s[0]))


def score_clip_similarity(query, reference: Reference) -> float:
    """The pair's own image/text cosine distance."""
    batch = _single_query_batch(reference, query, None)
    return float(query_mm(reference, batch)[0])


def deep_knn_labels(
    reference: Reference,
    queries: QueryBatch,
    label_source: str,
    num_clusters: int = 100,
    cluster_seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """(reference labels, query labels) for the discrete-label baselines."""
    if label_source == "class_id":
        if reference.class_ids is None or queries.class_ids is None:
            raise ValidationError("label_source=class_id requires class_id on every record")
        return reference.class_ids, queries.class_ids
    if label_source == "text_cluster":
        ref_labels, centers = _kmeans_fit(reference.txt, num_clusters, cluster_seed)
        member = queries.exclude >= 0
        q_labels = np.empty(queries.txt.shape[0], dtype=np.int64)
        if member.any():
            q_labels[member] = ref_labels[queries.exclude[member]]
        if (~member).any():
            q_labels[~member] = kmeans_assign(queries.txt[~member], centers)
        return ref_labels, q_labels
    raise UsageError(f"unknown label_source {label_source!r}")


def score_deep_knn_batch(
    reference: Reference,
    queries: QueryBatch,
    k: int,
    ref_labels: np.ndarray,
    query_labels: np.ndarray,
    threads: int = 1,
) -> np.ndarray:
    """1 - (share of k nearest image neighbors with the same label).

    Values lie on the grid {0, 1/k, ..., 1}; higher means more suspect.
    """
    idx, _ = knn_batch(
        reference.img, queries.img, k, metric="cosine", exclude=queries.exclude, threads=threads
    )
    same = ref_labels[idx] == query_labels[:, None]
    return 1.0 - same.sum(axis=1) / float(k)


def score_discrepancy_batch(
    reference: Reference, queries: QueryBatch, k: int, threads: int = 1
) -> np.ndarray:
    """Mean image distance to second-degree text neighbors.

    First hop: the k text neighbors of the query caption (self excluded for
    member queries).  Second hop: the k text neighbors of each first-hop
    record, taken over the whole reference (a record is its own nearest
    text neighbor), unioned, deduplicated, minus the query itself.
    """
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    idx1, _ = knn_batch(
        reference.txt, queries.txt, k, metric="cosine", exclude=queries.exclude, threads=threads
    )
    # reference-internal text neighborhoods, shared by every query
    ref_hop, _ = knn_batch(reference.txt, reference.txt, k, metric="cosine", threads=threads)

    q_img_unit = normalize_rows(queries.img)
    ref_img_unit = normalize_rows(reference.img)
    out = np.empty(queries.img.shape[0], dtype=np.float64)
    for i in range(queries.img.shape[0]):
        second = np.unique(ref_hop[idx1[i]].ravel())
        if queries.exclude[i] >= 0:
            second = second[second != queries.exclude[i]]
        if second.size == 0:
            raise ValidationError(
                f"discrepancy: no second-degree neighbors left for query {int(queries.positions[i])}"
            )
        dists = 1.0 - ref_img_unit[second] @ q_img_unit[i]
        out[i] = float(np.mean(dists))
    return out


def score_deep_knn(
    query,
    reference: Reference,
    k: int,
    label_source: str = "class_id",
    query_class: int | None = None,
    num_clusters: int = 100,
    cluster_seed: int = 0,
) -> float:
    batch = _single_query_batch(reference, query, query_class)
    ref_labels, q_labels = deep_knn_labels(
        reference, batch, label_source, num_clusters=num_clusters, cluster_seed=cluster_seed
    )
    return float(score_deep_knn_batch(reference, batch, k, ref_labels, q_labels)[0])


def score_discrepancy(query, reference: Reference, k: int) -> float:
    batch = _single_query_batch(reference, query, None)
    return float(score_discrepancy_batch(reference, batch, k)[0])


def score_split(
    dataset: Dataset,
    reference_split: str,
    query_split: str,
    method: str,
    params: LemonParams | dict | None = None,
    threads: int = 1,
) -> ScoreTable:
    """Score every record of ``query_split`` against ``reference_split``.

    Self-exclusion applies when the splits coincide.  The result has one
    row per query record, in dataset order, independent of thread count.
    """
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {METHODS}")
    reference = build_reference(dataset, reference_split)
    queries = build_queries(dataset, query_split, reference, reference_split)

    if method == "lemon":
        p = params if isinstance(params, LemonParams) else LemonParams(**(params or {}))
        p.validate()
        d_mm, s_n, s_m, s = score_lemon_batch(reference, queries, p, threads=threads)
        rows = [
            ScoreRow(
                index=int(queries.positions[i]),
                method=method,
                score=float(s[i]),
                breakdown=ScoreBreakdown(
                    d_mm=float(d_mm[i]), s_n=float(s_n[i]), s_m=float(s_m[i]), s=float(s[i])
                ),
            )
            for i in range(queries.positions.size)
        ]
    elif method == "clip-sim":
        scores = query_mm(reference, queries)
        rows = [
            ScoreRow(index=int(queries.positions[i]), method=method, score=float(scores[i]))
            for i in range(queries.positions.size)
        ]
    elif method == "deep-knn":
        opts = dict(params or {})
        k = int(opts.pop("k", 30))
        label_source = opts.pop("label_source", None)
        if label_source is None:
            label_source = "class_id" if reference.class_ids is not None else "text_cluster"
        num_clusters = int(opts.pop("num_clusters", 100))
        cluster_seed = int(opts.pop("cluster_seed", 0))
        if opts:
            raise UsageError(f"unknown deep-knn parameters: {sorted(opts)}")
        ref_labels, q_labels = deep_knn_labels(
            reference, queries, label_source, num_clusters=num_clusters, cluster_seed=cluster_seed
        )
        scores = score_deep_knn_batch(reference, queries, k, ref_labels, q_labels, threads=threads)
        rows = [
            ScoreRow(index=int(queries.positions[i]), method=method, score=float(scores[i]))
            for i in range(queries.positions.size)
        ]
    else:  # discrepancy
        opts = dict(params or {})
        k = int(opts.pop("k", 10))
        if opts:
            raise UsageError(f"unknown discrepancy parameters: {sorted(opts)}")
        scores = score_discrepancy_batch(reference, queries, k, threads=threads)
        rows = [
            ScoreRow(index=int(queries.positions[i]), method=method, score=float(scores[i]))
            for i in range(queries.positions.size)
        ]

    table = ScoreTable(rows=rows)
    table.validate()
    return table


__all__ = [
    "LemonParams",
    "NeighborCache",
    "Reference",
    "QueryBatch",
    "METHODS",
    "build_reference",
    "build_queries",
    "build_neighbor_cache",
    "neighbor_components",
    "lemon_from_cache",
    "score_lemon",
    "score_lemon_batch",
    "score_clip_similarity",
    "score_deep_knn",
    "score_deep_knn_batch",
    "deep_knn_labels",
    "score_discrepancy",
    "score_discrepancy_batch",
    "score_split",
]
