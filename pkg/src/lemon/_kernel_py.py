"""Pure-numpy top-k kernel, the fallback when the compiled extension is absent.

Both backends share the contract: distances ascending, ties broken by
ascending reference index, excluded rows never returned.  Cosine variants
expect row-normalized inputs.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

# reference tile bounding the (q_tile, ref_tile, dim) scratch array
_REF_TILE = 2048


def _select(dist: np.ndarray, k: int, exclude: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = dist.shape[0]
    for row in range(m):
        if exclude[row] >= 0:
            dist[row, exclude[row]] = np.inf
    # stable sort on distance keeps ties in index order
    order = np.argsort(dist, axis=1, kind="stable")[:, :k]
    taken = np.take_along_axis(dist, order, axis=1)
    return order.astype(np.int64), taken


def topk_cosine(ref_unit: np.ndarray, q_unit: np.ndarray, k: int, exclude: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dist = 1.0 - q_unit @ ref_unit.T
    return _select(dist, k, exclude)


def topk_euclidean(ref: np.ndarray, q: np.ndarray, k: int, exclude: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m, n = q.shape[0], ref.shape[0]
    dist = np.empty((m, n), dtype=np.float64)
    # explicit differences (not the |a|^2+|b|^2-2ab expansion) so duplicate
    # rows give exact zero and exact ties
    for start in range(0, n, _REF_TILE):
        stop = min(start + _REF_TILE, n)
        diff = q[:, None, :] - ref[None, start:stop, :]
        dist[:, start:stop] = np.sqrt(np.sum(diff * diff, axis=2))
    return _select(dist, k, exclude)
