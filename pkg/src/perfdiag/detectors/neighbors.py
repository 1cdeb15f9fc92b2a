"""Distance-based detectors: k-th-neighbor distance (KNN) and LOF.

Both run from the same chunked Euclidean-distance kernel. Small inputs use
the direct (x - y)^2 expansion, which matches a brute-force oracle bit for
bit; wide/tall inputs switch to the squared-norm identity to bound memory.
"""

from __future__ import annotations

import numpy as np

from ..errors import TooFewSamples

# budget on rows*features before switching to the squared-norm kernel
_DIRECT_LIMIT = 4_000_000
_CHUNK = 256


def _distance_block(X: np.ndarray, rows: np.ndarray, direct: bool) -> np.ndarray:
    """Distances from X[rows] to every row of X, shape (len(rows), d)."""
    if direct:
        diff = X[rows][:, None, :] - X[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
    else:
        sq_norms = np.einsum("ij,ij->i", X, X)
        sq = sq_norms[rows][:, None] + sq_norms[None, :] - 2.0 * (X[rows] @ X.T)
        np.clip(sq, 0.0, None, out=sq)
    return np.sqrt(sq)


def _use_direct(X: np.ndarray) -> bool:
    return X.shape[0] * X.shape[1] <= _DIRECT_LIMIT


def knn_scores(X: np.ndarray, k: int) -> np.ndarray:
    """Euclidean distance to the k-th nearest neighbor, self excluded."""
    d = X.shape[0]
    if d < k + 1:
        raise TooFewSamples(f"knn with k={k} needs at least {k + 1} points, got {d}")
    direct = _use_direct(X)
    out = np.empty(d, dtype=np.float64)
    for start in range(0, d, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, d))
        dist = _distance_block(X, rows, direct)
        dist[np.arange(rows.size), rows] = np.inf  # exclude self
        out[rows] = np.partition(dist, k - 1, axis=1)[:, k - 1]
    return out


def lof_scores(X: np.ndarray, k: int) -> np.ndarray:
    """Local outlier factor with ties-inclusive k-neighborhoods.

    kdist(p) is the k-th smallest distance from p to other points; the
    neighborhood N(p) holds every point within kdist(p), so distance ties
    enlarge it. reach(p, o) = max(kdist(o), d(p, o)); the local reachability
    density lrd(p) is the reciprocal mean reach over N(p) (infinite when the
    mean is zero); LOF(p) = mean of neighbor lrd over lrd(p), with the
    all-duplicates case inf/inf taken as 1.
    """
    d = X.shape[0]
    if d < k + 1:
        raise TooFewSamples(f"lof with k={k} needs at least {k + 1} points, got {d}")
    direct = _use_direct(X)

    kdist = np.empty(d, dtype=np.float64)
    for start in range(0, d, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, d))
        dist = _distance_block(X, rows, direct)
        dist[np.arange(rows.size), rows] = np.inf
        kdist[rows] = np.partition(dist, k - 1, axis=1)[:, k - 1]

    neighborhoods: list[np.ndarray] = []
    lrd = np.empty(d, dtype=np.float64)
    for start in range(0, d, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, d))
        dist = _distance_block(X, rows, direct)
        dist[np.arange(rows.size), rows] = np.inf
        for local, p in enumerate(rows):
            nbrs = np.flatnonzero(dist[local] <= kdist[p])
            neighborhoods.append(nbrs)
            reach = np.maximum(kdist[nbrs], dist[local, nbrs])
            mean_reach = reach.mean()
            lrd[p] = np.inf if mean_reach == 0.0 else 1.0 / mean_reach

    out = np.empty(d, dtype=np.float64)
    for p in range(d):
        if np.isinf(lrd[p]):
            # zero mean reach forces every neighbor into the same duplicate
            # pile, so their lrd is infinite as well: inf/inf := 1
            out[p] = 1.0
        else:
            out[p] = lrd[neighborhoods[p]].mean() / lrd[p]
    return out
