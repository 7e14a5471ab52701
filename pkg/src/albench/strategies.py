"""Query strategies: random, uncertainty, diversity, and the hybrid blend.

All selectors work on pool-aligned arrays and return positions into them;
the loop layer maps positions back to global record indices. Ties are
always broken toward the lower pool index so selection is deterministic
and independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ValidationError

DEFAULT_BATCH_SIZE = 15
DEFAULT_ALPHA = 0.6
KMEANS_MAX_ITERS = 100


class Strategy(str, Enum):
    RANDOM = "random"
    UNCERTAINTY = "uncertainty"
    DIVERSITY = "diversity"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class QueryBatch:
    """A selected batch: distinct pool indices plus strategy-dependent scores."""

    indices: np.ndarray
    scores: np.ndarray
    strategy: Strategy


def _top_b(scores: np.ndarray, b: int) -> np.ndarray:
    """Positions of the b largest scores, ties to the lower index."""
    n = scores.shape[0]
    order = np.lexsort((np.arange(n), -scores))
    return order[: min(b, n)]


def select_random(pool_indices, B: int, rng_seed: int) -> QueryBatch:
    """Seeded uniform sample without replacement, clipped to the pool size."""
    pool = np.asarray(pool_indices)
    if pool.size == 0:
        raise ValidationError("pool is empty")
    k = min(B, pool.size)
    pos = np.random.default_rng(rng_seed).permutation(pool.size)[:k]
    chosen = np.sort(pool[pos])
    return QueryBatch(indices=chosen, scores=np.zeros(k), strategy=Strategy.RANDOM)


def select_uncertainty(U_values, B: int) -> QueryBatch:
    """The B pool positions with the largest committee variance."""
    U = np.asarray(U_values, dtype=np.float64)
    if U.size == 0:
        raise ValidationError("pool is empty")
    if not np.all(np.isfinite(U)):
        raise ValidationError("uncertainty scores must be finite")
    sel = _top_b(U, B)
    return QueryBatch(indices=sel, scores=U[sel], strategy=Strategy.UNCERTAINTY)


def kmeans(
    features: np.ndarray,
    k: int,
    seed: int,
    max_iters: int = KMEANS_MAX_ITERS,
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means++ with Lloyd refinement.

    The seeded D^2 sampling runs over a canonical ordering of the points
    (by distance to the data centroid, a value preserved by row shuffles
    and orthogonal maps), so the result depends on pool row order and the
    feature basis only through exact-tie resolution. Stops when assignments
    stabilize or after ``max_iters``. An empty cluster is reseeded to the
    point farthest from its own centroid. With n <= k every point becomes
    its own cluster.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1 or k < 1:
        raise ValidationError("kmeans needs an (n, d) matrix with n >= 1 and k >= 1")
    n = X.shape[0]
    if n <= k:
        return X.copy(), np.arange(n)

    canon = np.argsort(((X - X.mean(axis=0)) ** 2).sum(axis=1), kind="stable")
    Xc = X[canon]
    rng = np.random.default_rng(seed)
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = Xc[rng.integers(n)]
    d2 = ((Xc - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            # D^2 sampling
            target = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), target, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(rng.integers(n))
        centroids[j] = Xc[idx]
        d2 = np.minimum(d2, ((Xc - centroids[j]) ** 2).sum(axis=1))

    prev = None
    assign_c = None
    for _ in range(max_iters):
        dists = ((Xc[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign_c = dists.argmin(axis=1)  # argmin ties resolve to the lower centroid
        if prev is not None and np.array_equal(assign_c, prev):
            break
        prev = assign_c
        own = dists[np.arange(n), assign_c].copy()
        for j in range(k):
            members = assign_c == j
            if members.any():
                centroids[j] = Xc[members].mean(axis=0)
            else:
                far = int(own.argmax())
                centroids[j] = Xc[far]
                own[far] = -1.0  # a second empty cluster reseeds elsewhere
    else:
        # max_iters hit: recompute assignments against the final centroids
        dists = ((Xc[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign_c = dists.argmin(axis=1)

    assign = np.empty(n, dtype=np.int64)
    assign[canon] = assign_c
    return centroids, assign


def select_diversity(pool_features: np.ndarray, B: int, seed: int) -> QueryBatch:
    """Cluster the pool (k = B) and take each cluster's point nearest its centroid.

    Slots left open (empty clusters, n < B) are filled by farthest-point
    sampling against the already-selected set. Representatives score a
    negative centroid distance, fill points their min distance at pick time.
    """
    X = np.asarray(pool_features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("pool is empty")
    n = X.shape[0]
    k = min(B, n)
    centroids, assign = kmeans(X, k, seed)

    selected: list[int] = []
    scores: list[float] = []
    for j in range(centroids.shape[0]):
        members = np.flatnonzero(assign == j)
        if members.size == 0:
            continue
        d = np.sqrt(((X[members] - centroids[j]) ** 2).sum(axis=1))
        rep = int(members[int(d.argmin())])
        selected.append(rep)
        scores.append(-float(d.min()))

    while len(selected) < k:
        chosen = np.asarray(selected, dtype=int)
        remaining = np.setdiff1d(np.arange(n), chosen)
        dmat = np.sqrt(((X[remaining][:, None, :] - X[chosen][None, :, :]) ** 2).sum(axis=2))
        mind = dmat.min(axis=1)
        pick = int(mind.argmax())  # ties resolve to the lower remaining index
        selected.append(int(remaining[pick]))
        scores.append(float(mind[pick]))

    return QueryBatch(
        indices=np.asarray(selected, dtype=int),
        scores=np.asarray(scores),
        strategy=Strategy.DIVERSITY,
    )


def distance_to_labeled(x: np.ndarray, labeled_features: np.ndarray) -> float:
    """Min Euclidean distance from x to the labeled set; +inf when it is empty."""
    L = np.asarray(labeled_features, dtype=np.float64)
    if L.size == 0:
        return float("inf")
    return float(np.sqrt(((L - np.asarray(x, dtype=np.float64)) ** 2).sum(axis=1)).min())


def min_distances(pool_features: np.ndarray, labeled_features: np.ndarray) -> np.ndarray:
    """distance_to_labeled for every pool row at once, shape (n,)."""
    P = np.asarray(pool_features, dtype=np.float64)
    L = np.asarray(labeled_features, dtype=np.float64)
    if L.size == 0:
        return np.full(P.shape[0], np.inf)
    d2 = ((P[:, None, :] - L[None, :, :]) ** 2).sum(axis=2)
    return np.sqrt(d2.min(axis=1))


def minmax_normalize(scores) -> np.ndarray:
    """Rescale to [0, 1]; a constant input maps to all 0.5."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValidationError("scores must be finite")
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.full_like(s, 0.5)
    return (s - lo) / (hi - lo)


def select_hybrid(U_values, D_values, alpha: float, B: int) -> QueryBatch:
    """Top-B of alpha * U_norm + (1 - alpha) * D_norm, both min-max normalized over the pool."""
    if not 0 <= alpha <= 1:
        raise ValidationError("alpha must lie in [0, 1]")
    U = np.asarray(U_values, dtype=np.float64)
    D = np.asarray(D_values, dtype=np.float64)
    if U.shape != D.shape or U.ndim != 1 or U.size == 0:
        raise ValidationError("U and D must be equal-length non-empty vectors")
    combined = alpha * minmax_normalize(U) + (1 - alpha) * minmax_normalize(D)
    sel = _top_b(combined, B)
    return QueryBatch(indices=sel, scores=combined[sel], strategy=Strategy.HYBRID)
