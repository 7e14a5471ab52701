"""Synthetic clustered regression data for benchmarks and directional tests.

Features come from Gaussian clusters with highly unequal populations and
cluster-dependent targets, the regime where coverage-seeking selection
should beat uniform random sampling: random draws mostly hit the large
clusters and starve the small ones, so their test points stay mispredicted.
"""

from __future__ import annotations

import numpy as np

from .al_loop import ALData
from .dataset import N_FEATURES, split


def make_synthetic_data(
    n_records: int = 600,
    n_clusters: int = 15,
    dim: int = N_FEATURES,
    seed: int = 0,
    ratio: float = 0.8,
    population_decay: float = 0.65,
    center_scale: float = 6.0,
    within_scale: float = 0.4,
    noise: float = 0.02,
) -> tuple[ALData, np.ndarray]:
    """Build an ALData plus the per-record cluster labels.

    Cluster populations fall off geometrically (``population_decay``), with
    every cluster guaranteed at least one member. Targets are a cluster
    offset plus a small shared linear term and Gaussian noise.
    """
    rng = np.random.default_rng(seed)
    weights = population_decay ** np.arange(n_clusters)
    weights /= weights.sum()
    labels = np.concatenate(
        [
            np.arange(n_clusters),  # every cluster is populated
            rng.choice(n_clusters, size=n_records - n_clusters, p=weights),
        ]
    )
    rng.shuffle(labels)

    centers = rng.normal(0.0, center_scale, size=(n_clusters, dim))
    offsets = rng.uniform(-3.0, 0.0, size=n_clusters)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)

    X = centers[labels] + rng.normal(0.0, within_scale, size=(n_records, dim))
    y = offsets[labels] + 0.05 * ((X - centers[labels]) @ direction) + rng.normal(0.0, noise, n_records)

    parts = split(n_records, ratio, seed)
    data = ALData(
        features=X,
        targets=y,
        pool_indices=parts.pool_indices,
        test_indices=parts.test_indices,
    )
    return data, labels
