"""Pool-based active-learning loop: initialize, train, evaluate, query, augment.

Each run is a pure function of (data, config): standardization is refitted
on the current labeled set every iteration, the committee is retrained from
scratch with per-iteration member seeds, and queried samples move from the
pool into the labeled set with their precomputed labels acting as the
oracle. Also hosts the cross-database transfer mode, where the pool comes
entirely from one manifest and the test set is the whole other manifest.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dataset as ds
from . import model as mdl
from . import strategies as st
from .errors import ValidationError

DEFAULT_INIT_SIZE = 30
DEFAULT_N_QUERY_ROUNDS = 5
DEFAULT_ENSEMBLE_SIZE = 5

# decorrelates member seeds across iterations; selection gets its own offset
ITERATION_SEED_STRIDE = 1000
SELECTION_SEED_OFFSET = 999


@dataclass
class ALRunConfig:
    strategy: st.Strategy = st.Strategy.RANDOM
    init_size: int = DEFAULT_INIT_SIZE
    batch_size: int = st.DEFAULT_BATCH_SIZE
    n_query_rounds: int = DEFAULT_N_QUERY_ROUNDS
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE
    alpha: float = st.DEFAULT_ALPHA
    train_hyper: mdl.TrainHyperparams = field(default_factory=mdl.TrainHyperparams)
    seed: int = 0
    transfer: tuple[str, str] | None = None  # (train manifest, test manifest)

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "init_size": self.init_size,
            "batch_size": self.batch_size,
            "n_query_rounds": self.n_query_rounds,
            "ensemble_size": self.ensemble_size,
            "alpha": self.alpha,
            "train_hyper": self.train_hyper.to_dict(),
            "seed": self.seed,
            "transfer": list(self.transfer) if self.transfer else None,
        }


@dataclass
class ALData:
    """Featurized records plus the pool/test partition the loop runs on."""

    features: np.ndarray  # (n, 17), unstandardized
    targets: np.ndarray  # (n,) formation energy per atom
    pool_indices: np.ndarray
    test_indices: np.ndarray


@dataclass
class IterationRecord:
    iteration: int
    labeled_count: int
    mae: float
    r2: float
    queried_indices: list[int]
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "labeled_count": self.labeled_count,
            "mae": self.mae,
            "r2": self.r2,
            "queried_indices": self.queried_indices,
            "wall_time": self.wall_time,
        }


@dataclass
class RunResult:
    config: ALRunConfig
    curve: list[IterationRecord]
    final_model: mdl.EnsembleModel


class ALRunError(RuntimeError):
    """A run failed part-way; the completed iterations are preserved."""

    def __init__(self, cause: Exception, partial_curve: list[IterationRecord]):
        self.cause = cause
        self.partial_curve = partial_curve
        super().__init__(f"active-learning run failed: {cause}")


def evaluate(model: mdl.EnsembleModel, test_features: np.ndarray, test_targets: np.ndarray) -> tuple[float, float]:
    """MAE and R^2 of committee-mean predictions on an already-standardized test set.

    R^2 can be negative; with zero target variance it is undefined and
    reported as NaN (MAE stays valid).
    """
    y = np.asarray(test_targets, dtype=np.float64)
    if y.size == 0:
        raise ValidationError("test set is empty")
    preds = mdl.predict_mean_matrix(model, test_features)
    mae = float(np.abs(preds - y).mean())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return mae, float("nan")
    ss_res = float(((preds - y) ** 2).sum())
    return mae, 1.0 - ss_res / ss_tot


def initialize_labeled(pool_indices: np.ndarray, init_size: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded uniform draw of the starting labeled set; both halves sorted."""
    pool = np.asarray(pool_indices)
    if pool.size < init_size:
        raise ValidationError(f"pool of {pool.size} cannot seed {init_size} labeled samples")
    perm = np.random.default_rng(seed).permutation(pool.size)
    return np.sort(pool[perm[:init_size]]), np.sort(pool[perm[init_size:]])


def _select(
    config: ALRunConfig,
    model: mdl.EnsembleModel,
    pool_std: np.ndarray,
    labeled_std: np.ndarray,
    iteration: int,
) -> st.QueryBatch:
    sel_seed = config.seed + ITERATION_SEED_STRIDE * iteration + SELECTION_SEED_OFFSET
    B = config.batch_size
    if config.strategy is st.Strategy.RANDOM:
        return st.select_random(np.arange(pool_std.shape[0]), B, sel_seed)
    if config.strategy is st.Strategy.UNCERTAINTY:
        return st.select_uncertainty(mdl.predict_uncertainty_matrix(model, pool_std), B)
    if config.strategy is st.Strategy.DIVERSITY:
        return st.select_diversity(pool_std, B, sel_seed)
    if config.strategy is st.Strategy.HYBRID:
        U = mdl.predict_uncertainty_matrix(model, pool_std)
        D = st.min_distances(pool_std, labeled_std)
        return st.select_hybrid(U, D, config.alpha, B)
    raise ValidationError(f"unknown strategy {config.strategy!r}")


def run_al(config: ALRunConfig, data: ALData) -> RunResult:
    """Execute the full loop, yielding n_query_rounds + 1 curve points."""
    needed = config.init_size + config.n_query_rounds * config.batch_size
    if needed > data.pool_indices.size:
        raise ValidationError(
            f"schedule needs {needed} pool samples but only {data.pool_indices.size} available"
        )
    if config.init_size < 2:
        raise ValidationError("init_size must be at least 2")

    labeled, pool = initialize_labeled(data.pool_indices, config.init_size, config.seed)
    test_y = data.targets[data.test_indices]

    curve: list[IterationRecord] = []
    model = None
    try:
        for t in range(config.n_query_rounds + 1):
            t0 = time.perf_counter()
            std = ds.fit_standardization(data.features[labeled])
            labeled_std = ds.apply_standardization(data.features[labeled], std)
            model = mdl.train_ensemble(
                labeled_std,
                data.targets[labeled],
                config.train_hyper,
                config.ensemble_size,
                base_seed=config.seed + ITERATION_SEED_STRIDE * t,
                standardization=std,
            )
            test_std = ds.apply_standardization(data.features[data.test_indices], std)
            mae, r2 = evaluate(model, test_std, test_y)

            queried: list[int] = []
            if t < config.n_query_rounds:
                pool_std = ds.apply_standardization(data.features[pool], std)
                batch = _select(config, model, pool_std, labeled_std, t)
                queried = [int(i) for i in pool[batch.indices]]

            curve.append(
                IterationRecord(
                    iteration=t,
                    labeled_count=int(labeled.size),
                    mae=mae,
                    r2=r2,
                    queried_indices=queried,
                    wall_time=time.perf_counter() - t0,
                )
            )
            if queried:
                labeled = np.union1d(labeled, queried)
                pool = np.setdiff1d(pool, queried)
    except Exception as exc:  # preserve what completed
        raise ALRunError(exc, curve) from exc

    return RunResult(config=config, curve=curve, final_model=model)


def build_al_data(
    records: list[ds.MaterialRecord],
    schema: ds.FeatureSchema,
    ratio: float,
    seed: int,
) -> ALData:
    """Featurize cleaned records and cut the seeded pool/test split."""
    features = ds.featurize_records(records, schema)
    targets = np.asarray([r.formation_energy_per_atom for r in records], dtype=np.float64)
    parts = ds.split(len(records), ratio, seed)
    return ALData(
        features=features,
        targets=targets,
        pool_indices=parts.pool_indices,
        test_indices=parts.test_indices,
    )


def load_clean_records(manifest_path: str, energy_tol: float = 0.001) -> list[ds.MaterialRecord]:
    """load -> filter -> deduplicate, the standard ingestion order."""
    return ds.deduplicate(ds.filter_records(ds.load_manifest(manifest_path)), energy_tol)


def run_transfer(
    config: ALRunConfig,
    schema: ds.FeatureSchema | None = None,
    energy_tol: float = 0.001,
) -> RunResult:
    """Cross-database mode: pool from one manifest, test on the whole other one."""
    if not config.transfer:
        raise ValidationError("config.transfer must name (train_manifest, test_manifest)")
    schema = schema or ds.FeatureSchema()
    train_path, test_path = config.transfer
    train_records = load_clean_records(train_path, energy_tol)
    test_records = load_clean_records(test_path, energy_tol)

    overlap = {r.id for r in train_records} & {r.id for r in test_records}
    if overlap:
        warnings.warn(
            f"{len(overlap)} record id(s) appear in both manifests (kept; sources differ)",
            stacklevel=2,
        )

    features = np.vstack(
        [ds.featurize_records(train_records, schema), ds.featurize_records(test_records, schema)]
    )
    targets = np.asarray(
        [r.formation_energy_per_atom for r in train_records + test_records], dtype=np.float64
    )
    n_train = len(train_records)
    data = ALData(
        features=features,
        targets=targets,
        pool_indices=np.arange(n_train),
        test_indices=np.arange(n_train, n_train + len(test_records)),
    )
    return run_al(config, data)


def run_log_dict(result: RunResult, checkpoint_path: str | None = None) -> dict:
    """JSON-ready log: config echo, per-iteration records, total timing."""
    return {
        "config": result.config.to_dict(),
        "iterations": [rec.to_dict() for rec in result.curve],
        "total_wall_time": sum(rec.wall_time for rec in result.curve),
        "final_model_checkpoint": checkpoint_path,
    }


def curve_rows(result: RunResult, seed: int | None = None) -> list[tuple]:
    """Rows for the learning-curve CSV: (strategy, seed, iteration, labeled, mae, r2)."""
    s = result.config.seed if seed is None else seed
    return [
        (result.config.strategy.value, s, rec.iteration, rec.labeled_count, rec.mae, rec.r2)
        for rec in result.curve
    ]
