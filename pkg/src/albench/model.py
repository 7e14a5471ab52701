"""Feedforward regressor (17-128-128-1, ReLU) and its committee wrapper.

Each committee member is trained independently with Adam on MSE; members
share the labeled data and differ only in seed (initialization and
minibatch shuffling). Committee mean is the prediction, population
variance across members is the epistemic uncertainty score.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import StandardizationParams
from .errors import TrainingDivergedError, ValidationError

DEFAULT_HIDDEN = (128, 128)

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class TrainHyperparams:
    learning_rate: float = 1e-3
    epochs: int = 200
    minibatch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def validate(self) -> None:
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.epochs < 1 or self.minibatch_size < 1:
            raise ValidationError("epochs and minibatch_size must be positive")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValidationError("adam betas must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "minibatch_size": self.minibatch_size,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainHyperparams":
        return cls(**d)


@dataclass
class NetParams:
    """Weights and biases of one member network.

    Shapes: W1 (h1, in), b1 (h1,), W2 (h2, h1), b2 (h2,), W3 (1, h2), b3 (1,).
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    @classmethod
    def he_uniform(cls, in_dim: int, hidden: tuple[int, int], rng: np.random.Generator) -> "NetParams":
        """He-uniform weights (limit sqrt(6/fan_in)) drawn W1, W2, W3 in order; zero biases."""
        h1, h2 = hidden

        def draw(fan_out, fan_in):
            limit = math.sqrt(6.0 / fan_in)
            return rng.uniform(-limit, limit, size=(fan_out, fan_in))

        return cls(
            W1=draw(h1, in_dim),
            b1=np.zeros(h1),
            W2=draw(h2, h1),
            b2=np.zeros(h2),
            W3=draw(1, h2),
            b3=np.zeros(1),
        )

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2, self.W3, self.b3)

    def copy(self) -> "NetParams":
        return NetParams(*(a.copy() for a in self.arrays()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def to_dict(self) -> dict:
        return {name: a.tolist() for name, a in zip(("W1", "b1", "W2", "b2", "W3", "b3"), self.arrays())}

    @classmethod
    def from_dict(cls, d: dict) -> "NetParams":
        return cls(**{k: np.ascontiguousarray(d[k], dtype=np.float64) for k in ("W1", "b1", "W2", "b2", "W3", "b3")})


@dataclass
class EnsembleModel:
    """M trained members plus the standardization fitted on their labeled set."""

    members: list[NetParams]
    member_seeds: list[int]
    standardization: StandardizationParams | None = None
    hyper: TrainHyperparams = field(default_factory=TrainHyperparams)


def forward(params: NetParams, x: np.ndarray) -> float:
    """Single-input network output; input must be finite (and standardized)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValidationError("non-finite network input")
    return float(kernels.forward_batch(*params.arrays(), np.ascontiguousarray(x[None, :]))[0])


def forward_matrix(params: NetParams, X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValidationError("non-finite network input")
    return kernels.forward_batch(*params.arrays(), X)


def loss_and_gradient(params: NetParams, X: np.ndarray, y: np.ndarray) -> tuple[float, NetParams]:
    """MSE loss and its gradient, packaged with the same shapes as NetParams."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValidationError("X must be (n, d) with matching y of shape (n,)")
    if X.shape[0] < 1:
        raise ValidationError("need at least one row")
    loss, *grads = kernels.loss_and_grad(*params.arrays(), X, y)
    return loss, NetParams(*grads)


def train_member(
    X: np.ndarray,
    y: np.ndarray,
    hyper: TrainHyperparams,
    seed: int,
    hidden: tuple[int, int] = DEFAULT_HIDDEN,
) -> NetParams:
    """Train one member network for exactly ``hyper.epochs`` epochs.

    One generator seeded by ``seed`` drives both the He-uniform init and
    the per-epoch minibatch reshuffles, so the result is a pure function
    of (data, hyper, seed). No early stopping.
    """
    hyper.validate()
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = X.shape[0]
    if X.ndim != 2 or y.shape != (n,):
        raise ValidationError("X must be (n, d) with matching y of shape (n,)")
    if n < 2:
        raise ValidationError("need at least 2 training rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite training data")

    rng = np.random.default_rng(seed)
    params = NetParams.he_uniform(X.shape[1], hidden, rng)
    batch = min(hyper.minibatch_size, n)
    perms = np.vstack([rng.permutation(n) for _ in range(hyper.epochs)]).astype(np.intp)

    bad_epoch, bad_step = kernels.train_mlp(
        *params.arrays(),
        X,
        y,
        perms,
        batch,
        hyper.learning_rate,
        hyper.adam_beta1,
        hyper.adam_beta2,
        hyper.adam_eps,
    )
    if bad_epoch >= 0:
        raise TrainingDivergedError(int(bad_epoch), int(bad_step))
    return params


def train_ensemble(
    X: np.ndarray,
    y: np.ndarray,
    hyper: TrainHyperparams,
    M: int,
    base_seed: int,
    standardization: StandardizationParams | None = None,
    hidden: tuple[int, int] = DEFAULT_HIDDEN,
) -> EnsembleModel:
    """Train M members on the identical (already standardized) labeled set.

    Member i gets seed base_seed + i; members differ only by seed.
    """
    if M < 2:
        raise ValidationError("ensemble needs M >= 2 members for a meaningful variance")
    seeds = [base_seed + i for i in range(M)]
    members = [train_member(X, y, hyper, s, hidden) for s in seeds]
    return EnsembleModel(members=members, member_seeds=seeds, standardization=standardization, hyper=hyper)


def member_predictions(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    """Stacked per-member outputs, shape (M, n)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    return np.vstack([kernels.forward_batch(*m.arrays(), X) for m in model.members])


def predict_mean(model: EnsembleModel, x: np.ndarray) -> float:
    """Committee mean at one input."""
    preds = member_predictions(model, np.asarray(x, dtype=np.float64)[None, :])
    return float(preds.mean(axis=0)[0])


def predict_uncertainty(model: EnsembleModel, x: np.ndarray) -> float:
    """Population variance of member outputs at one input (>= 0)."""
    preds = member_predictions(model, np.asarray(x, dtype=np.float64)[None, :])
    return float(preds.var(axis=0)[0])


def predict_mean_matrix(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    return member_predictions(model, X).mean(axis=0)


def predict_uncertainty_matrix(model: EnsembleModel, X: np.ndarray) -> np.ndarray:
    return member_predictions(model, X).var(axis=0)


# ---------------------------------------------------------------------------
# checkpointing

def save_checkpoint(model: EnsembleModel, path: str) -> None:
    """JSON dump of all members, seeds, hyperparams and standardization.

    Floats survive the round trip bit-exactly (shortest-repr encoding).
    """
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "member_seeds": [int(s) for s in model.member_seeds],
        "hyper": model.hyper.to_dict(),
        "standardization": model.standardization.to_dict() if model.standardization else None,
        "members": [m.to_dict() for m in model.members],
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> EnsembleModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValidationError(f"unsupported checkpoint format_version {version!r}")
    std = doc["standardization"]
    return EnsembleModel(
        members=[NetParams.from_dict(d) for d in doc["members"]],
        member_seeds=[int(s) for s in doc["member_seeds"]],
        standardization=StandardizationParams.from_dict(std) if std else None,
        hyper=TrainHyperparams.from_dict(doc["hyper"]),
    )
