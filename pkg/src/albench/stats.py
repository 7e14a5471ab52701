"""Multi-seed aggregation, significance testing, and the comparison report.

Curves aggregate pointwise as mean +/- sample (n-1) standard deviation.
Each strategy's final-point MAE samples are tested against the random
baseline; the default is Welch's unpaired two-tailed t-test, with a paired
variant available. Two-tailed p comes from the regularized incomplete
beta form of the t CDF: p = I_{df/(df+t^2)}(df/2, 1/2).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc

from .al_loop import RunResult
from .errors import ValidationError
from .strategies import Strategy

SIGNIFICANCE_ALPHA = 0.05

TEST_KINDS = ("unpaired_welch", "paired")


@dataclass
class AggregateCurve:
    strategy: Strategy
    labeled_counts: list[int]
    mae_mean: list[float]
    mae_std: list[float]
    r2_mean: list[float]
    r2_std: list[float]
    n_seeds: int

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "labeled_counts": self.labeled_counts,
            "mae_mean": self.mae_mean,
            "mae_std": self.mae_std,
            "r2_mean": self.r2_mean,
            "r2_std": self.r2_std,
            "n_seeds": self.n_seeds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AggregateCurve":
        return cls(
            strategy=Strategy(d["strategy"]),
            labeled_counts=list(d["labeled_counts"]),
            mae_mean=list(d["mae_mean"]),
            mae_std=list(d["mae_std"]),
            r2_mean=list(d["r2_mean"]),
            r2_std=list(d["r2_std"]),
            n_seeds=int(d["n_seeds"]),
        )


@dataclass
class SignificanceResult:
    strategy: Strategy
    p_value: float
    test_kind: str
    significant: bool
    direction: str  # better | worse | similar


@dataclass
class FinalRow:
    strategy: Strategy
    mae_mean: float
    mae_std: float
    r2_mean: float
    r2_std: float
    p_value: float | None  # None for the baseline itself
    status: str  # baseline | better | worse | similar

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy.value,
            "mae_mean": self.mae_mean,
            "mae_std": self.mae_std,
            "r2_mean": self.r2_mean,
            "r2_std": self.r2_std,
            "p_value": self.p_value,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FinalRow":
        return cls(
            strategy=Strategy(d["strategy"]),
            mae_mean=d["mae_mean"],
            mae_std=d["mae_std"],
            r2_mean=d["r2_mean"],
            r2_std=d["r2_std"],
            p_value=d["p_value"],
            status=d["status"],
        )


@dataclass
class ComparisonReport:
    system: str
    aggregates: list[AggregateCurve]
    final_table: list[FinalRow]
    test_kind: str
    config_fingerprint: str

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "aggregates": [a.to_dict() for a in self.aggregates],
            "final_table": [r.to_dict() for r in self.final_table],
            "test_kind": self.test_kind,
            "config_fingerprint": self.config_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(
            system=d["system"],
            aggregates=[AggregateCurve.from_dict(a) for a in d["aggregates"]],
            final_table=[FinalRow.from_dict(r) for r in d["final_table"]],
            test_kind=d["test_kind"],
            config_fingerprint=d["config_fingerprint"],
        )


def aggregate(runs: list[RunResult]) -> AggregateCurve:
    """Pointwise mean and sample std of MAE and R^2 over same-strategy runs."""
    if len(runs) < 2:
        raise ValidationError("need at least 2 runs to aggregate")
    strategies = {r.config.strategy for r in runs}
    if len(strategies) != 1:
        raise ValidationError(f"runs mix strategies: {sorted(s.value for s in strategies)}")
    schedules = [[rec.labeled_count for rec in r.curve] for r in runs]
    if any(s != schedules[0] for s in schedules[1:]):
        raise ValidationError("runs have mismatched labeled-count schedules")

    mae = np.asarray([[rec.mae for rec in r.curve] for r in runs])
    r2 = np.asarray([[rec.r2 for rec in r.curve] for r in runs])

    def sample_std(a):
        # assumed-mean shift keeps identical values at exactly zero std
        return (a - a[0]).std(axis=0, ddof=1)

    return AggregateCurve(
        strategy=runs[0].config.strategy,
        labeled_counts=schedules[0],
        mae_mean=mae.mean(axis=0).tolist(),
        mae_std=sample_std(mae).tolist(),
        r2_mean=r2.mean(axis=0).tolist(),
        r2_std=sample_std(r2).tolist(),
        n_seeds=len(runs),
    )


def t_cdf(t: float, df: float) -> float:
    """Student-t CDF via the regularized incomplete beta function."""
    if df <= 0:
        raise ValidationError("df must be > 0")
    if t == 0.0:
        return 0.5
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t < 0 else 1.0 - tail


def t_test(a, b, kind: str = "unpaired_welch") -> float:
    """Two-tailed p-value comparing samples a and b.

    unpaired_welch uses Welch's statistic with Welch-Satterthwaite degrees
    of freedom; paired runs a one-sample test on the differences. Zero
    variance degenerates to p = 1 (equal means) or p = 0 (unequal means).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if kind == "unpaired_welch":
        n, m = a.size, b.size
        if n < 2 or m < 2:
            raise ValidationError("each sample needs at least 2 values")
        va, vb = a.var(ddof=1), b.var(ddof=1)
        se2 = va / n + vb / m
        if se2 == 0.0:
            return 1.0 if a.mean() == b.mean() else 0.0
        t = (a.mean() - b.mean()) / math.sqrt(se2)
        df = se2**2 / ((va / n) ** 2 / (n - 1) + (vb / m) ** 2 / (m - 1))
    elif kind == "paired":
        if a.size != b.size:
            raise ValidationError("paired test needs equal-length samples")
        if a.size < 2:
            raise ValidationError("paired test needs at least 2 pairs")
        d = a - b
        sd = d.std(ddof=1)
        if sd == 0.0:
            return 1.0 if d.mean() == 0.0 else 0.0
        t = d.mean() / (sd / math.sqrt(d.size))
        df = d.size - 1
    else:
        raise ValidationError(f"unknown test kind {kind!r}; expected one of {TEST_KINDS}")
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def compare_to_baseline(
    strategy: Strategy,
    samples: np.ndarray,
    baseline: np.ndarray,
    kind: str = "unpaired_welch",
) -> SignificanceResult:
    p = t_test(samples, baseline, kind)
    significant = p < SIGNIFICANCE_ALPHA
    if not significant:
        direction = "similar"
    elif samples.mean() < baseline.mean():
        direction = "better"
    else:
        direction = "worse"
    return SignificanceResult(
        strategy=strategy, p_value=p, test_kind=kind, significant=significant, direction=direction
    )


def config_fingerprint(config_dict: dict) -> str:
    """Stable hash of a config mapping, for provenance stamping."""
    blob = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def build_report(
    aggregates: list[AggregateCurve],
    final_point_runs: dict[Strategy, list[RunResult]],
    system: str = "",
    test_kind: str = "unpaired_welch",
    fingerprint: str = "",
) -> ComparisonReport:
    """Assemble the per-strategy final table with p-values against random.

    Status is strictly significance-based (lower mean MAE and p < 0.05 is
    better, higher and significant is worse, anything else similar); the
    raw means stay in the table for readers applying looser labels.
    """
    if Strategy.RANDOM not in final_point_runs:
        raise ValidationError("baseline (random) runs are required")
    if test_kind not in TEST_KINDS:
        raise ValidationError(f"unknown test kind {test_kind!r}")

    def final_maes(runs: list[RunResult]) -> np.ndarray:
        return np.asarray([r.curve[-1].mae for r in runs])

    def final_r2s(runs: list[RunResult]) -> np.ndarray:
        return np.asarray([r.curve[-1].r2 for r in runs])

    baseline = final_maes(final_point_runs[Strategy.RANDOM])
    rows = []
    for strat, runs in final_point_runs.items():
        maes, r2s = final_maes(runs), final_r2s(runs)
        if strat is Strategy.RANDOM:
            p, status = None, "baseline"
        else:
            res = compare_to_baseline(strat, maes, baseline, test_kind)
            p, status = res.p_value, res.direction
        rows.append(
            FinalRow(
                strategy=strat,
                mae_mean=float(maes.mean()),
                mae_std=float(maes.std(ddof=1)) if maes.size > 1 else 0.0,
                r2_mean=float(r2s.mean()),
                r2_std=float(r2s.std(ddof=1)) if r2s.size > 1 else 0.0,
                p_value=p,
                status=status,
            )
        )
    return ComparisonReport(
        system=system,
        aggregates=aggregates,
        final_table=rows,
        test_kind=test_kind,
        config_fingerprint=fingerprint,
    )
