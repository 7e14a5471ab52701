"""Command-line front end: validate configs, run comparisons, run transfers.

Commands:
    albench validate <config.json>
    albench run <config.json> [--jobs N] [--out DIR]
    albench transfer <config.json> [--jobs N] [--out DIR]

Exit codes: 0 success, 1 config/validation error, 2 at least one run failed.
All floats in CSV and stdout tables are serialized with 17 significant
digits so reruns are byte-comparable and values round-trip bit-exactly.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import al_loop, stats
from . import dataset as ds
from . import model as mdl
from .errors import InsufficientDataError, ManifestError, ValidationError
from .strategies import Strategy

OUTPUT_DIR_ENV = "ALBENCH_OUT"
DEFAULT_OUTPUT_DIR = "albench_out"

CURVE_HEADER = "strategy,seed,iteration,labeled_count,mae_ev_per_atom,r2"
TRANSFER_HEADER = "direction," + CURVE_HEADER
REPORT_HEADER = "strategy,final_mae_mean,final_mae_std,final_r2_mean,final_r2_std,p_value,status"


def _fmt(x: float) -> str:
    return "%.17g" % x


@dataclass
class ExperimentConfig:
    """Parsed experiment file; see README for the schema."""

    system: str = "unnamed"
    manifest: str | None = None
    train_manifest: str | None = None
    test_manifest: str | None = None
    leakage_guard: bool = False
    energy_tol: float = 0.001
    split_ratio: float = 0.8
    strategies: list[str] = field(default_factory=lambda: [s.value for s in Strategy])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    init_size: int = al_loop.DEFAULT_INIT_SIZE
    batch_size: int = 15
    n_query_rounds: int = al_loop.DEFAULT_N_QUERY_ROUNDS
    ensemble_size: int = al_loop.DEFAULT_ENSEMBLE_SIZE
    alpha: float = 0.6
    learning_rate: float = 1e-3
    epochs: int = 200
    minibatch_size: int = 32
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    test_kind: str = "unpaired_welch"
    output_dir: str | None = None
    save_models: bool = False

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ValidationError(f"config not found: {path}")
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {path} is not valid JSON (line {exc.lineno}): {exc.msg}")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"config {path}: unknown key(s) {sorted(unknown)}")
        return cls(**doc)

    def hyper(self) -> mdl.TrainHyperparams:
        return mdl.TrainHyperparams(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            minibatch_size=self.minibatch_size,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
        )

    def schema(self) -> ds.FeatureSchema:
        return ds.FeatureSchema(leakage_guard=self.leakage_guard)

    def al_config(self, strategy: Strategy, seed: int, transfer=None) -> al_loop.ALRunConfig:
        return al_loop.ALRunConfig(
            strategy=strategy,
            init_size=self.init_size,
            batch_size=self.batch_size,
            n_query_rounds=self.n_query_rounds,
            ensemble_size=self.ensemble_size,
            alpha=self.alpha,
            train_hyper=self.hyper(),
            seed=seed,
            transfer=transfer,
        )

    def to_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


def check_config(config: ExperimentConfig, mode: str) -> list[tuple[str, str]]:
    """Static + manifest-backed checks; returns (code, message) violations."""
    problems: list[tuple[str, str]] = []

    if mode == "run" and not config.manifest:
        problems.append(("config.manifest_missing", "'manifest' is required for run mode"))
    if mode == "transfer" and not (config.train_manifest and config.test_manifest):
        problems.append(
            ("config.transfer_manifests_missing",
             "'train_manifest' and 'test_manifest' are both required for transfer mode")
        )

    if not config.strategies:
        problems.append(("config.empty_strategies", "at least one strategy is required"))
    valid = {s.value for s in Strategy}
    for s in config.strategies:
        if s not in valid:
            problems.append(("config.unknown_strategy", f"unknown strategy {s!r}"))
    if len(set(config.strategies)) != len(config.strategies):
        problems.append(("config.duplicate_strategies", "strategies must be distinct"))

    if not config.seeds:
        problems.append(("config.empty_seeds", "at least one seed is required"))
    if len(set(config.seeds)) != len(config.seeds):
        problems.append(("config.duplicate_seeds", "seeds must be distinct"))

    if not 0 <= config.alpha <= 1:
        problems.append(("config.bad_alpha", "alpha must lie in [0, 1]"))
    if not 0 < config.split_ratio < 1:
        problems.append(("config.bad_ratio", "split_ratio must lie in (0, 1)"))
    if not config.energy_tol > 0:
        problems.append(("config.bad_energy_tol", "energy_tol must be > 0"))
    if config.init_size < 2 or config.batch_size < 1 or config.n_query_rounds < 0:
        problems.append(
            ("config.bad_schedule_values", "init_size >= 2, batch_size >= 1, n_query_rounds >= 0 required")
        )
    if config.ensemble_size < 2:
        problems.append(("config.bad_ensemble_size", "ensemble_size must be >= 2"))
    if config.test_kind not in stats.TEST_KINDS:
        problems.append(("config.bad_test_kind", f"test_kind must be one of {stats.TEST_KINDS}"))
    try:
        config.hyper().validate()
    except ValidationError as exc:
        problems.append(("config.bad_hyper", str(exc)))
    if problems:
        return problems

    # schedule arithmetic against the actual cleaned pool; transfer mode
    # runs both directions, so both manifests must be able to act as pool
    needed = config.init_size + config.n_query_rounds * config.batch_size
    try:
        if mode == "run":
            records = al_loop.load_clean_records(config.manifest, config.energy_tol)
            parts = ds.split(len(records), config.split_ratio, config.seeds[0])
            pools = {config.manifest: parts.pool_indices.size}
        else:
            pools = {
                path: len(al_loop.load_clean_records(path, config.energy_tol))
                for path in (config.train_manifest, config.test_manifest)
            }
    except (ManifestError, ValidationError, InsufficientDataError) as exc:
        problems.append(("manifest.invalid", str(exc)))
        return problems
    for path, pool in pools.items():
        if needed > pool:
            problems.append(
                ("schedule.exceeds_pool",
                 f"schedule needs {needed} samples (init {config.init_size} + "
                 f"{config.n_query_rounds} rounds x {config.batch_size}) but the pool "
                 f"from {path} has {pool}")
            )
    return problems


# ---------------------------------------------------------------------------
# artifact writing

def _write_text(path: Path, text: str) -> None:
    tmp = path.parent / (path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _write_json(path: Path, doc: dict) -> None:
    _write_text(path, json.dumps(doc, indent=2) + "\n")


def curves_csv_text(rows: list[tuple]) -> str:
    lines = [CURVE_HEADER]
    for strategy, seed, iteration, labeled, mae, r2 in rows:
        lines.append(f"{strategy},{seed},{iteration},{labeled},{_fmt(mae)},{_fmt(r2)}")
    return "\n".join(lines) + "\n"


def read_curves_csv(path) -> list[dict]:
    """Parse a curves CSV produced by this tool (bit-exact float round-trip)."""
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    expected_tail = CURVE_HEADER.split(",")
    offset = 1 if header == TRANSFER_HEADER.split(",") else 0
    if header != (["direction"] + expected_tail if offset else expected_tail):
        raise ValidationError(f"unexpected curve CSV header: {text[0]!r}")
    rows = []
    for line in text[1:]:
        parts = line.split(",")
        row = {
            "strategy": parts[offset],
            "seed": int(parts[offset + 1]),
            "iteration": int(parts[offset + 2]),
            "labeled_count": int(parts[offset + 3]),
            "mae_ev_per_atom": float(parts[offset + 4]),
            "r2": float(parts[offset + 5]),
        }
        if offset:
            row["direction"] = parts[0]
        rows.append(row)
    return rows


def report_csv_text(report: stats.ComparisonReport) -> str:
    lines = [REPORT_HEADER]
    for row in report.final_table:
        p = "" if row.p_value is None else _fmt(row.p_value)
        lines.append(
            f"{row.strategy.value},{_fmt(row.mae_mean)},{_fmt(row.mae_std)},"
            f"{_fmt(row.r2_mean)},{_fmt(row.r2_std)},{p},{row.status}"
        )
    return "\n".join(lines) + "\n"


def read_report_csv(path) -> list[dict]:
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    if text[0] != REPORT_HEADER:
        raise ValidationError(f"unexpected report CSV header: {text[0]!r}")
    rows = []
    for line in text[1:]:
        s, mm, ms, rm, rs, p, status = line.split(",")
        rows.append(
            {
                "strategy": s,
                "final_mae_mean": float(mm),
                "final_mae_std": float(ms),
                "final_r2_mean": float(rm),
                "final_r2_std": float(rs),
                "p_value": None if p == "" else float(p),
                "status": status,
            }
        )
    return rows


def final_table_text(report: stats.ComparisonReport) -> str:
    """Human-readable final table; values are the exact report.csv strings."""
    lines = [f"final point ({report.test_kind} vs random baseline):"]
    lines.append("  strategy      mae_mean              mae_std               p_value               status")
    for row in report.final_table:
        p = "-" if row.p_value is None else _fmt(row.p_value)
        lines.append(
            f"  {row.strategy.value:<12}  {_fmt(row.mae_mean):<20}  {_fmt(row.mae_std):<20}  {p:<20}  {row.status}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# commands

def _resolve_out(args_out: str | None, config: ExperimentConfig) -> Path:
    out = args_out or config.output_dir or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_validate(config_path: str) -> int:
    try:
        config = ExperimentConfig.load(config_path)
    except ValidationError as exc:
        print(f"config.parse_error: {exc}", file=sys.stderr)
        return 1
    mode = "transfer" if (config.train_manifest or config.test_manifest) else "run"
    problems = check_config(config, mode)
    if problems:
        for code, msg in problems:
            print(f"{code}: {msg}", file=sys.stderr)
        return 1
    print(f"ok: {config_path} valid for {mode} mode "
          f"({len(config.strategies)} strategies x {len(config.seeds)} seeds)")
    return 0


def _run_error(exc: Exception) -> al_loop.ALRunError:
    return exc if isinstance(exc, al_loop.ALRunError) else al_loop.ALRunError(exc, [])


def _execute_runs(tasks, jobs: int):
    """Run (key, callable) pairs, preserving key -> result/error mapping."""
    results: dict = {}
    if jobs <= 1:
        for key, fn in tasks:
            try:
                results[key] = ("ok", fn())
            except Exception as exc:  # a failing run is recorded, not fatal
                results[key] = ("error", _run_error(exc))
        return results
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {key: pool.submit(fn) for key, fn in tasks}
        for key, fut in futures.items():
            try:
                results[key] = ("ok", fut.result())
            except Exception as exc:
                results[key] = ("error", _run_error(exc))
    return results


def _write_run_log(out: Path, parts: tuple, meta: dict, status: str, payload, checkpoint=None) -> None:
    log_path = out.joinpath(*parts[:-1]) / f"{parts[-1]}.json"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    if status == "ok":
        doc = {"run": meta, **al_loop.run_log_dict(payload, checkpoint)}
    else:
        doc = {
            "run": meta,
            "error": str(payload.cause),
            "iterations": [rec.to_dict() for rec in payload.partial_curve],
            "total_wall_time": sum(rec.wall_time for rec in payload.partial_curve),
            "final_model_checkpoint": None,
        }
    _write_json(log_path, doc)


def cmd_run(config_path: str, jobs: int = 1, out_dir: str | None = None) -> int:
    try:
        config = ExperimentConfig.load(config_path)
        problems = check_config(config, "run")
        if problems:
            for code, msg in problems:
                print(f"{code}: {msg}", file=sys.stderr)
            return 1
        records = al_loop.load_clean_records(config.manifest, config.energy_tol)
        schema = config.schema()
        features = ds.featurize_records(records, schema)
        targets = np.asarray([r.formation_energy_per_atom for r in records])
    except (ManifestError, ValidationError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = _resolve_out(out_dir, config)
    strategies = [Strategy(s) for s in config.strategies]

    def make_task(strategy: Strategy, seed: int):
        parts = ds.split(len(records), config.split_ratio, seed)
        data = al_loop.ALData(
            features=features,
            targets=targets,
            pool_indices=parts.pool_indices,
            test_indices=parts.test_indices,
        )
        cfg = config.al_config(strategy, seed)
        return lambda: al_loop.run_al(cfg, data)

    tasks = [((s, seed), make_task(s, seed)) for s in strategies for seed in config.seeds]
    results = _execute_runs(tasks, jobs)

    n_failed = 0
    all_rows = []
    by_strategy: dict[Strategy, list[al_loop.RunResult]] = {s: [] for s in strategies}
    for (strategy, seed), (status, payload) in results.items():
        meta = {"strategy": strategy.value, "seed": seed}
        checkpoint = None
        if status == "ok" and config.save_models:
            ckpt_path = out / "runs" / strategy.value / f"{seed}.checkpoint.json"
            ckpt_path.parent.mkdir(parents=True, exist_ok=True)
            mdl.save_checkpoint(payload.final_model, str(ckpt_path))
            checkpoint = str(ckpt_path)
        _write_run_log(out, ("runs", strategy.value, str(seed)), meta, status, payload, checkpoint)
        if status == "ok":
            by_strategy[strategy].append(payload)
            all_rows.extend(al_loop.curve_rows(payload, seed))
        else:
            n_failed += 1
            print(f"run failed: strategy={strategy.value} seed={seed}: {payload.cause}", file=sys.stderr)

    _write_text(out / "curves.csv", curves_csv_text(all_rows))

    report_ready = (
        Strategy.RANDOM in by_strategy
        and all(len(v) >= 2 for v in by_strategy.values())
    )
    if report_ready:
        aggregates = [stats.aggregate(by_strategy[s]) for s in strategies]
        report = stats.build_report(
            aggregates,
            by_strategy,
            system=config.system,
            test_kind=config.test_kind,
            fingerprint=stats.config_fingerprint(config.to_dict()),
        )
        _write_json(out / "report.json", report.to_dict())
        _write_text(out / "report.csv", report_csv_text(report))
        print(final_table_text(report))
    else:
        print(
            "report skipped: needs the random baseline plus >= 2 successful seeds per strategy",
            file=sys.stderr,
        )

    print(f"wrote artifacts to {out}")
    return 2 if n_failed else 0


def cmd_transfer(config_path: str, jobs: int = 1, out_dir: str | None = None) -> int:
    try:
        config = ExperimentConfig.load(config_path)
        problems = check_config(config, "transfer")
        if problems:
            for code, msg in problems:
                print(f"{code}: {msg}", file=sys.stderr)
            return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    out = _resolve_out(out_dir, config)
    strategies = [Strategy(s) for s in config.strategies]
    directions = {
        "a_to_b": (config.train_manifest, config.test_manifest),
        "b_to_a": (config.test_manifest, config.train_manifest),
    }

    tasks = []
    for direction, manifests in directions.items():
        for strategy in strategies:
            for seed in config.seeds:
                cfg = config.al_config(strategy, seed, transfer=manifests)
                tasks.append(
                    (
                        (direction, strategy, seed),
                        (lambda c=cfg: al_loop.run_transfer(c, config.schema(), config.energy_tol)),
                    )
                )
    results = _execute_runs(tasks, jobs)

    n_failed = 0
    rows = []
    for (direction, strategy, seed), (status, payload) in results.items():
        meta = {"direction": direction, "strategy": strategy.value, "seed": seed}
        _write_run_log(out, ("runs", direction, strategy.value, str(seed)), meta, status, payload)
        if status == "ok":
            for row in al_loop.curve_rows(payload, seed):
                rows.append((direction, *row))
        else:
            n_failed += 1
            print(
                f"run failed: direction={direction} strategy={strategy.value} seed={seed}: {payload.cause}",
                file=sys.stderr,
            )

    lines = [TRANSFER_HEADER]
    for direction, strategy, seed, iteration, labeled, mae, r2 in rows:
        lines.append(f"{direction},{strategy},{seed},{iteration},{labeled},{_fmt(mae)},{_fmt(r2)}")
    _write_text(out / "transfer_curves.csv", "\n".join(lines) + "\n")

    print(f"wrote artifacts to {out}")
    return 2 if n_failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="albench",
        description="Active-learning strategy benchmark for formation-energy regression",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="check a config file without running")
    p_val.add_argument("config")

    p_run = sub.add_parser("run", help="run every (strategy x seed) combination")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1, help="concurrent runs (default 1)")
    p_run.add_argument("--out", default=None, help=f"output dir (default ${OUTPUT_DIR_ENV} or {DEFAULT_OUTPUT_DIR})")

    p_tr = sub.add_parser("transfer", help="cross-database runs in both directions")
    p_tr.add_argument("config")
    p_tr.add_argument("--jobs", type=int, default=1)
    p_tr.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.config)
    if args.command == "run":
        return cmd_run(args.config, jobs=args.jobs, out_dir=args.out)
    if args.command == "transfer":
        return cmd_transfer(args.config, jobs=args.jobs, out_dir=args.out)
    parser.error(f"unknown command {args.command!r}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
