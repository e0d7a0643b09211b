"""Config-driven command line: run experiments, verify theory, inspect spectra.

Subcommands:
  run       train continual-learning configurations and persist RunReports
  theory    run the forgetting-bound verification suite
  spectrum  singular-value statistics / MP thresholding / pruning of a checkpoint
  report    merge RunReport JSONs into a summary table

Configs are JSON with a versioned schema; unknown keys are errors so typos in
retention parameters cannot pass silently. All randomness in a run flows from
its master seed through named substreams (data, init, batching), and any
artifact written here can be re-read by the same tool. Relative output
directories resolve against $ASVD_OUTPUT_ROOT when it is set.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .continual import (
    InterferenceBreachError,
    OptimizerConfig,
    PROJECTED_TRAINERS,
    TRAINER_KINDS,
    TrainingDivergedError,
    train_continual,
)
from .metrics import AccuracyMatrix, RunReport, average_accuracy, backward_transfer, suite_delta
from .network import (
    ACTIVATIONS,
    CheckpointFormatError,
    NetworkState,
    load_checkpoint,
    save_checkpoint,
)
from .seeding import substream
from .subspace import RetentionConfig
from .tasks import FAMILIES, TaskStreamSpec, evaluate, generate
from .theory import (
    HessianBundle,
    bound_hierarchy_experiment,
    make_hierarchy_instance,
    rayleigh_bound_check,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "cmd_report",
    "cmd_run",
    "cmd_spectrum",
    "cmd_theory",
    "load_experiment_config",
    "load_theory_config",
    "main",
    "run_single",
]

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "ASVD_OUTPUT_ROOT"


class ConfigError(ValueError):
    """Invalid or unknown configuration content; names the offending key."""


def _require_keys(obj: dict, allowed: dict, context: str) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{context} must be a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown config key '{context}.{key}'")
    for key, required in allowed.items():
        if required and key not in obj:
            raise ConfigError(f"missing required config key '{context}.{key}'")


def _typed(obj: dict, key: str, kind, context: str, default=None):
    if key not in obj or obj[key] is None:
        return default
    value = obj[key]
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"config key '{context}.{key}' has the wrong type")
    return value


@dataclass
class ExperimentConfig:
    """Validated, fully-resolved experiment description."""

    raw: dict
    output_dir: str
    overwrite: bool
    seeds: list[int]
    permutations: int
    trainer: str
    stream: dict
    model: dict
    optimizer: OptimizerConfig
    retention: RetentionConfig
    fixed_fraction: float | None
    importance_samples: int
    importance_split: str
    eval_suite: dict | None
    debug_invariant_checks: bool
    warnings: list[str] = field(default_factory=list)


_STREAM_KEYS = {
    "family": True,
    "task_count": False,
    "train_per_task": False,
    "test_per_task": False,
    "dimension": False,
    "noise": False,
    "seed": False,
    "class_count": False,
    "target_dim": False,
    "radius": False,
    "anchor_scale": False,
}


def _parse_stream(obj: dict, context: str) -> dict:
    _require_keys(obj, _STREAM_KEYS, context)
    family = _typed(obj, "family", str, context)
    if family not in FAMILIES:
        raise ConfigError(f"'{context}.family' must be one of {FAMILIES}")
    out = {"family": family}
    for key, kind in (
        ("task_count", int),
        ("train_per_task", int),
        ("test_per_task", int),
        ("dimension", int),
        ("class_count", int),
        ("target_dim", int),
        ("seed", int),
    ):
        value = _typed(obj, key, kind, context)
        if value is not None:
            out[key] = value
    for key in ("noise", "radius", "anchor_scale"):
        value = _typed(obj, key, float, context)
        if value is not None:
            out[key] = value
    return out


def _parse_retention(obj: dict, context: str) -> RetentionConfig:
    _require_keys(obj, {"mrr": True, "trr": True}, context)
    try:
        return RetentionConfig(
            mrr=_typed(obj, "mrr", float, context), trr=_typed(obj, "trr", float, context)
        )
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _parse_optimizer(obj: dict, context: str) -> OptimizerConfig:
    _require_keys(
        obj,
        {
            "kind": False,
            "learning_rate": False,
            "momentum": False,
            "epochs_per_task": False,
            "batch_size": False,
        },
        context,
    )
    kwargs = {}
    for key, kind in (
        ("kind", str),
        ("learning_rate", float),
        ("momentum", float),
        ("epochs_per_task", int),
        ("batch_size", int),
    ):
        value = _typed(obj, key, kind, context)
        if value is not None:
            kwargs[key] = value
    try:
        return OptimizerConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{context}: {exc}") from exc


def _parse_model(obj: dict, context: str) -> dict:
    _require_keys(obj, {"hidden": False, "activation": False, "init_scale": False}, context)
    hidden = obj.get("hidden", [16, 16])
    if not isinstance(hidden, list) or not all(
        isinstance(h, int) and h >= 1 for h in hidden
    ):
        raise ConfigError(f"'{context}.hidden' must be a list of positive ints")
    activation = _typed(obj, "activation", str, context, "tanh")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"'{context}.activation' must be one of {ACTIVATIONS}")
    init_scale = _typed(obj, "init_scale", float, context, 1.0)
    if init_scale <= 0:
        raise ConfigError(f"'{context}.init_scale' must be positive")
    return {"hidden": hidden, "activation": activation, "init_scale": init_scale}


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    _require_keys(
        raw,
        {
            "schema_version": True,
            "output_dir": True,
            "overwrite": False,
            "seeds": True,
            "task_order_permutations": False,
            "trainer": True,
            "stream": True,
            "model": False,
            "optimizer": False,
            "retention": False,
            "fixed_fraction": False,
            "importance_samples": False,
            "importance_split": False,
            "eval_suite": False,
            "debug_invariant_checks": False,
        },
        "config",
    )
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {raw['schema_version']}, expected {SCHEMA_VERSION}"
        )
    seeds = raw["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(
        isinstance(s, int) and s >= 0 for s in seeds
    ):
        raise ConfigError("'config.seeds' must be a nonempty list of non-negative ints")
    trainer = raw["trainer"]
    if trainer not in TRAINER_KINDS:
        raise ConfigError(f"'config.trainer' must be one of {TRAINER_KINDS}")
    permutations = _typed(raw, "task_order_permutations", int, "config", 1)
    if permutations < 1:
        raise ConfigError("'config.task_order_permutations' must be >= 1")
    importance_split = _typed(raw, "importance_split", str, "config", "train")
    if importance_split not in ("train", "test"):
        raise ConfigError("'config.importance_split' must be 'train' or 'test'")
    importance_samples = _typed(raw, "importance_samples", int, "config", 128)
    if importance_samples < 1:
        raise ConfigError("'config.importance_samples' must be >= 1")
    fixed_fraction = _typed(raw, "fixed_fraction", float, "config")
    if fixed_fraction is not None and not 0.0 <= fixed_fraction <= 1.0:
        raise ConfigError("'config.fixed_fraction' must be in [0, 1]")
    eval_suite = None
    if raw.get("eval_suite") is not None:
        eval_suite = _parse_stream(raw["eval_suite"], "config.eval_suite")
    return ExperimentConfig(
        raw=raw,
        output_dir=_typed(raw, "output_dir", str, "config"),
        overwrite=bool(_typed(raw, "overwrite", bool, "config", False)),
        seeds=list(seeds),
        permutations=permutations,
        trainer=trainer,
        stream=_parse_stream(raw["stream"], "config.stream"),
        model=_parse_model(raw.get("model", {}), "config.model"),
        optimizer=_parse_optimizer(raw.get("optimizer", {}), "config.optimizer"),
        retention=(
            _parse_retention(raw["retention"], "config.retention")
            if "retention" in raw
            else RetentionConfig()
        ),
        fixed_fraction=fixed_fraction,
        importance_samples=importance_samples,
        importance_split=importance_split,
        eval_suite=eval_suite,
        debug_invariant_checks=bool(
            _typed(raw, "debug_invariant_checks", bool, "config", True)
        ),
    )


def _resolve_stream_spec(stream: dict, run_seed: int) -> TaskStreamSpec:
    kwargs = dict(stream)
    kwargs.setdefault("seed", run_seed)
    try:
        return TaskStreamSpec(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"config.stream: {exc}") from exc


def _build_net(cfg_model: dict, spec: TaskStreamSpec, run_seed: int) -> NetworkState:
    if spec.family == "subspace_regression":
        out_dim = spec.target_dim
    else:
        out_dim = spec.class_count
    dims = [spec.dimension, *cfg_model["hidden"], out_dim]
    return NetworkState.initialize(
        dims,
        substream(run_seed, "init"),
        hidden_activation=cfg_model["activation"],
        init_scale=cfg_model["init_scale"],
    )


def task_order_for(permutation_index: int, task_count: int) -> list[int]:
    """Permutation of task positions; index 0 is the canonical order and
    higher indices are seed-independent shuffles keyed only by the index."""
    if permutation_index == 0:
        return list(range(task_count))
    return [int(i) for i in substream(permutation_index, "task_order").permutation(task_count)]


def run_single(cfg: ExperimentConfig, seed: int, permutation_index: int) -> tuple[RunReport, NetworkState]:
    """Execute one (seed, permutation) run and assemble its RunReport."""
    start = time.perf_counter()
    spec = _resolve_stream_spec(cfg.stream, seed)
    base_stream = generate(spec)
    order = task_order_for(permutation_index, spec.task_count)
    stream = [base_stream[i] for i in order]
    net = _build_net(cfg.model, spec, seed)

    suite_tasks = None
    ability_before = ability_after = ability_deltas = None
    if cfg.eval_suite is not None:
        suite_kwargs = dict(cfg.eval_suite)
        suite_kwargs.setdefault("seed", 104729)  # held out: fixed, not the run seed
        suite_spec = TaskStreamSpec(**suite_kwargs)
        if suite_spec.dimension != spec.dimension:
            raise ConfigError("eval_suite dimension must match the stream dimension")
        suite_tasks = generate(suite_spec)
        ability_before = [evaluate(net, t) for t in suite_tasks]

    net, matrix, diag = train_continual(
        net,
        stream,
        cfg.trainer,
        cfg.optimizer,
        cfg.retention,
        seed=seed,
        fixed_fraction=cfg.fixed_fraction,
        importance_samples=cfg.importance_samples,
        importance_split=cfg.importance_split,
        check_every_step=cfg.debug_invariant_checks,
    )

    if suite_tasks is not None:
        ability_after = [evaluate(net, t) for t in suite_tasks]
        ability_deltas = [a - b for a, b in zip(ability_after, ability_before)]

    config_echo = dict(cfg.raw)
    config_echo["resolved_stream_seed"] = spec.seed
    report = RunReport(
        config=config_echo,
        seed=seed,
        permutation_index=permutation_index,
        task_order=[base_stream[i].task_id for i in order],
        trainer=cfg.trainer,
        accuracy_matrix=matrix,
        aa=average_accuracy(matrix),
        bwt=backward_transfer(matrix, matrix.task_count),
        interference_max=diag.interference_max,
        first_order_inner_max=diag.first_order_inner_max,
        importance_profiles=diag.importance_profiles,
        rank_allocations=diag.rank_allocations,
        ability_before=ability_before,
        ability_after=ability_after,
        ability_deltas=ability_deltas,
        warnings=diag.warnings,
        wall_clock_seconds=time.perf_counter() - start,
    )
    return report, net


def _resolve_output_dir(path_str: str, overwrite: bool) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV)
    path = Path(path_str)
    if root and not path.is_absolute():
        path = Path(root) / path
    if path.exists() and any(path.iterdir()) and not overwrite:
        raise ConfigError(
            f"output directory {path} already exists and is not empty; "
            "set overwrite to proceed"
        )
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv_atomic(path: Path, header: list[str], rows: list[list]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    os.replace(tmp, path)


def cmd_run(args) -> int:
    cfg = load_experiment_config(args.config)
    if args.overwrite:
        cfg.overwrite = True
    out_dir = _resolve_output_dir(cfg.output_dir, cfg.overwrite)
    header = [
        "seed",
        "permutation",
        "trainer",
        "aa",
        "bwt",
        "interference_max",
        "first_order_inner_max",
        "mean_ability_delta",
        "warnings",
    ]
    rows = []
    for seed in cfg.seeds:
        for perm in range(cfg.permutations):
            report, net = run_single(cfg, seed, perm)
            report.save(out_dir / f"report_s{seed}_p{perm}.json")
            save_checkpoint(net, out_dir / f"final_s{seed}_p{perm}.ckpt")
            ability = (
                suite_delta(report.ability_before, report.ability_after)
                if report.ability_deltas is not None
                else ""
            )
            rows.append(
                [
                    seed,
                    perm,
                    cfg.trainer,
                    repr(report.aa),
                    repr(report.bwt),
                    "" if report.interference_max is None else repr(report.interference_max),
                    ""
                    if report.first_order_inner_max is None
                    else repr(report.first_order_inner_max),
                    "" if ability == "" else repr(ability),
                    len(report.warnings),
                ]
            )
            print(
                f"run seed={seed} perm={perm} trainer={cfg.trainer} "
                f"aa={report.aa:.4f} bwt={report.bwt:+.4f}"
            )
    _write_csv_atomic(out_dir / "summary.csv", header, rows)
    print(f"wrote {len(rows)} run(s) to {out_dir}")
    return 0


_THEORY_KEYS = {
    "schema_version": True,
    "output_dir": True,
    "overwrite": False,
    "seed": False,
    "hierarchy_trials": False,
    "block_count": False,
    "block_dim": False,
    "update_norm_sq": False,
    "retention": False,
    "fixed_fraction": False,
    "rayleigh_trials": False,
    "rayleigh_dim": False,
    "activation": False,
}


@dataclass
class TheoryConfig:
    output_dir: str
    overwrite: bool
    seed: int
    hierarchy_trials: int
    block_count: int
    block_dim: int
    update_norm_sq: float
    retention: RetentionConfig
    fixed_fraction: float
    rayleigh_trials: int
    rayleigh_dim: int
    activation: str


def load_theory_config(path) -> TheoryConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON in {path}: {exc}") from exc
    _require_keys(raw, _THEORY_KEYS, "config")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {raw['schema_version']}")
    activation = _typed(raw, "activation", str, "config", "tanh")
    if activation not in ("tanh", "identity"):
        # Hessian work needs smoothness; reject before any compute.
        raise ConfigError("'config.activation' must be 'tanh' or 'identity'")
    cfg = TheoryConfig(
        output_dir=_typed(raw, "output_dir", str, "config"),
        overwrite=bool(_typed(raw, "overwrite", bool, "config", False)),
        seed=_typed(raw, "seed", int, "config", 0),
        hierarchy_trials=_typed(raw, "hierarchy_trials", int, "config", 50),
        block_count=_typed(raw, "block_count", int, "config", 3),
        block_dim=_typed(raw, "block_dim", int, "config", 8),
        update_norm_sq=_typed(raw, "update_norm_sq", float, "config", 1e-2),
        retention=(
            _parse_retention(raw["retention"], "config.retention")
            if "retention" in raw
            else RetentionConfig()
        ),
        fixed_fraction=_typed(raw, "fixed_fraction", float, "config", 0.5),
        rayleigh_trials=_typed(raw, "rayleigh_trials", int, "config", 1000),
        rayleigh_dim=_typed(raw, "rayleigh_dim", int, "config", 24),
        activation=activation,
    )
    if cfg.hierarchy_trials < 1 or cfg.rayleigh_trials < 1:
        raise ConfigError("trial counts must be >= 1")
    return cfg


def _random_symmetric_bundle(dim: int, rng: np.random.Generator) -> HessianBundle:
    q = np.linalg.qr(rng.standard_normal((dim, dim)))[0]
    lam = np.sort(rng.uniform(-1.0, 3.0, size=dim))[::-1]
    h = (q * lam) @ q.T
    h = 0.5 * (h + h.T)
    from .theory import _bundle_from_matrix  # single block

    return _bundle_from_matrix(h, [dim], np.zeros(dim))


def cmd_theory(args) -> int:
    cfg = load_theory_config(args.config)
    if args.overwrite:
        cfg.overwrite = True
    out_dir = _resolve_output_dir(cfg.output_dir, cfg.overwrite)
    failures = 0
    reports = []
    rows = []
    for trial in range(cfg.hierarchy_trials):
        bundle, importance, retention, fixed_fraction, c = make_hierarchy_instance(
            cfg.seed * 100003 + trial,
            block_count=cfg.block_count,
            block_dim=cfg.block_dim,
            retention=cfg.retention,
            fixed_fraction=cfg.fixed_fraction,
            c=cfg.update_norm_sq,
        )
        report = bound_hierarchy_experiment(bundle, importance, retention, fixed_fraction, c)
        realized_ok = all(
            report.observed_forgetting[name] <= bound + 1e-9
            for name, bound in (
                ("full_finetune", report.bound_full),
                ("fixed_rank", report.bound_fixed),
                ("adaptive_svd", report.bound_adaptive),
            )
        )
        ok = report.ordering_satisfied and realized_ok
        failures += 0 if ok else 1
        reports.append({"trial": trial, **report.to_json_dict(), "realized_ok": realized_ok})
        rows.append(
            [
                trial,
                repr(report.bound_full),
                repr(report.bound_fixed),
                repr(report.bound_adaptive),
                repr(report.observed_forgetting["full_finetune"]),
                repr(report.observed_forgetting["fixed_rank"]),
                repr(report.observed_forgetting["adaptive_svd"]),
                "strict" if report.strict else "non-strict",
                "PASS" if ok else "FAIL",
            ]
        )
        print(
            f"trial {trial:03d}: full={report.bound_full:.4e} "
            f"fixed={report.bound_fixed:.4e} adaptive={report.bound_adaptive:.4e} "
            f"{'strict' if report.strict else 'non-strict'} "
            f"{'PASS' if ok else 'FAIL'}"
        )

    rayleigh_failures = 0
    rng = substream(cfg.seed, "rayleigh")
    for trial in range(cfg.rayleigh_trials):
        bundle = _random_symmetric_bundle(cfg.rayleigh_dim, rng)
        delta = rng.standard_normal(cfg.rayleigh_dim)
        try:
            rayleigh_bound_check(bundle, delta)
        except RuntimeError:
            rayleigh_failures += 1
    print(
        f"rayleigh: {cfg.rayleigh_trials - rayleigh_failures}/{cfg.rayleigh_trials} "
        f"trials within bound"
    )

    with open(out_dir / "bound_reports.json", "w") as fh:
        json.dump(reports, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _write_csv_atomic(
        out_dir / "theory_summary.csv",
        [
            "trial",
            "bound_full",
            "bound_fixed",
            "bound_adaptive",
            "realized_full",
            "realized_fixed",
            "realized_adaptive",
            "strictness",
            "status",
        ],
        rows,
    )
    total_failures = failures + rayleigh_failures
    print(
        f"theory suite: {cfg.hierarchy_trials - failures}/{cfg.hierarchy_trials} "
        f"hierarchy trials passed, {rayleigh_failures} Rayleigh violations"
    )
    return 0 if total_failures == 0 else 1


def cmd_spectrum(args) -> int:
    from .spectrum import (
        PruneSpec,
        classify_noise_fraction,
        prune_low_rank,
        spectrum_stats,
    )
    from .linalg import svd as _svd

    net = load_checkpoint(args.checkpoint)
    out_dir = _resolve_output_dir(args.out, args.overwrite)
    stats = spectrum_stats(net)
    header = ["layer", "rows", "cols", "sigma_min", "sigma_max", "sigma_mean", "sigma_median"]
    rows = [
        [
            s.layer_index,
            s.rows,
            s.cols,
            repr(s.sigma_min),
            repr(s.sigma_max),
            repr(s.sigma_mean),
            repr(s.sigma_median),
        ]
        for s in stats
    ]
    if args.mp_threshold:
        header += ["mp_threshold", "fraction_above", "note"]
        for row, s in zip(rows, stats):
            sigma = _svd(net.weights[s.layer_index]).sigma
            fraction, threshold, note = classify_noise_fraction(
                sigma, s.rows, s.cols, noise_sigma=args.noise_sigma, scale=args.mp_scale
            )
            row += [repr(threshold), repr(fraction), note or ""]
            print(
                f"layer {s.layer_index}: {fraction:.1%} of singular values above "
                f"MP threshold {threshold:.4g}"
                + (f" ({note})" if note else "")
            )
    _write_csv_atomic(out_dir / "spectrum_stats.csv", header, rows)

    if args.prune_fraction is not None:
        if args.eval_stream is None:
            raise ConfigError("--prune-fraction requires --eval-stream")
        with open(args.eval_stream) as fh:
            try:
                stream_raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON in {args.eval_stream}: {exc}") from exc
        stream_cfg = _parse_stream(stream_raw, "eval_stream")
        stream_cfg.setdefault("seed", 0)
        tasks = generate(TaskStreamSpec(**stream_cfg))
        layers = None
        if args.prune_layers:
            layers = tuple(int(i) for i in args.prune_layers.split(","))
        spec = PruneSpec(layers=layers, fraction=args.prune_fraction)
        pruned, deltas = prune_low_rank(net, spec, tasks)
        before = [evaluate(net, t) for t in tasks]
        _write_csv_atomic(
            out_dir / "prune_report.csv",
            ["task_id", "metric_before", "metric_after", "delta"],
            [
                [t.task_id, repr(b), repr(b + d), repr(d)]
                for t, b, d in zip(tasks, before, deltas)
            ],
        )
        save_checkpoint(pruned, out_dir / "pruned.ckpt")
        print(
            f"pruned to fraction {args.prune_fraction}: mean metric delta "
            f"{np.mean(deltas):+.6f}"
        )
    return 0


def cmd_report(args) -> int:
    paths = sorted(Path(args.directory).glob("report_*.json"))
    if not paths:
        raise ConfigError(f"no report_*.json files found in {args.directory}")
    rows = []
    by_trainer: dict[str, list[RunReport]] = {}
    for path in paths:
        report = RunReport.load(path)
        by_trainer.setdefault(report.trainer, []).append(report)
        rows.append(
            [
                path.name,
                report.trainer,
                report.seed,
                report.permutation_index,
                repr(report.aa),
                repr(report.bwt),
            ]
        )
    _write_csv_atomic(
        Path(args.directory) / "merged.csv",
        ["report", "trainer", "seed", "permutation", "aa", "bwt"],
        rows,
    )
    for trainer, reports in sorted(by_trainer.items()):
        aas = np.array([r.aa for r in reports])
        bwts = np.array([r.bwt for r in reports])
        print(
            f"{trainer}: aa {aas.mean():.4f} +- {aas.std():.4f}, "
            f"bwt {bwts.mean():+.4f} +- {bwts.std():.4f} ({len(reports)} runs)"
        )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asvd",
        description="Adaptive-SVD subspace continual learning: runs, theory checks, spectra.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a continual-learning experiment config")
    p_run.add_argument("config", help="path to the experiment JSON config")
    p_run.add_argument("--overwrite", action="store_true", help="allow reusing the output dir")
    p_run.set_defaults(func=cmd_run)

    p_theory = sub.add_parser("theory", help="run the forgetting-bound verification suite")
    p_theory.add_argument("config", help="path to the theory JSON config")
    p_theory.add_argument("--overwrite", action="store_true")
    p_theory.set_defaults(func=cmd_theory)

    p_spec = sub.add_parser("spectrum", help="singular-value diagnostics for a checkpoint")
    p_spec.add_argument("checkpoint", help="path to an ASVD checkpoint")
    p_spec.add_argument("--out", default="spectrum_out", help="output directory")
    p_spec.add_argument("--overwrite", action="store_true")
    p_spec.add_argument("--mp-threshold", action="store_true", help="classify noise via MP edge")
    p_spec.add_argument("--noise-sigma", type=float, default=None)
    p_spec.add_argument("--mp-scale", type=float, default=1.0)
    p_spec.add_argument("--prune-fraction", type=float, default=None)
    p_spec.add_argument("--prune-layers", default=None, help="comma-separated layer indices")
    p_spec.add_argument("--eval-stream", default=None, help="stream-spec JSON for evaluation")
    p_spec.set_defaults(func=cmd_spectrum)

    p_rep = sub.add_parser("report", help="merge RunReport JSONs into a summary")
    p_rep.add_argument("directory", help="directory containing report_*.json")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CheckpointFormatError as exc:
        print(f"checkpoint format error: {exc}", file=sys.stderr)
        return 2
    except (TrainingDivergedError, InterferenceBreachError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
