"""Command line front end.

Every subcommand reads one RunConfig (file, environment, flags), writes its
outputs under out_dir/<run-id>/ and drops a manifest.json next to them. The
run id is the subcommand name plus a digest of the effective configuration,
so re-running a command with the same inputs overwrites the same directory
with byte-identical files. Exit code 0 means success; any workbench error
prints a single diagnostic line on stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
from dataclasses import asdict, replace

import numpy as np

from . import __version__
from .balance import smote_pc
from .config import RunConfig, config_digest, load_config
from .curve import fit_curve
from .data import (
    CANONICAL_METRIC_ORDER,
    ChangeMetrics,
    Changeset,
    Dataset,
    load_csv,
    log_transform,
    remove_collinear,
    save_csv,
)
from .errors import (
    ConfigError,
    InsufficientDataError,
    JitsdpError,
    UndefinedMetricError,
    UnsupportedDatasetError,
)
from .experiments import run_rq1, run_rq4, write_comparisons_csv, write_reports_jsonl
from .metrics import auc_roc, classification_metrics
from .nn import (
    WindowedBatch,
    load_model,
    predict,
    save_model,
    sliding_windows,
    train_deepicp,
    train_forecaster,
    train_logistic,
)
from .stats import (
    chi_square_independence,
    drift_series,
    drift_to_csv,
    intersecting_fraction,
    pair_table,
    triplet_distribution,
)
from .synth import ManifoldConfig, drifting_dataset, joint_signal_dataset, manifold_dataset, markov_dataset

_RQ4_VARIANTS = {
    "rq4a": "smotepc_ablation",
    "rq4b": "forecast_ablation",
    "rq4c": "model_age",
    "rq4d": "incremental",
    "rq4e": "baseline_compare",
}


# --------------------------------------------------------------- plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jitsdp",
        description="Concept-preserving incremental defect prediction workbench.",
    )
    parser.add_argument("--version", action="version", version=f"jitsdp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="TOML", help="run configuration file")
    common.add_argument("--seed", type=int, help="root random seed")
    common.add_argument("--out", metavar="DIR", help="output directory root")
    common.add_argument("--input", metavar="CSV", help="changeset CSV to read")
    common.add_argument(
        "--features", metavar="NAMES",
        help="comma-separated metric columns to treat as active features",
    )

    sub.add_parser(
        "preprocess", parents=[common],
        help="log-transform metrics and drop rank-correlated columns",
    )
    sub.add_parser(
        "analyze-relationship", parents=[common],
        help="fix/defect contingency, chi-square test, label triplet distribution",
    )
    sub.add_parser(
        "analyze-drift", parents=[common],
        help="windowed label transition frequencies over time",
    )
    sub.add_parser(
        "fit-curve", parents=[common],
        help="fit a principal curve to the active feature matrix",
    )
    sub.add_parser(
        "balance", parents=[common],
        help="augment minority classes with curve-gated SMOTE and write the result",
    )

    p_train = sub.add_parser("train", parents=[common], help="fit a model on an ordered split")
    p_train.add_argument(
        "--model", choices=("deepicp", "forecaster", "logistic"), default="deepicp",
    )
    p_train.add_argument(
        "--no-forecast", action="store_true",
        help="ablate the history branch of the fused model",
    )
    p_train.add_argument(
        "--no-balance", action="store_true",
        help="train on the raw class ratio instead of balancing first",
    )

    p_eval = sub.add_parser("evaluate", parents=[common], help="score a saved model on a CSV")
    p_eval.add_argument("--model-dir", required=True, metavar="DIR",
                        help="directory holding model.json and scaler.json")

    p_exp = sub.add_parser("experiment", parents=[common], help="run one research question")
    p_exp.add_argument("question", choices=("rq1",) + tuple(sorted(_RQ4_VARIANTS)))
    p_exp.add_argument("--jobs", type=int, default=1,
                       help="worker processes across experiment cells")

    p_synth = sub.add_parser("synth", parents=[common], help="generate a synthetic changeset CSV")
    p_synth.add_argument("kind", choices=("manifold", "markov", "drifting", "joint"))
    p_synth.add_argument("--n", type=int, default=2000, help="number of rows")
    p_synth.add_argument("--drift-mode", choices=("rotate", "flip"), default="rotate")

    return parser


def _configure(args: argparse.Namespace) -> RunConfig:
    features = getattr(args, "features", None)
    overrides = {
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out", None),
        "input.path": getattr(args, "input", None),
        "input.features": features.split(",") if features else None,
    }
    return load_config(args.config, overrides=overrides)


def _load_input(config: RunConfig) -> Dataset:
    if config.input.path is None:
        raise ConfigError("an input CSV is required; pass --input or set [input] path")
    dataset = load_csv(config.input.path, config.input.schema_map or None, config.input.project)
    if config.input.features is not None:
        unknown = [f for f in config.input.features if f not in CANONICAL_METRIC_ORDER]
        if unknown:
            raise ConfigError(f"unknown feature name(s): {', '.join(unknown)}")
        dataset = replace(dataset, feature_names=tuple(config.input.features))
    return dataset


def _start_run(
    config: RunConfig, command: str, extra: dict, name_parts: tuple[str, ...] = ()
) -> tuple[str, str]:
    """Create the run directory and return (path, digest over config+args)."""
    payload = {"command": command, "config": asdict(config), **extra}
    digest = hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()[:12]
    run_dir = os.path.join(config.out_dir, "-".join([command, *name_parts, digest]))
    os.makedirs(run_dir, exist_ok=True)
    return run_dir, digest


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finish_run(run_dir: str, command: str, config: RunConfig, digest: str, extra: dict) -> int:
    manifest = {
        "command": command,
        **extra,
        "run_digest": digest,
        "config_digest": config_digest(config),
        "seed": config.seed,
        "config": asdict(config),
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "jitsdp": __version__,
        },
    }
    _write_json(os.path.join(run_dir, "manifest.json"), manifest)
    print(run_dir)
    return 0


# ------------------------------------------------------------- subcommands


def _cmd_preprocess(args: argparse.Namespace) -> int:
    config = _configure(args)
    dataset = _load_input(config)
    removed: list[str] = []
    if config.preprocess.log_transform:
        dataset = log_transform(dataset)
    if config.preprocess.drop_collinear:
        dataset, removed = remove_collinear(dataset, config.preprocess.collinear_threshold)
    run_dir, digest = _start_run(config, "preprocess", {})
    save_csv(dataset, os.path.join(run_dir, "processed.csv"))
    _write_json(
        os.path.join(run_dir, "features.json"),
        {"retained": list(dataset.feature_names), "removed": removed},
    )
    return _finish_run(run_dir, "preprocess", config, digest, {})


def _cmd_analyze_relationship(args: argparse.Namespace) -> int:
    config = _configure(args)
    dataset = _load_input(config)
    table = pair_table(dataset)
    statistic, p_value = chi_square_independence(table)
    triplets = triplet_distribution(dataset)
    try:
        shared_files = intersecting_fraction(dataset)
    except UnsupportedDatasetError:
        shared_files = None  # dataset carries no modified-file lists
    run_dir, digest = _start_run(config, "analyze-relationship", {})
    _write_json(
        os.path.join(run_dir, "relationship.json"),
        {
            "pair_counts": {
                "n00": table.n00, "n01": table.n01,
                "n10": table.n10, "n11": table.n11,
                "total": table.total,
            },
            "chi_square": {"statistic": statistic, "p_value": p_value},
            "triplets": {
                "p": triplets.p,
                "n": triplets.n,
                "ci_half_width": triplets.ci_half_width,
            },
            "intersecting_fraction": shared_files,
        },
    )
    return _finish_run(run_dir, "analyze-relationship", config, digest, {})


def _cmd_analyze_drift(args: argparse.Namespace) -> int:
    config = _configure(args)
    dataset = _load_input(config)
    series = drift_series(dataset, config.preprocess.drift_window_seconds)
    run_dir, digest = _start_run(config, "analyze-drift", {})
    drift_to_csv(series, os.path.join(run_dir, "drift.csv"))
    return _finish_run(run_dir, "analyze-drift", config, digest, {})


def _cmd_fit_curve(args: argparse.Namespace) -> int:
    config = _configure(args)
    dataset = _load_input(config)
    curve, report = fit_curve(dataset.features(), config.curve)
    run_dir, digest = _start_run(config, "fit-curve", {})
    with open(os.path.join(run_dir, "curve.json"), "w", encoding="utf-8") as fh:
        fh.write(curve.to_json())
        fh.write("\n")
    if curve.dim >= 2:
        # plotting plane: la against nf when both are active, else the
        # first two feature columns
        names = dataset.feature_names
        if "la" in names and "nf" in names:
            pair = (names.index("la"), names.index("nf"))
        else:
            pair = (0, 1)
        with open(os.path.join(run_dir, "projection.csv"), "w", encoding="utf-8") as fh:
            fh.write(f"{names[pair[0]]},{names[pair[1]]}\n")
            for vertex in curve.vertices:
                fh.write(f"{float(vertex[pair[0]])!r},{float(vertex[pair[1]])!r}\n")
    _write_json(
        os.path.join(run_dir, "fit_report.json"),
        {
            "iterations": report.iterations,
            "final_distance": report.final_distance,
            "converged": report.converged,
            "distance_history": list(report.distance_history),
        },
    )
    return _finish_run(run_dir, "fit-curve", config, digest, {})


def _synthetic_changesets(dataset: Dataset, balanced) -> Dataset:
    """Wrap a balanced feature matrix back into changeset rows.

    Synthetic rows copy every inactive metric, the timestamp and the label
    context from the row they were interpolated from; active features take
    the interpolated values. churn is re-derived unless it was active."""
    n_original = len(dataset)
    rows = list(dataset.changesets)
    names = dataset.feature_names
    for i in range(n_original, len(balanced.labels)):
        base = dataset.changesets[int(balanced.base_index[i])]
        values = {m: base.metrics.value(m) for m in CANONICAL_METRIC_ORDER}
        for j, name in enumerate(names):
            values[name] = float(balanced.features[i, j])
        fix = values.pop("fix") >= 0.5
        churn_value = values.pop("churn")
        churn = churn_value if "churn" in names else None
        rows.append(
            Changeset(
                id=f"synthetic-{i - n_original:06d}",
                timestamp=base.timestamp,
                metrics=ChangeMetrics(fix=bool(fix), churn=churn, **values),
                label=int(balanced.labels[i]),
                modified_files=None,
            )
        )
    return replace(dataset, changesets=tuple(rows))


def _cmd_balance(args: argparse.Namespace) -> int:
    config = _configure(args)
    dataset = _load_input(config)
    balance_cfg = config.balance
    if balance_cfg.smote.fix_column is None and "fix" in dataset.feature_names:
        balance_cfg = replace(
            balance_cfg,
            smote=replace(balance_cfg.smote, fix_column=dataset.feature_names.index("fix")),
        )
    balanced = smote_pc(dataset.features(), dataset.labels(), balance_cfg, config.seed)
    run_dir, digest = _start_run(config, "balance", {})
    save_csv(_synthetic_changesets(dataset, balanced), os.path.join(run_dir, "balanced.csv"))
    _write_json(
        os.path.join(run_dir, "balance.json"),
        {
            "n_original": len(dataset),
            "n_balanced": int(len(balanced.labels)),
            "per_class_counts": {str(k): int(v) for k, v in balanced.per_class_counts.items()},
            "curve_similarity": balanced.curve_similarity,
            "rejected_batches": balanced.rejected_batches,
            "relaxed_threshold": balanced.relaxed_threshold,
        },
    )
    return _finish_run(run_dir, "balance", config, digest, {})


def _standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    return mu, np.where(sd < 1e-12, 1.0, sd)


def _metrics_payload(probs: np.ndarray, labels: np.ndarray) -> dict:
    try:
        auc = auc_roc(probs, labels)
    except UndefinedMetricError:
        auc = None  # single-class evaluation sets have no ROC
    report = classification_metrics(probs, labels)
    return {
        "auc_roc": auc,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "accuracy": report.accuracy,
        "degenerate": report.degenerate,
        "n": int(len(labels)),
        "n_pos": int(np.sum(labels == 1)),
        "threshold": 0.5,
    }


def _cmd_train(args: argparse.Namespace) -> int:
    config = _configure(args)
    dataset = _load_input(config)
    lookback = config.experiment.lookback
    n = len(dataset)
    cut = int(round(n * (1.0 - config.plan.val_fraction)))
    if cut <= lookback or cut >= n:
        raise InsufficientDataError(
            f"{n} rows cannot be split into a windowed train part and a validation part"
        )
    x = dataset.features()
    y = dataset.labels()
    mu, sd = _standardizer(x[:cut])
    z = (x - mu) / sd
    seq = np.column_stack([z, y.astype(np.float64)])
    windows_all, _ = sliding_windows(seq, lookback)
    val_x, val_y = z[cut:], y[cut:]
    val_windows = windows_all[cut - lookback :]

    kind = args.model
    use_forecast = kind == "deepicp" and not args.no_forecast
    if kind == "forecaster":
        model = train_forecaster(windows_all[: cut - lookback], seq[lookback:cut], config.train)
        val_probs = predict(model, windows=val_windows)
    else:
        train_rows = np.arange(lookback, cut)
        if args.no_balance:
            bx, by = z[train_rows], y[train_rows].astype(np.float64)
            bwin = windows_all[train_rows - lookback]
        else:
            balanced = smote_pc(z[train_rows], y[train_rows], config.balance, config.seed)
            bx = balanced.features
            by = balanced.labels.astype(np.float64)
            bwin = windows_all[train_rows[balanced.base_index] - lookback]
        if kind == "logistic":
            model = train_logistic(bx, by, config.train)
            val_probs = predict(model, x=val_x)
        else:
            train_batch = WindowedBatch(bx, bwin, by)
            val_batch = WindowedBatch(val_x, val_windows, val_y.astype(np.float64))
            model = train_deepicp(train_batch, val_batch, config.train, use_forecast=use_forecast)
            val_probs = predict(model, x=val_x, windows=val_windows if use_forecast else None)

    extra = {"model": kind}
    run_dir, digest = _start_run(config, "train", extra, (kind,))
    save_model(model, os.path.join(run_dir, "model.json"))
    _write_json(
        os.path.join(run_dir, "scaler.json"),
        {
            "feature_names": list(dataset.feature_names),
            "mu": [float(v) for v in mu],
            "sd": [float(v) for v in sd],
            "lookback": lookback,
            "model": kind,
            "use_forecast": use_forecast,
        },
    )
    _write_json(os.path.join(run_dir, "metrics.json"), _metrics_payload(val_probs, val_y))
    return _finish_run(run_dir, "train", config, digest, extra)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = _configure(args)
    model_path = os.path.join(args.model_dir, "model.json")
    scaler_path = os.path.join(args.model_dir, "scaler.json")
    for path in (model_path, scaler_path):
        if not os.path.exists(path):
            raise ConfigError(f"missing checkpoint file: {path}")
    try:
        model = load_model(model_path)
        with open(scaler_path, encoding="utf-8") as fh:
            scaler = json.load(fh)
    except ValueError as exc:
        raise ConfigError(f"{args.model_dir}: {exc}") from exc

    dataset = _load_input(config)
    if list(dataset.feature_names) != list(scaler["feature_names"]):
        raise ConfigError(
            "active features do not match the checkpoint scaler: "
            f"{list(dataset.feature_names)} vs {scaler['feature_names']}"
        )
    mu = np.asarray(scaler["mu"], dtype=np.float64)
    sd = np.asarray(scaler["sd"], dtype=np.float64)
    z = (dataset.features() - mu) / sd
    y = dataset.labels()
    kind = scaler["model"]
    if kind == "logistic":
        probs, y_eval = predict(model, x=z), y
    else:
        lookback = int(scaler["lookback"])
        seq = np.column_stack([z, y.astype(np.float64)])
        windows_all, _ = sliding_windows(seq, lookback)
        y_eval = y[lookback:]
        if kind == "forecaster":
            probs = predict(model, windows=windows_all)
        else:
            windows = windows_all if scaler.get("use_forecast", True) else None
            probs = predict(model, x=z[lookback:], windows=windows)

    extra = {"model": kind, "model_dir": args.model_dir}
    run_dir, digest = _start_run(config, "evaluate", extra, (kind,))
    _write_json(os.path.join(run_dir, "evaluation.json"), _metrics_payload(probs, y_eval))
    return _finish_run(run_dir, "evaluate", config, digest, extra)


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = _configure(args)
    dataset = _load_input(config)
    knobs = config.experiment
    extra = {"question": args.question}
    run_dir, digest = _start_run(config, "experiment", extra, (args.question,))
    if args.question == "rq1":
        report = run_rq1(
            dataset,
            config.train,
            seeds=config.plan.seeds,
            lookback=knobs.lookback,
            train_fraction=knobs.train_fraction,
            repeats=config.plan.repeats,
            band=knobs.rq1_band,
            jobs=args.jobs,
        )
        _write_json(os.path.join(run_dir, "rq1.json"), asdict(report))
    else:
        result = run_rq4(
            config.plan,
            _RQ4_VARIANTS[args.question],
            dataset,
            config.train,
            config.balance,
            lookback=knobs.lookback,
            band=knobs.rq4_band,
            jobs=args.jobs,
        )
        write_reports_jsonl(result.reports, os.path.join(run_dir, "reports.jsonl"))
        write_comparisons_csv(result.comparisons, os.path.join(run_dir, "comparisons.csv"))
    return _finish_run(run_dir, "experiment", config, digest, extra)


def _cmd_synth(args: argparse.Namespace) -> int:
    config = _configure(args)
    if args.n < 1:
        raise ConfigError(f"--n must be positive, got {args.n}")
    if args.kind == "manifold":
        dataset = manifold_dataset(ManifoldConfig(n_total=args.n), seed=config.seed)
    elif args.kind == "markov":
        dataset = markov_dataset(args.n, seed=config.seed)
    elif args.kind == "drifting":
        dataset = drifting_dataset(args.n, mode=args.drift_mode, seed=config.seed)
    else:
        dataset = joint_signal_dataset(args.n, seed=config.seed)
    extra = {"kind": args.kind, "n": args.n}
    run_dir, digest = _start_run(config, "synth", extra, (args.kind, str(args.n)))
    save_csv(dataset, os.path.join(run_dir, f"{args.kind}.csv"))
    return _finish_run(run_dir, "synth", config, digest, extra)


_HANDLERS = {
    "preprocess": _cmd_preprocess,
    "analyze-relationship": _cmd_analyze_relationship,
    "analyze-drift": _cmd_analyze_drift,
    "fit-curve": _cmd_fit_curve,
    "balance": _cmd_balance,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "experiment": _cmd_experiment,
    "synth": _cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code is None:
            return 0
        return code if isinstance(code, int) else 1
    try:
        return _HANDLERS[args.command](args)
    except (JitsdpError, OSError) as exc:
        print(f"jitsdp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
