"""Experiment runners.

Two protocols live here. The forecast-vs-random runner trains the
autoregressive label forecaster on an ordered prefix of a project's history
and compares its ranking quality against a coin-flip baseline. The segmented
runner partitions a project into equal arrival-order segments, trains on a
fixed window of them, and evaluates on the segments that follow, with
variants that swap the balancer, drop the forecasting stage, age the model,
warm-start an update, or swap in a logistic baseline.

Evaluation segments are never rebalanced; synthetic training rows inherit
the label-history window of the row they were interpolated from.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from dataclasses import replace as dc_replace

import numpy as np

from .balance import SmotePcConfig, smote_balance, smote_pc
from .data import Dataset, partition_equal
from .errors import InsufficientDataError, PlanError
from .metrics import auc_roc, classification_metrics, random_baseline
from .nn import (
    TrainConfig,
    WindowedBatch,
    incremental_update,
    predict,
    sliding_windows,
    train_deepicp,
    train_forecaster,
    train_logistic,
)

LOOKBACK = 6

# A mean-difference smaller than the band reads as "no winner". The
# segmented comparisons use a tight band because table values carry two
# decimals; the forecast-vs-random verdict uses a looser one sized to the
# seed-to-seed noise of a single training run.
COMPARISON_BAND = 0.005
FORECAST_BAND = 0.03

VARIANTS = (
    "smotepc_ablation",
    "forecast_ablation",
    "model_age",
    "incremental",
    "baseline_compare",
)

# variant -> (scenario treated as "without", scenario treated as "with")
_PAIRING = {
    "smotepc_ablation": ("smote", "smotepc"),
    "forecast_ablation": ("noforecast", "forecast"),
    "model_age": None,
    "incremental": ("frozen", "updated"),
    "baseline_compare": ("logistic", "deepicp"),
}


@dataclass(frozen=True)
class ExperimentPlan:
    """Segmented-protocol shape: which segments train, which evaluate.

    The dataset is cut into n_segments equal arrival-order pieces. Training
    uses train_window consecutive segments starting at train_start, split
    90/10 (by val_fraction) in arrival order into fit and validation rows.
    Each offset in test_offsets names the evaluation segment that many
    places after the training window. repeats sizes the random baseline;
    seeds are the model replicates."""

    n_segments: int = 20
    train_window: int = 4
    train_start: int = 8
    val_fraction: float = 0.1
    test_offsets: tuple[int, ...] = (0, 1, 2, 3)
    repeats: int = 50
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self) -> None:
        if self.n_segments < 1:
            raise PlanError(f"n_segments must be >= 1, got {self.n_segments}")
        if self.train_window < 1:
            raise PlanError(f"train_window must be >= 1, got {self.train_window}")
        if self.train_start < 0:
            raise PlanError(f"train_start must be >= 0, got {self.train_start}")
        if not 0.0 < self.val_fraction < 1.0:
            raise PlanError(
                f"val_fraction must lie in (0, 1), got {self.val_fraction}"
            )
        if len(self.test_offsets) == 0:
            raise PlanError("test_offsets must not be empty")
        if any(o < 0 for o in self.test_offsets):
            raise PlanError(f"test offsets must be >= 0, got {self.test_offsets}")
        if len(set(self.test_offsets)) != len(self.test_offsets):
            raise PlanError(f"duplicate test offsets in {self.test_offsets}")
        if self.repeats < 2:
            raise PlanError(f"repeats must be >= 2, got {self.repeats}")
        if len(self.seeds) == 0:
            raise PlanError("seeds must not be empty")
        last = self.train_start + self.train_window + max(self.test_offsets)
        if last >= self.n_segments:
            raise PlanError(
                f"train_start + train_window + max offset = {last} "
                f"must stay below n_segments = {self.n_segments}"
            )


@dataclass(frozen=True)
class EvalReport:
    """One model evaluated on one segment under one seed."""

    project: str
    scenario: str
    segment: int
    auc_roc: float
    f1: float
    precision: float
    recall: float
    accuracy: float
    n_test: int
    n_pos: int
    seed: int
    config_digest: str

    def __post_init__(self) -> None:
        for name in ("auc_roc", "f1", "precision", "recall", "accuracy"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        p, r = self.precision, self.recall
        harmonic = 0.0 if p + r == 0.0 else 2.0 * p * r / (p + r)
        if abs(self.f1 - harmonic) > 1e-9:
            raise ValueError(
                f"f1 {self.f1} inconsistent with precision {p} and recall {r}"
            )


@dataclass(frozen=True)
class ComparisonRow:
    """One cell of a without-vs-with table; the offset rides in the metric
    id (e.g. "f1@t+2") so the row set matches the emitted CSV columns."""

    project: str
    metric: str
    without: float
    with_: float
    verdict: str


@dataclass(frozen=True)
class Rq4Result:
    variant: str
    reports: tuple[EvalReport, ...]
    comparisons: tuple[ComparisonRow, ...]
    config_digest: str


@dataclass(frozen=True)
class Rq1Report:
    """Forecaster-vs-coin comparison for one project."""

    project: str
    model_mean: float
    model_std: float
    baseline_mean: float
    baseline_std: float
    verdict: str
    n_test: int
    seeds: tuple[int, ...]
    config_digest: str


def verdict_of(with_value: float, without_value: float, band: float) -> str:
    delta = with_value - without_value
    if abs(delta) < band:
        return "="
    return "+" if delta > 0 else "-"


def _digest(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _standardize_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    return mu, sd


# ---------------------------------------------------------------------------
# forecast vs random


def run_rq1(
    dataset: Dataset,
    config: TrainConfig | None = None,
    *,
    seeds: tuple[int, ...] | None = None,
    lookback: int = LOOKBACK,
    train_fraction: float = 0.8,
    repeats: int = 50,
    band: float = FORECAST_BAND,
    baseline_seed: int = 0,
    jobs: int = 1,
) -> Rq1Report:
    """Train the label forecaster on the first train_fraction of windows,
    score the rest, and compare mean AUC across seeds against a fair-coin
    baseline on the same evaluation labels."""
    config = config or TrainConfig()
    seeds = tuple(range(50)) if seeds is None else tuple(int(s) for s in seeds)
    if len(seeds) == 0:
        raise ValueError("need at least one seed")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(dataset)
    if n <= lookback:
        raise InsufficientDataError(
            f"dataset has {n} rows but windows need more than {lookback}"
        )

    x = dataset.features()
    y = dataset.labels()
    n_windows = n - lookback
    cut = int(round(train_fraction * n_windows))
    if cut < 1 or cut >= n_windows:
        raise InsufficientDataError(
            f"{n_windows} windows leave no data on one side of an "
            f"{train_fraction:.0%} split"
        )

    # Scale features with statistics of the rows the training windows see;
    # later rows are scaled with the same frozen statistics.
    mu, sd = _standardize_stats(x[: cut + lookback])
    z = np.column_stack([(x - mu) / sd, y.astype(np.float64)])
    windows, targets = sliding_windows(z, lookback)
    y_eval = targets[cut:, -1].astype(np.int64)

    digest = _digest(
        {
            "op": "forecast-vs-random",
            "train": asdict(config),
            "lookback": lookback,
            "train_fraction": train_fraction,
            "repeats": repeats,
            "band": band,
            "baseline_seed": baseline_seed,
        }
    )

    cells = [
        (windows[:cut], targets[:cut], windows[cut:], y_eval, config, int(s))
        for s in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            aucs = list(pool.map(_rq1_cell, cells))
    else:
        aucs = [_rq1_cell(c) for c in cells]

    base_mean, base_std = random_baseline(y_eval, repeats=repeats, seed=baseline_seed)
    model_mean = float(np.mean(aucs))
    model_std = float(np.std(aucs, ddof=1)) if len(aucs) > 1 else 0.0
    return Rq1Report(
        project=dataset.project,
        model_mean=model_mean,
        model_std=model_std,
        baseline_mean=base_mean,
        baseline_std=base_std,
        verdict=verdict_of(model_mean, base_mean, band),
        n_test=len(y_eval),
        seeds=seeds,
        config_digest=digest,
    )


def _rq1_cell(cell) -> float:
    train_w, train_t, eval_w, y_eval, config, seed = cell
    model = train_forecaster(train_w, train_t, dc_replace(config, seed=seed))
    probs = predict(model, windows=eval_w)
    return float(auc_roc(probs, y_eval))


# ---------------------------------------------------------------------------
# segmented protocol


@dataclass(frozen=True)
class _Prepared:
    """Standardized rows, per-row history windows, and the row-index sets
    of the plan's training split and evaluation segments."""

    project: str
    x: np.ndarray
    y: np.ndarray
    windows: np.ndarray
    lookback: int
    train_idx: np.ndarray
    val_idx: np.ndarray
    segment_rows: dict  # absolute segment index -> row indices
    first_eval_segment: int


def _prepare(dataset: Dataset, plan: ExperimentPlan, lookback: int) -> _Prepared:
    n = len(dataset)
    if n < plan.n_segments:
        raise PlanError(
            f"plan needs {plan.n_segments} segments but the dataset has {n} rows"
        )
    segments = partition_equal(dataset, plan.n_segments)
    starts = np.cumsum([0] + [len(s) for s in segments])

    lo = int(starts[plan.train_start])
    hi = int(starts[plan.train_start + plan.train_window])
    train_rows = np.arange(lo, hi)
    split = int(round((1.0 - plan.val_fraction) * len(train_rows)))
    if split < 1 or split >= len(train_rows):
        raise PlanError(
            f"training window has {len(train_rows)} rows; a "
            f"{plan.val_fraction:.0%} validation split leaves one side empty"
        )
    if lo < lookback:
        raise PlanError(
            f"training window starts at row {lo} but history windows need "
            f"{lookback} earlier rows"
        )

    x_raw = dataset.features()
    y = dataset.labels()
    mu, sd = _standardize_stats(x_raw[train_rows[:split]])
    x = (x_raw - mu) / sd
    z = np.column_stack([x, y.astype(np.float64)])
    windows, _ = sliding_windows(z, lookback)

    first_eval = plan.train_start + plan.train_window
    wanted = sorted(set(plan.test_offsets) | {0})
    segment_rows = {
        first_eval + off: np.arange(
            int(starts[first_eval + off]), int(starts[first_eval + off + 1])
        )
        for off in wanted
    }
    return _Prepared(
        project=dataset.project,
        x=x,
        y=y,
        windows=windows,
        lookback=lookback,
        train_idx=train_rows[:split],
        val_idx=train_rows[split:],
        segment_rows=segment_rows,
        first_eval_segment=first_eval,
    )


def _raw_batch(prep: _Prepared, rows: np.ndarray) -> WindowedBatch:
    return WindowedBatch(
        x=prep.x[rows],
        windows=prep.windows[rows - prep.lookback],
        y=prep.y[rows].astype(np.float64),
    )


def _balanced_batch(
    prep: _Prepared,
    rows: np.ndarray,
    kind: str,
    balance: SmotePcConfig,
    seed: int,
) -> WindowedBatch:
    """Balance the rows, then give every synthetic row the history window
    of the original row it was interpolated from."""
    if kind == "smotepc":
        balanced = smote_pc(prep.x[rows], prep.y[rows], balance, seed)
    else:
        balanced = smote_balance(prep.x[rows], prep.y[rows], balance.smote, seed)
    base_rows = rows[balanced.base_index]
    return WindowedBatch(
        x=balanced.features,
        windows=prep.windows[base_rows - prep.lookback],
        y=balanced.labels.astype(np.float64),
    )


def _evaluate(
    model,
    prep: _Prepared,
    segment: int,
    scenario: str,
    seed: int,
    digest: str,
) -> EvalReport:
    rows = prep.segment_rows[segment]
    y = prep.y[rows]
    probs = predict(model, x=prep.x[rows], windows=prep.windows[rows - prep.lookback])
    cm = classification_metrics(probs, y)
    return EvalReport(
        project=prep.project,
        scenario=scenario,
        segment=segment,
        auc_roc=float(auc_roc(probs, y)),
        f1=cm.f1,
        precision=cm.precision,
        recall=cm.recall,
        accuracy=cm.accuracy,
        n_test=len(rows),
        n_pos=int(np.sum(y == 1)),
        seed=seed,
        config_digest=digest,
    )


def _rq4_cell(cell) -> list:
    prep, plan, variant, config, balance, seed, digest = cell
    cfg = dc_replace(config, seed=seed)
    val = _raw_batch(prep, prep.val_idx)
    eval_segments = [prep.first_eval_segment + off for off in sorted(plan.test_offsets)]
    reports: list[EvalReport] = []

    def eval_model(model, scenario, segments) -> None:
        for seg in segments:
            reports.append(_evaluate(model, prep, seg, scenario, seed, digest))

    if variant == "smotepc_ablation":
        for kind, scenario in (("smote", "smote"), ("smotepc", "smotepc")):
            train = _balanced_batch(prep, prep.train_idx, kind, balance, seed)
            eval_model(train_deepicp(train, val, cfg), scenario, eval_segments)
    elif variant == "forecast_ablation":
        train = _balanced_batch(prep, prep.train_idx, "smotepc", balance, seed)
        for use_forecast, scenario in ((False, "noforecast"), (True, "forecast")):
            model = train_deepicp(train, val, cfg, use_forecast=use_forecast)
            eval_model(model, scenario, eval_segments)
    elif variant == "model_age":
        train = _balanced_batch(prep, prep.train_idx, "smotepc", balance, seed)
        eval_model(train_deepicp(train, val, cfg), "age", eval_segments)
    elif variant == "incremental":
        paired = [s for s in eval_segments if s > prep.first_eval_segment]
        if not paired:
            raise PlanError(
                "incremental pairing needs a test offset beyond the update "
                f"segment, got offsets {plan.test_offsets}"
            )
        frozen = train_deepicp(
            _balanced_batch(prep, prep.train_idx, "smotepc", balance, seed), val, cfg
        )
        upd_rows = prep.segment_rows[prep.first_eval_segment]
        upd_split = int(round((1.0 - plan.val_fraction) * len(upd_rows)))
        if upd_split < 1 or upd_split >= len(upd_rows):
            raise PlanError(
                f"update segment has {len(upd_rows)} rows; a "
                f"{plan.val_fraction:.0%} validation split leaves one side empty"
            )
        upd_train = _balanced_batch(prep, upd_rows[:upd_split], "smotepc", balance, seed)
        upd_val = _raw_batch(prep, upd_rows[upd_split:])
        updated = incremental_update(frozen, upd_train, upd_val, cfg)
        eval_model(frozen, "frozen", paired)
        eval_model(updated, "updated", paired)
    elif variant == "baseline_compare":
        train = _balanced_batch(prep, prep.train_idx, "smotepc", balance, seed)
        eval_model(train_logistic(train.x, train.y, cfg), "logistic", eval_segments)
        eval_model(train_deepicp(train, val, cfg), "deepicp", eval_segments)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return reports


def _compare(
    reports: list,
    pairing: tuple[str, str],
    first_eval_segment: int,
    band: float,
) -> tuple[ComparisonRow, ...]:
    """Mean each scenario's metric over seeds, per evaluation segment, and
    mark the without-vs-with winner."""
    without_id, with_id = pairing
    project = reports[0].project
    rows = []
    segments = sorted({r.segment for r in reports})
    for metric in ("auc_roc", "f1"):
        short = "auc" if metric == "auc_roc" else "f1"
        for seg in segments:
            values = {
                scenario: float(
                    np.mean(
                        [
                            getattr(r, metric)
                            for r in reports
                            if r.scenario == scenario and r.segment == seg
                        ]
                    )
                )
                for scenario in pairing
            }
            rows.append(
                ComparisonRow(
                    project=project,
                    metric=f"{short}@t+{seg - first_eval_segment}",
                    without=values[without_id],
                    with_=values[with_id],
                    verdict=verdict_of(values[with_id], values[without_id], band),
                )
            )
    return tuple(rows)


def run_rq4(
    plan: ExperimentPlan,
    variant: str,
    dataset: Dataset,
    config: TrainConfig | None = None,
    balance: SmotePcConfig | None = None,
    *,
    lookback: int = LOOKBACK,
    band: float = COMPARISON_BAND,
    jobs: int = 1,
) -> Rq4Result:
    """Run one segmented-protocol variant over the plan's seed set.

    Every seed is an independent cell: balancing, weight init, shuffling,
    and dropout all draw from substreams of that seed, so reruns reproduce
    the same reports bit for bit. Evaluation segments keep their raw class
    ratio."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    config = config or TrainConfig()
    balance = balance or SmotePcConfig()
    prep = _prepare(dataset, plan, lookback)
    digest = _digest(
        {
            "op": "segmented",
            "variant": variant,
            "plan": asdict(plan),
            "train": asdict(config),
            "balance": asdict(balance),
            "lookback": lookback,
            "band": band,
        }
    )

    cells = [
        (prep, plan, variant, config, balance, int(seed), digest)
        for seed in plan.seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_rq4_cell, cells))
    else:
        per_seed = [_rq4_cell(c) for c in cells]
    reports = [r for cell in per_seed for r in cell]

    pairing = _PAIRING[variant]
    comparisons = (
        _compare(reports, pairing, prep.first_eval_segment, band) if pairing else ()
    )
    return Rq4Result(
        variant=variant,
        reports=tuple(reports),
        comparisons=comparisons,
        config_digest=digest,
    )


# ---------------------------------------------------------------------------
# report emission


def write_reports_jsonl(reports, path: str) -> None:
    """One EvalReport per line, keys sorted, full float precision."""
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            fh.write(json.dumps(asdict(report), sort_keys=True))
            fh.write("\n")


def write_comparisons_csv(comparisons, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["project", "metric", "without", "with", "verdict"])
        for row in comparisons:
            writer.writerow(
                [row.project, row.metric, repr(row.without), repr(row.with_), row.verdict]
            )
