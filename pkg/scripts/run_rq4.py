#!/usr/bin/env python3
# Segmented scenario comparisons on one change stream.
#
# One variant per run:
#   smotepc_ablation   plain SMOTE vs curve-gated SMOTE
#   forecast_ablation  label-history head off vs on
#   model_age          one frozen model scored on later and later segments
#   incremental        frozen model vs per-segment weight updates
#   baseline_compare   logistic screen vs the recurrent model
#
# Emits reports.jsonl (every seed x scenario x segment cell) and
# comparisons.csv (the without/with table) into --out, and prints a
# per-segment mean summary. Mirrors the `jitsdp experiment` subcommand
# with the plan knobs exposed for quick sweeps.

import argparse
import collections
import os
import statistics
import sys

from jitsdp import (
    CurveConfig,
    ExperimentPlan,
    SmotePcConfig,
    TrainConfig,
    drifting_dataset,
    joint_signal_dataset,
    load_csv,
    log_transform,
    markov_dataset,
    run_rq4,
    write_comparisons_csv,
    write_reports_jsonl,
)
from jitsdp.experiments import VARIANTS


def int_tuple(text):
    return tuple(int(part) for part in text.split(","))


def build_dataset(args):
    if args.input is not None:
        dataset = load_csv(args.input, project=args.project)
        return log_transform(dataset) if args.log_transform else dataset
    makers = {
        "joint": lambda: joint_signal_dataset(args.n, seed=args.seed),
        "drifting": lambda: drifting_dataset(args.n, seed=args.seed),
        "markov": lambda: markov_dataset(args.n, seed=args.seed),
    }
    return makers[args.synthetic]()


def summarize(reports):
    cells = collections.defaultdict(list)
    for r in reports:
        cells[(r.scenario, r.segment)].append(r)
    for scenario, segment in sorted(cells):
        group = cells[(scenario, segment)]
        auc = statistics.fmean(r.auc_roc for r in group)
        f1 = statistics.fmean(r.f1 for r in group)
        print(f"  {scenario:<12} segment {segment:>2}  "
              f"auc {auc:.3f}  f1 {f1:.3f}  ({len(group)} seeds)")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(
        description="segmented without/with comparison on a change stream")
    parser.add_argument("variant", choices=VARIANTS)
    parser.add_argument("--input", default=None,
                        help="changeset CSV; synthetic stream when omitted")
    parser.add_argument("--project", default="")
    parser.add_argument("--synthetic", choices=("joint", "drifting", "markov"),
                        default="joint")
    parser.add_argument("--n", type=int, default=4000,
                        help="rows of the synthetic stream")
    parser.add_argument("--seed", type=int, default=0, help="synthesis seed")
    parser.add_argument("--seeds", type=int_tuple, default=(0, 1, 2),
                        help="comma-separated model seeds")
    parser.add_argument("--segments", type=int, default=20)
    parser.add_argument("--train-window", type=int, default=4)
    parser.add_argument("--train-start", type=int, default=8)
    parser.add_argument("--offsets", type=int_tuple, default=(0, 1, 2, 3))
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--hidden-size", type=int, default=16)
    parser.add_argument("--num-layers", type=int, default=2)
    parser.add_argument("--lookback", type=int, default=6)
    parser.add_argument("--batch-fraction", type=float, default=1.0)
    parser.add_argument("--max-rejects", type=int, default=5)
    parser.add_argument("--curve-segments", type=int, default=20)
    parser.add_argument("--band", type=float, default=0.005)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--no-log-transform", dest="log_transform",
                        action="store_false")
    parser.add_argument("--out", default="rq4_out")
    args = parser.parse_args()

    plan = ExperimentPlan(
        n_segments=args.segments,
        train_window=args.train_window,
        train_start=args.train_start,
        test_offsets=args.offsets,
        seeds=args.seeds,
    )
    train = TrainConfig(
        seed=args.seeds[0],
        epochs=args.epochs,
        hidden_size=args.hidden_size,
        num_layers=args.num_layers,
        early_stop_patience=5,
    )
    balance = SmotePcConfig(
        batch_fraction=args.batch_fraction,
        max_rejects=args.max_rejects,
        curve=CurveConfig(segments=args.curve_segments),
    )

    dataset = build_dataset(args)
    result = run_rq4(plan, args.variant, dataset, train, balance,
                     lookback=args.lookback, band=args.band, jobs=args.jobs)

    os.makedirs(args.out, exist_ok=True)
    write_reports_jsonl(result.reports, os.path.join(args.out, "reports.jsonl"))
    write_comparisons_csv(result.comparisons,
                          os.path.join(args.out, "comparisons.csv"))

    print(f"{args.variant} on {dataset.project or args.synthetic} "
          f"({len(dataset.changesets)} rows)")
    summarize(result.reports)
    if result.comparisons:
        print("without -> with:")
        for row in result.comparisons:
            print(f"  {row.metric:>8}  {row.without:.3f} -> {row.with_:.3f}"
                  f"  {row.verdict}")
    print(f"wrote {args.out}/reports.jsonl and {args.out}/comparisons.csv")
    sys.exit(0)
