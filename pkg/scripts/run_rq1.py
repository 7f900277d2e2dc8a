#!/usr/bin/env python3
"""Does recent label history alone carry a usable defect signal?

Trains the autoregressive label forecaster on the first part of a change
stream and scores the held-out tail against a fair-coin baseline drawn on
the same labels. Point it at a changeset CSV, or let it synthesise a
sticky-label stream when no file is given.
"""

import argparse
import dataclasses
import json
import sys

from jitsdp import TrainConfig, load_csv, log_transform, markov_dataset, run_rq1


def build_dataset(args):
    if args.input is not None:
        dataset = load_csv(args.input, project=args.project)
        if args.log_transform:
            dataset = log_transform(dataset)
        return dataset
    return markov_dataset(args.synthetic_n, seed=args.seed)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--input", default=None,
                        help="changeset CSV; a synthetic stream when omitted")
    parser.add_argument("--project", default="", help="project tag for the report")
    parser.add_argument("--synthetic-n", type=int, default=5000,
                        help="rows of the synthetic stream")
    parser.add_argument("--seeds", type=int, default=10,
                        help="number of training replicates (seeds 0..k-1)")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for synthesis and the coin baseline")
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--hidden-size", type=int, default=16)
    parser.add_argument("--num-layers", type=int, default=2)
    parser.add_argument("--lookback", type=int, default=6)
    parser.add_argument("--train-fraction", type=float, default=0.8)
    parser.add_argument("--band", type=float, default=0.03,
                        help="AUC gaps below this count as a tie")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--no-log-transform", dest="log_transform",
                        action="store_false",
                        help="skip log1p on CSV metric columns")
    parser.add_argument("--json", default=None,
                        help="also dump the report to this path")
    args = parser.parse_args(argv)

    dataset = build_dataset(args)
    config = TrainConfig(
        seed=args.seed,
        epochs=args.epochs,
        hidden_size=args.hidden_size,
        num_layers=args.num_layers,
    )
    report = run_rq1(
        dataset,
        config,
        seeds=tuple(range(args.seeds)),
        lookback=args.lookback,
        train_fraction=args.train_fraction,
        band=args.band,
        baseline_seed=args.seed,
        jobs=args.jobs,
    )

    name = report.project or "stream"
    print(f"{name}: forecaster {report.model_mean:.3f} +/- {report.model_std:.3f}")
    print(f"{name}: coin       {report.baseline_mean:.3f} +/- {report.baseline_std:.3f}")
    print(f"verdict: {report.verdict}"
          f"   ({report.n_test} scored windows, {len(report.seeds)} seeds)")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(dataclasses.asdict(report), fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.json}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
