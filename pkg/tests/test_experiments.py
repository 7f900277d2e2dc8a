"""Experiment-runner tests.

The protocol mechanics (segment bookkeeping, window inheritance, verdict
tables, determinism) are checked on small fast configurations; the planted
directional claims (history signal recovered, gated balancing preserving
F1, aging decay, update recovery) run at their calibrated operating points
and dominate this file's runtime.
"""

import dataclasses
import json

import numpy as np
import pytest

from jitsdp.balance import SmotePcConfig
from jitsdp.curve import CurveConfig
from jitsdp.data import partition_equal
from jitsdp.errors import InsufficientDataError, PlanError
from jitsdp.experiments import (
    EvalReport,
    ExperimentPlan,
    _balanced_batch,
    _prepare,
    _raw_batch,
    run_rq1,
    run_rq4,
    verdict_of,
    write_comparisons_csv,
    write_reports_jsonl,
)
from jitsdp.metrics import random_baseline
from jitsdp.nn import TrainConfig
from jitsdp.synth import (
    drifting_dataset,
    joint_signal_dataset,
    manifold_dataset,
    markov_dataset,
)

LOOKBACK = 6

TINY = TrainConfig(
    seed=0, epochs=3, hidden_size=8, num_layers=1, dropout_rate=0.0,
    early_stop_patience=2,
)
MED = TrainConfig(
    seed=0, epochs=30, hidden_size=16, num_layers=2, dropout_rate=0.2,
    early_stop_patience=5,
)
RQ1_CFG = TrainConfig(seed=0, epochs=10, hidden_size=16, num_layers=2, dropout_rate=0.2)

# Experiment-scale balancer settings: one whole-deficit batch per trial and a
# coarser curve keep the gate cheap on features without 1-D structure.
FAST_BALANCE = SmotePcConfig(
    batch_fraction=1.0, max_rejects=5, curve=CurveConfig(segments=20)
)


@pytest.fixture(scope="module")
def small_drift():
    return drifting_dataset(1200, seed=1)


@pytest.fixture(scope="module")
def small_result(small_drift):
    plan = ExperimentPlan(seeds=(0, 1))
    return run_rq4(plan, "smotepc_ablation", small_drift, TINY, FAST_BALANCE)


class TestVerdict:
    def test_three_bands(self):
        assert verdict_of(0.80, 0.70, 0.005) == "+"
        assert verdict_of(0.70, 0.80, 0.005) == "-"
        assert verdict_of(0.701, 0.700, 0.005) == "="

    def test_difference_inside_band_is_equal(self):
        assert verdict_of(0.704, 0.700, 0.005) == "="
        assert verdict_of(0.696, 0.700, 0.005) == "="
        # the band is an open interval: a delta at the band is a winner
        assert verdict_of(0.75, 0.70, 0.05) == "+"


class TestExperimentPlan:
    def test_defaults_are_valid(self):
        plan = ExperimentPlan()
        assert plan.n_segments == 20
        assert plan.train_start + plan.train_window + max(plan.test_offsets) == 15

    def test_window_plus_offset_must_fit(self):
        with pytest.raises(PlanError):
            ExperimentPlan(test_offsets=(0, 8))

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2])
    def test_val_fraction_open_interval(self, bad):
        with pytest.raises(PlanError):
            ExperimentPlan(val_fraction=bad)

    def test_offset_validation(self):
        with pytest.raises(PlanError):
            ExperimentPlan(test_offsets=())
        with pytest.raises(PlanError):
            ExperimentPlan(test_offsets=(-1,))
        with pytest.raises(PlanError):
            ExperimentPlan(test_offsets=(1, 1))

    def test_counts_validation(self):
        with pytest.raises(PlanError):
            ExperimentPlan(seeds=())
        with pytest.raises(PlanError):
            ExperimentPlan(repeats=1)
        with pytest.raises(PlanError):
            ExperimentPlan(n_segments=0)
        with pytest.raises(PlanError):
            ExperimentPlan(train_window=0)
        with pytest.raises(PlanError):
            ExperimentPlan(train_start=-1)


class TestEvalReport:
    def _row(self, **overrides):
        base = dict(
            project="p", scenario="s", segment=12, auc_roc=0.7, f1=0.5,
            precision=0.5, recall=0.5, accuracy=0.6, n_test=60, n_pos=20,
            seed=0, config_digest="deadbeef0123",
        )
        base.update(overrides)
        return EvalReport(**base)

    def test_valid_row(self):
        row = self._row()
        assert row.f1 == 0.5

    def test_f1_must_match_precision_recall(self):
        with pytest.raises(ValueError, match="inconsistent"):
            self._row(precision=0.9, recall=0.1, f1=0.5)

    def test_metrics_bounded(self):
        with pytest.raises(ValueError, match="auc_roc"):
            self._row(auc_roc=1.2)

    def test_degenerate_zero_f1_accepted(self):
        row = self._row(precision=0.0, recall=0.0, f1=0.0)
        assert row.f1 == 0.0


class TestRunRq1:
    def test_markov_labels_beat_coin(self):
        report = run_rq1(markov_dataset(1500, seed=0), RQ1_CFG, seeds=(0, 1, 2))
        assert report.verdict == "+"
        assert report.model_mean > 0.6
        assert abs(report.baseline_mean - 0.5) < 0.03

    def test_iid_labels_tie(self):
        iid = markov_dataset(
            1500, p_defect_after_defect=0.3, p_defect_after_clean=0.3, seed=1
        )
        report = run_rq1(iid, RQ1_CFG, seeds=(0, 1, 2))
        assert report.verdict == "="

    def test_split_arithmetic_and_baseline_route(self):
        ds = markov_dataset(1500, seed=0)
        report = run_rq1(ds, RQ1_CFG, seeds=(0,), repeats=50, baseline_seed=0)
        n_windows = 1500 - LOOKBACK
        cut = int(round(0.8 * n_windows))
        assert report.n_test == n_windows - cut
        # the baseline must be the fair-coin estimate on exactly the
        # evaluation labels, recomputed here from first principles
        y_eval = ds.labels()[LOOKBACK + cut :]
        mean, std = random_baseline(y_eval, repeats=50, seed=0)
        assert report.baseline_mean == mean
        assert report.baseline_std == std

    def test_deterministic_rerun(self):
        ds = markov_dataset(1500, seed=2)
        a = run_rq1(ds, RQ1_CFG, seeds=(0, 1))
        b = run_rq1(ds, RQ1_CFG, seeds=(0, 1))
        assert a == b

    def test_jobs_do_not_change_results(self):
        ds = markov_dataset(1500, seed=2)
        a = run_rq1(ds, RQ1_CFG, seeds=(0, 1))
        b = run_rq1(ds, RQ1_CFG, seeds=(0, 1), jobs=2)
        assert a == b

    def test_digest_tracks_config(self):
        ds = markov_dataset(400, seed=3)
        small = dataclasses.replace(TINY, num_layers=1)
        a = run_rq1(ds, small, seeds=(0,))
        b = run_rq1(ds, dataclasses.replace(small, epochs=4), seeds=(0,))
        assert a.config_digest != b.config_digest
        assert len(a.config_digest) == 12

    def test_too_small_dataset_rejected(self):
        with pytest.raises(InsufficientDataError):
            run_rq1(markov_dataset(LOOKBACK, seed=0), TINY, seeds=(0,))

    def test_bad_arguments_rejected(self):
        ds = markov_dataset(200, seed=0)
        with pytest.raises(ValueError):
            run_rq1(ds, TINY, seeds=())
        with pytest.raises(ValueError):
            run_rq1(ds, TINY, seeds=(0,), train_fraction=1.0)


class TestSegmentedProtocol:
    def test_report_grid_complete(self, small_result):
        grid = {(r.scenario, r.segment, r.seed) for r in small_result.reports}
        expected = {
            (scenario, seg, seed)
            for scenario in ("smote", "smotepc")
            for seg in (12, 13, 14, 15)
            for seed in (0, 1)
        }
        assert grid == expected
        assert len(small_result.reports) == 16

    def test_eval_segments_keep_raw_class_ratio(self, small_drift, small_result):
        segments = partition_equal(small_drift, 20)
        labels = small_drift.labels()
        starts = np.cumsum([0] + [len(s) for s in segments])
        for report in small_result.reports:
            lo, hi = starts[report.segment], starts[report.segment + 1]
            assert report.n_test == hi - lo
            assert report.n_pos == int(labels[lo:hi].sum())

    def test_comparisons_recomputable_from_reports(self, small_result):
        by = {}
        for r in small_result.reports:
            by.setdefault((r.scenario, r.segment), []).append(r)
        tags = set()
        for row in small_result.comparisons:
            metric, offset_tag = row.metric.split("@")
            seg = 12 + int(offset_tag.removeprefix("t+"))
            attr = "auc_roc" if metric == "auc" else "f1"
            without = np.mean([getattr(r, attr) for r in by[("smote", seg)]])
            with_ = np.mean([getattr(r, attr) for r in by[("smotepc", seg)]])
            assert row.without == pytest.approx(without, abs=1e-12)
            assert row.with_ == pytest.approx(with_, abs=1e-12)
            assert row.verdict == verdict_of(with_, without, 0.005)
            tags.add(row.metric)
        assert tags == {
            f"{m}@t+{k}" for m in ("auc", "f1") for k in (0, 1, 2, 3)
        }

    def test_digest_shared_and_shaped(self, small_result):
        digests = {r.config_digest for r in small_result.reports}
        assert digests == {small_result.config_digest}
        assert len(small_result.config_digest) == 12

    def test_deterministic_and_parallel_identical(self, small_drift, small_result):
        plan = ExperimentPlan(seeds=(0, 1))
        again = run_rq4(plan, "smotepc_ablation", small_drift, TINY, FAST_BALANCE)
        assert again == small_result
        parallel = run_rq4(
            plan, "smotepc_ablation", small_drift, TINY, FAST_BALANCE, jobs=2
        )
        assert parallel == small_result

    def test_unknown_variant_rejected(self, small_drift):
        with pytest.raises(ValueError, match="variant"):
            run_rq4(ExperimentPlan(seeds=(0,)), "rq9", small_drift, TINY)

    def test_plan_infeasible_for_tiny_dataset(self):
        with pytest.raises(PlanError, match="segments"):
            run_rq4(
                ExperimentPlan(seeds=(0,)), "model_age",
                drifting_dataset(15, seed=0), TINY, FAST_BALANCE,
            )

    def test_train_window_needs_lookback_history(self, small_drift):
        plan = ExperimentPlan(train_start=0, seeds=(0,))
        with pytest.raises(PlanError, match="history"):
            run_rq4(plan, "model_age", small_drift, TINY, FAST_BALANCE)

    def test_degenerate_validation_split_rejected(self, small_drift):
        plan = ExperimentPlan(val_fraction=0.001, seeds=(0,))
        with pytest.raises(PlanError, match="validation"):
            run_rq4(plan, "model_age", small_drift, TINY, FAST_BALANCE)

    def test_incremental_needs_later_offsets(self, small_drift):
        plan = ExperimentPlan(test_offsets=(0,), seeds=(0,))
        with pytest.raises(PlanError, match="beyond the update"):
            run_rq4(plan, "incremental", small_drift, TINY, FAST_BALANCE)

    def test_incremental_pairs_only_later_segments(self, small_drift):
        plan = ExperimentPlan(seeds=(0,))
        res = run_rq4(plan, "incremental", small_drift, TINY, FAST_BALANCE)
        assert {r.scenario for r in res.reports} == {"frozen", "updated"}
        assert {r.segment for r in res.reports} == {13, 14, 15}
        assert {c.metric for c in res.comparisons} == {
            f"{m}@t+{k}" for m in ("auc", "f1") for k in (1, 2, 3)
        }

    def test_forecast_ablation_arms(self):
        ds = joint_signal_dataset(1200, seed=3)
        res = run_rq4(ExperimentPlan(seeds=(0,)), "forecast_ablation", ds, TINY, FAST_BALANCE)
        assert {r.scenario for r in res.reports} == {"noforecast", "forecast"}
        assert len(res.reports) == 8
        assert all(0.0 <= r.auc_roc <= 1.0 for r in res.reports)

    def test_baseline_compare_arms(self):
        ds = joint_signal_dataset(1200, seed=3)
        res = run_rq4(ExperimentPlan(seeds=(0,)), "baseline_compare", ds, TINY, FAST_BALANCE)
        assert {r.scenario for r in res.reports} == {"logistic", "deepicp"}
        assert len(res.comparisons) == 8

    def test_model_age_has_no_comparison_table(self, small_drift):
        res = run_rq4(ExperimentPlan(seeds=(0,)), "model_age", small_drift, TINY, FAST_BALANCE)
        assert {r.scenario for r in res.reports} == {"age"}
        assert res.comparisons == ()


class TestPreparedBatches:
    """White-box checks of the split bookkeeping and window inheritance."""

    def test_split_indices_and_standardization(self, small_drift):
        plan = ExperimentPlan(seeds=(0,))
        prep = _prepare(small_drift, plan, LOOKBACK)
        # 1200 rows / 20 segments = 60; train window = rows 480..720
        assert prep.train_idx[0] == 480
        assert prep.train_idx[-1] == 695
        assert list(prep.val_idx) == list(range(696, 720))
        assert set(prep.segment_rows) == {12, 13, 14, 15}
        np.testing.assert_allclose(prep.x[prep.train_idx].mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(prep.x[prep.train_idx].std(axis=0), 1.0, atol=1e-9)

    def test_raw_batch_mirrors_rows(self, small_drift):
        prep = _prepare(small_drift, ExperimentPlan(seeds=(0,)), LOOKBACK)
        rows = prep.segment_rows[14]
        batch = _raw_batch(prep, rows)
        np.testing.assert_array_equal(batch.x, prep.x[rows])
        np.testing.assert_array_equal(batch.y, prep.y[rows].astype(float))
        np.testing.assert_array_equal(batch.windows, prep.windows[rows - LOOKBACK])

    def test_synthetic_rows_inherit_base_windows(self, small_drift):
        prep = _prepare(small_drift, ExperimentPlan(seeds=(0,)), LOOKBACK)
        rows = prep.train_idx
        batch = _balanced_batch(prep, rows, "smotepc", FAST_BALANCE, seed=0)
        n_orig = len(rows)
        # originals first, untouched and aligned
        np.testing.assert_array_equal(batch.x[:n_orig], prep.x[rows])
        np.testing.assert_array_equal(batch.windows[:n_orig], prep.windows[rows - LOOKBACK])
        # the synthetic tail balances the minority class exactly
        y = batch.y.astype(np.int64)
        counts = np.bincount(y)
        assert counts[0] == counts[1]
        # every synthetic window is the window of some training row of the
        # same class; membership checked against the raw window table
        for j in range(n_orig, len(y)):
            candidates = rows[prep.y[rows] == y[j]]
            table = prep.windows[candidates - LOOKBACK]
            matches = np.all(np.isclose(table, batch.windows[j], atol=0.0), axis=(1, 2))
            assert matches.any()

    def test_plain_smote_tail_uses_minority_windows_too(self, small_drift):
        prep = _prepare(small_drift, ExperimentPlan(seeds=(0,)), LOOKBACK)
        rows = prep.train_idx
        batch = _balanced_batch(prep, rows, "smote", FAST_BALANCE, seed=0)
        y = batch.y.astype(np.int64)
        assert np.bincount(y)[0] == np.bincount(y)[1]
        assert len(batch.windows) == len(batch.x)


class TestPlantedDirections:
    def test_gated_balancing_keeps_f1_on_manifold(self):
        plan = ExperimentPlan(seeds=tuple(range(10)))
        res = run_rq4(plan, "smotepc_ablation", manifold_dataset(seed=0), MED, FAST_BALANCE)
        wins = 0
        for seed in range(10):
            mine = [r.f1 for r in res.reports if r.seed == seed and r.scenario == "smotepc"]
            plain = [r.f1 for r in res.reports if r.seed == seed and r.scenario == "smote"]
            wins += np.mean(mine) >= np.mean(plain)
        assert wins >= 7

    def test_model_f1_decays_with_age(self):
        ds = drifting_dataset(3000, mode="rotate", seed=0)
        res = run_rq4(ExperimentPlan(seeds=(0, 1, 2)), "model_age", ds, MED, FAST_BALANCE)
        f1_at = lambda seg: np.mean([r.f1 for r in res.reports if r.segment == seg])
        fresh = f1_at(12)
        aged = np.mean([f1_at(s) for s in (13, 14, 15)])
        assert aged < fresh

    def test_incremental_update_wins_majority_of_pairs(self):
        ds = drifting_dataset(3000, mode="rotate", seed=0)
        res = run_rq4(ExperimentPlan(seeds=(0, 1, 2)), "incremental", ds, MED, FAST_BALANCE)
        auc_rows = [c for c in res.comparisons if c.metric.startswith("auc")]
        assert len(auc_rows) == 3
        assert sum(c.verdict == "+" for c in auc_rows) >= 2


class TestEmission:
    def test_jsonl_round_trip(self, small_result, tmp_path):
        path = tmp_path / "reports.jsonl"
        write_reports_jsonl(small_result.reports, str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == len(small_result.reports)
        parsed = json.loads(lines[0])
        assert parsed == dataclasses.asdict(small_result.reports[0])
        assert list(parsed) == sorted(parsed)

    def test_csv_shape_and_reruns_byte_identical(self, small_result, tmp_path):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        write_comparisons_csv(small_result.comparisons, str(first))
        write_comparisons_csv(small_result.comparisons, str(second))
        text = first.read_text()
        assert text.splitlines()[0] == "project,metric,without,with,verdict"
        assert len(text.splitlines()) == 1 + len(small_result.comparisons)
        assert text == second.read_text()
        cell = text.splitlines()[1].split(",")[2]
        assert float(cell) == small_result.comparisons[0].without
