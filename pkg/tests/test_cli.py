"""End-to-end command line checks.

Each test drives main() in process and inspects the run directory it
prints. Synthetic CSVs are generated through the synth subcommand, so the
fixtures double as smoke coverage for it.
"""

import glob
import json
import os

import numpy as np
import pytest

import jitsdp
from jitsdp.cli import main
from jitsdp.curve import PrincipalCurve
from jitsdp.data import (
    ChangeMetrics,
    Changeset,
    DEFAULT_FEATURES,
    Dataset,
    load_csv,
    save_csv,
)
from jitsdp.stats import drift_series, pair_table

TINY_TOML = """
seed = 3
out_dir = "{out}"

[input]
path = "{csv}"

[train]
epochs = 3
hidden_size = 8
num_layers = 1
dropout_rate = 0.0
early_stop_patience = 2

[balance]
batch_fraction = 1.0
max_rejects = 5

[balance.curve]
segments = 20

[plan]
seeds = [0]
repeats = 10
"""


def only_dir(root, pattern):
    hits = glob.glob(os.path.join(root, pattern))
    assert len(hits) == 1, hits
    return hits[0]


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def markov_csv(workdir):
    out = str(workdir / "fixtures")
    assert main(["synth", "markov", "--n", "400", "--seed", "3", "--out", out]) == 0
    return os.path.join(only_dir(out, "synth-markov-400-*"), "markov.csv")


@pytest.fixture(scope="module")
def manifold_csv(workdir):
    out = str(workdir / "fixtures")
    assert main(["synth", "manifold", "--n", "600", "--seed", "3", "--out", out]) == 0
    return os.path.join(only_dir(out, "synth-manifold-600-*"), "manifold.csv")


@pytest.fixture(scope="module")
def joint_csv(workdir):
    out = str(workdir / "fixtures")
    assert main(["synth", "joint", "--n", "1200", "--seed", "3", "--out", out]) == 0
    return os.path.join(only_dir(out, "synth-joint-1200-*"), "joint.csv")


@pytest.fixture(scope="module")
def line_csv(workdir):
    """80 rows whose (la, ld) points sit exactly on ld = 2 la + 1."""
    t = np.linspace(0.0, 10.0, 80)
    rows = tuple(
        Changeset(
            id=f"r{i:03d}",
            timestamp=1_000_000 + 60 * i,
            metrics=ChangeMetrics(
                ns=0, nd=0, nf=0, entropy=0, la=float(v), ld=float(2 * v + 1),
                lt=0, ndev=0, age=0, nuc=0, exp=0, rexp=0, sexp=0, fix=False,
            ),
            label=i % 2,
        )
        for i, v in enumerate(t)
    )
    path = str(workdir / "line.csv")
    save_csv(Dataset(rows, feature_names=("la", "ld")), path)
    return path


@pytest.fixture(scope="module")
def tiny_config(workdir, markov_csv):
    path = workdir / "tiny.toml"
    path.write_text(TINY_TOML.format(out=workdir / "runs", csv=markov_csv))
    return str(path)


@pytest.fixture(scope="module")
def joint_config(workdir, joint_csv):
    path = workdir / "joint.toml"
    path.write_text(TINY_TOML.format(out=workdir / "runs", csv=joint_csv))
    return str(path)


class TestParsing:
    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 2
        capsys.readouterr()

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert main(["frobnicate"]) == 2
        capsys.readouterr()

    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert main(["synth", "--help"]) == 0
        capsys.readouterr()

    def test_missing_seed_reports_one_line(self, tmp_path, capsys):
        code = main(["synth", "markov", "--n", "10", "--out", str(tmp_path)])
        err = capsys.readouterr().err
        assert code == 1
        assert err.startswith("jitsdp: error:")
        assert err.strip().count("\n") == 0


class TestSynth:
    def test_manifest_and_csv(self, workdir, markov_csv):
        run_dir = os.path.dirname(markov_csv)
        manifest = read_json(os.path.join(run_dir, "manifest.json"))
        assert manifest["command"] == "synth"
        assert manifest["kind"] == "markov"
        assert manifest["seed"] == 3
        assert manifest["versions"]["jitsdp"] == jitsdp.__version__
        assert len(load_csv(markov_csv)) == 400

    def test_drifting_flip_mode(self, tmp_path):
        out = str(tmp_path)
        assert main(
            ["synth", "drifting", "--n", "60", "--drift-mode", "flip", "--seed", "1", "--out", out]
        ) == 0
        csv = os.path.join(only_dir(out, "synth-drifting-60-*"), "drifting.csv")
        assert len(load_csv(csv)) == 60

    def test_bad_n_rejected(self, tmp_path, capsys):
        assert main(["synth", "markov", "--n", "0", "--seed", "1", "--out", str(tmp_path)]) == 1
        assert "jitsdp: error:" in capsys.readouterr().err


class TestPreprocess:
    def test_outputs_and_rerun_identity(self, tmp_path, markov_csv, capsys):
        out = str(tmp_path)
        argv = ["preprocess", "--input", markov_csv, "--seed", "1", "--out", out]
        assert main(argv) == 0
        run_dir = capsys.readouterr().out.strip()
        processed = os.path.join(run_dir, "processed.csv")
        features = read_json(os.path.join(run_dir, "features.json"))
        assert sorted(features["retained"] + features["removed"]) == sorted(DEFAULT_FEATURES)

        raw = load_csv(markov_csv)
        cooked = load_csv(processed)
        assert len(cooked) == len(raw)
        # ln(1 + x) shrinks every metric that starts above e - 1
        assert cooked.features(("la",)).max() < raw.features(("la",)).max()

        before = {
            name: open(os.path.join(run_dir, name), "rb").read()
            for name in ("processed.csv", "features.json", "manifest.json")
        }
        assert main(argv) == 0
        capsys.readouterr()
        for name, blob in before.items():
            assert open(os.path.join(run_dir, name), "rb").read() == blob


class TestAnalyze:
    def test_relationship_payload_matches_direct_counts(self, tmp_path, markov_csv, capsys):
        assert main(
            ["analyze-relationship", "--input", markov_csv, "--seed", "1", "--out", str(tmp_path)]
        ) == 0
        run_dir = capsys.readouterr().out.strip()
        payload = read_json(os.path.join(run_dir, "relationship.json"))

        table = pair_table(load_csv(markov_csv))
        assert payload["pair_counts"]["n00"] == table.n00
        assert payload["pair_counts"]["n11"] == table.n11
        assert payload["pair_counts"]["total"] == 399
        assert 0.0 <= payload["chi_square"]["p_value"] <= 1.0
        assert payload["intersecting_fraction"] is None
        assert abs(sum(payload["triplets"]["p"].values()) - 1.0) < 1e-9

    def test_two_rows_surface_a_degenerate_table(self, tmp_path, capsys):
        csv = tmp_path / "two.csv"
        csv.write_text(
            "commit_id,timestamp,ns,nd,nf,entropy,la,ld,lt,ndev,age,nuc,exp,rexp,sexp,fix,label\n"
            "a,100,1,1,1,0.5,2,1,10,1,5,1,3,2,1,0,0\n"
            "b,200,1,1,1,0.5,2,1,10,1,5,1,3,2,1,1,1\n"
        )
        code = main(
            ["analyze-relationship", "--input", str(csv), "--seed", "1", "--out", str(tmp_path)]
        )
        err = capsys.readouterr().err
        assert code == 1
        assert err.startswith("jitsdp: error:")

    def test_drift_csv_row_count(self, tmp_path, markov_csv, capsys):
        assert main(
            ["analyze-drift", "--input", markov_csv, "--seed", "1", "--out", str(tmp_path)]
        ) == 0
        run_dir = capsys.readouterr().out.strip()
        with open(os.path.join(run_dir, "drift.csv")) as fh:
            lines = fh.read().splitlines()
        series = drift_series(load_csv(markov_csv))
        assert lines[0] == "window_start,p01,p11"
        assert len(lines) == 1 + len(series.window_starts)


class TestFitCurve:
    def test_line_fixture_recovered(self, tmp_path, line_csv, capsys):
        assert main(
            ["fit-curve", "--input", line_csv, "--features", "la,ld",
             "--seed", "1", "--out", str(tmp_path)]
        ) == 0
        run_dir = capsys.readouterr().out.strip()
        with open(os.path.join(run_dir, "curve.json")) as fh:
            curve = PrincipalCurve.from_json(fh.read())
        assert curve.dim == 2
        la, ld = curve.vertices[:, 0], curve.vertices[:, 1]
        assert np.max(np.abs(ld - (2.0 * la + 1.0))) < 1e-3
        report = read_json(os.path.join(run_dir, "fit_report.json"))
        assert report["iterations"] >= 1
        assert report["final_distance"] < 1e-6

        with open(os.path.join(run_dir, "projection.csv")) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "la,ld"
        assert len(lines) == 1 + len(curve.vertices)
        first = [float(v) for v in lines[1].split(",")]
        assert first == pytest.approx(curve.vertices[0].tolist(), abs=1e-12)


class TestBalance:
    def test_balanced_csv_round_trips(self, tmp_path, manifold_csv, capsys):
        assert main(
            ["balance", "--input", manifold_csv, "--features", "la,ld",
             "--seed", "3", "--out", str(tmp_path)]
        ) == 0
        run_dir = capsys.readouterr().out.strip()
        summary = read_json(os.path.join(run_dir, "balance.json"))
        assert summary["n_original"] == 600
        counts = set(summary["per_class_counts"].values())
        assert len(counts) == 1  # every class topped up to the same size
        assert summary["n_balanced"] == sum(summary["per_class_counts"].values())

        reloaded = load_csv(os.path.join(run_dir, "balanced.csv"))
        assert len(reloaded) == summary["n_balanced"]
        labels = reloaded.labels()
        assert int((labels == 0).sum()) == int((labels == 1).sum())
        assert any(c.id.startswith("synthetic-") for c in reloaded.changesets)


class TestTrainEvaluate:
    def test_forecaster_round_trip(self, tiny_config, workdir, capsys):
        assert main(["train", "--config", tiny_config, "--model", "forecaster"]) == 0
        run_dir = capsys.readouterr().out.strip()
        for name in ("model.json", "scaler.json", "metrics.json", "manifest.json"):
            assert os.path.exists(os.path.join(run_dir, name))
        scaler = read_json(os.path.join(run_dir, "scaler.json"))
        assert scaler["model"] == "forecaster"
        assert scaler["feature_names"] == list(DEFAULT_FEATURES)
        assert len(scaler["mu"]) == len(DEFAULT_FEATURES)

        assert main(["evaluate", "--config", tiny_config, "--model-dir", run_dir]) == 0
        eval_dir = capsys.readouterr().out.strip()
        scores = read_json(os.path.join(eval_dir, "evaluation.json"))
        assert scores["n"] == 400 - scaler["lookback"]
        assert scores["auc_roc"] is None or 0.0 <= scores["auc_roc"] <= 1.0

    def test_deepicp_trains_with_balancing(self, tiny_config, capsys):
        assert main(["train", "--config", tiny_config, "--model", "deepicp"]) == 0
        run_dir = capsys.readouterr().out.strip()
        assert read_json(os.path.join(run_dir, "scaler.json"))["use_forecast"] is True

    def test_ablated_unbalanced_variant(self, tiny_config, capsys):
        assert main(
            ["train", "--config", tiny_config, "--model", "deepicp",
             "--no-forecast", "--no-balance"]
        ) == 0
        run_dir = capsys.readouterr().out.strip()
        assert read_json(os.path.join(run_dir, "scaler.json"))["use_forecast"] is False

    def test_logistic_round_trip(self, tiny_config, capsys):
        assert main(["train", "--config", tiny_config, "--model", "logistic"]) == 0
        train_dir = capsys.readouterr().out.strip()
        assert main(["evaluate", "--config", tiny_config, "--model-dir", train_dir]) == 0
        eval_dir = capsys.readouterr().out.strip()
        assert read_json(os.path.join(eval_dir, "evaluation.json"))["n"] == 400

    def test_feature_mismatch_rejected(self, tiny_config, workdir, capsys):
        assert main(["train", "--config", tiny_config, "--model", "logistic"]) == 0
        train_dir = capsys.readouterr().out.strip()
        code = main(
            ["evaluate", "--config", tiny_config, "--model-dir", train_dir,
             "--features", "la,ld"]
        )
        err = capsys.readouterr().err
        assert code == 1
        assert "do not match" in err

    def test_missing_checkpoint_dir(self, tiny_config, tmp_path, capsys):
        code = main(
            ["evaluate", "--config", tiny_config, "--model-dir", str(tmp_path / "nowhere")]
        )
        assert code == 1
        assert "missing checkpoint" in capsys.readouterr().err


class TestExperiment:
    def test_rq1_report(self, tiny_config, capsys):
        assert main(["experiment", "rq1", "--config", tiny_config]) == 0
        run_dir = capsys.readouterr().out.strip()
        report = read_json(os.path.join(run_dir, "rq1.json"))
        assert report["verdict"] in ("+", "-", "=")
        assert report["seeds"] == [0]
        assert 0.3 <= report["baseline_mean"] <= 0.7
        assert report["n_test"] == 400 - 6 - round(0.8 * (400 - 6))

    def test_rq4a_outputs_and_parallel_identity(self, joint_config, capsys):
        assert main(["experiment", "rq4a", "--config", joint_config, "--jobs", "1"]) == 0
        run_dir = capsys.readouterr().out.strip()
        with open(os.path.join(run_dir, "reports.jsonl"), "rb") as fh:
            sequential = fh.read()
        rows = [json.loads(line) for line in sequential.splitlines()]
        assert len(rows) == 8  # 2 scenarios x 4 evaluation segments x 1 seed
        assert {r["scenario"] for r in rows} == {"smote", "smotepc"}
        assert all(0.0 <= r["auc_roc"] <= 1.0 for r in rows)
        with open(os.path.join(run_dir, "comparisons.csv")) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "project,metric,without,with,verdict"
        assert len(lines) == 1 + 8

        assert main(["experiment", "rq4a", "--config", joint_config, "--jobs", "2"]) == 0
        capsys.readouterr()
        with open(os.path.join(run_dir, "reports.jsonl"), "rb") as fh:
            assert fh.read() == sequential

    def test_manifest_names_the_question(self, joint_config, capsys):
        assert main(["experiment", "rq4c", "--config", joint_config]) == 0
        run_dir = capsys.readouterr().out.strip()
        assert read_json(os.path.join(run_dir, "manifest.json"))["question"] == "rq4c"
        # the aging scan has no pairing, so the table is header-only
        with open(os.path.join(run_dir, "comparisons.csv")) as fh:
            assert len(fh.read().splitlines()) == 1


class TestEnvironmentFlow:
    def test_env_seed_reaches_manifest(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("JITSDP_SEED", "21")
        assert main(["synth", "markov", "--n", "50", "--out", str(tmp_path)]) == 0
        run_dir = capsys.readouterr().out.strip()
        assert read_json(os.path.join(run_dir, "manifest.json"))["seed"] == 21

    def test_same_invocation_reuses_the_run_directory(self, tmp_path, capsys):
        argv = ["synth", "markov", "--n", "30", "--seed", "2", "--out", str(tmp_path)]
        assert main(argv) == 0
        assert main(argv) == 0
        capsys.readouterr()
        assert len(glob.glob(str(tmp_path / "synth-markov-30-*"))) == 1

    def test_different_seeds_use_distinct_directories(self, tmp_path, capsys):
        for seed in ("4", "5"):
            assert main(
                ["synth", "markov", "--n", "30", "--seed", seed, "--out", str(tmp_path)]
            ) == 0
        capsys.readouterr()
        assert len(glob.glob(str(tmp_path / "synth-markov-30-*"))) == 2
