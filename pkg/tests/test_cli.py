import json
import subprocess
import sys
import time

import numpy as np
import pytest

from dyadflow.cli import main
from dyadflow.dataset import LabeledDataset
from helpers import toy_dataset


@pytest.fixture(scope="module")
def synth_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(root), "--pairs", "2", "--rounds", "1", "--samplings", "3", "--seed", "1"]) == 0
    return root


@pytest.fixture(scope="module")
def features_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("feat") / "features.csv"
    ds = toy_dataset(np.random.default_rng(0), 60, informative=["T7 SD", "AF3 Mean", "F4 CCC θ"], shift=2.5)
    ds.to_csv(path)
    return path


def test_synth_smoke_under_budget(tmp_path):
    t0 = time.perf_counter()
    assert main(["synth", "--out", str(tmp_path), "--pairs", "2"]) == 0
    assert time.perf_counter() - t0 < 5.0
    assert len(list(tmp_path.glob("*-*-*/*.csv"))) == 2 * 2 * 15


def test_extract(synth_root, tmp_path, capsys):
    out = tmp_path / "a.csv"
    assert main(["extract", "--data-root", str(synth_root), "--out", str(out)]) == 0
    assert "12 rows x 272 feature columns" in capsys.readouterr().out
    ds = LabeledDataset.from_csv(out)
    assert ds.X.shape == (12, 272)
    assert main(["extract", "--data-root", str(synth_root), "--out", str(tmp_path / "b.csv")]) == 0
    assert out.read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_extract_missing_manifest(tmp_path, capsys):
    assert main(["extract", "--data-root", str(tmp_path)]) == 1
    assert "manifest not found" in capsys.readouterr().err


def test_train_eval(features_csv, tmp_path, capsys):
    args = ["train-eval", "--features", str(features_csv), "--models", "lr,dt", "--feature-set", "L+F",
            "--seed", "42", "--folds", "5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["summary"] == b["summary"] and a["folds"] == b["folds"]
    assert len(a["folds"]) == 10 and len(a["summary"]) == 2
    assert a["config"]["seed"] == 42 and len(a["config"]["digest"]) == 16
    assert "LR" in capsys.readouterr().out


def test_train_eval_from_dataset_tree(synth_root, tmp_path):
    assert main(["train-eval", "--data-root", str(synth_root), "--models", "lr", "--folds", "2",
                 "--no-smote", "--out", str(tmp_path)]) == 0


def test_compare_synchrony(features_csv, tmp_path):
    assert main(["train-eval", "--features", str(features_csv), "--models", "lr", "--compare-synchrony",
                 "--folds", "4", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert {c["metric"] for c in rep["comparisons"]} == {"accuracy", "precision", "recall", "f1"}
    assert (tmp_path / "report_pvalues.csv").exists()


def test_ablate(features_csv, tmp_path):
    assert main(["ablate", "--features", str(features_csv), "--models", "lr", "--folds", "3",
                 "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "ablation.json").read_text())["ablation"]
    assert [r["feature_set"] for r in rows] == ["L", "F", "L+F", "L+F+LS", "L+F+FS", "L+F+FS+LS"]
    assert rows[0]["deltas"]["accuracy"] == 0.0
    for r in rows:
        assert r["deltas"]["recall"] == pytest.approx(100 * (r["means"]["recall"] - rows[0]["means"]["recall"]))


@pytest.mark.parametrize("method,model", [("coef", "lr"), ("mdi", "rf"), ("shap", "nn")])
def test_importance(features_csv, tmp_path, method, model):
    extra = ["--shap-samples", "50", "--background", "10", "--explain-rows", "2"] if method == "shap" else []
    assert main(["importance", "--features", str(features_csv), "--method", method, "--models", model,
                 "--folds", "2", "--feature-set", "L", "--out", str(tmp_path)] + extra) == 0
    rep = json.loads((tmp_path / f"importance_{method}.json").read_text())
    top = rep["importance"][0]["top"]
    assert len(top) == 20
    assert top[0]["feature"] == "T7 SD"


def test_importance_method_mismatch(features_csv, capsys):
    with pytest.raises(SystemExit) as info:
        main(["importance", "--features", str(features_csv), "--method", "mdi", "--models", "lr"])
    assert info.value.code == 2
    assert "requires RF" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv,needle",
    [
        (["train-eval", "--models", "xgb"], "unknown model"),
        (["train-eval", "--paper-mode", "--group-folds"], "mutually exclusive"),
        (["train-eval", "--feature-set", "L+Q"], "unknown feature group"),
        (["synth", "--out", "x", "--coupling", "2"], "coupling"),
    ],
)
def test_usage_errors(features_csv, argv, needle, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv + ["--features", str(features_csv)] if argv[0] != "synth" else argv)
    assert info.value.code == 2
    assert needle in capsys.readouterr().err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "dyadflow", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "0.1.0" in out.stdout
