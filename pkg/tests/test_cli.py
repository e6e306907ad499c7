import json

import pandas as pd
import pytest

from src.cli import main, resolve_out_dir
from src.core.schema import save_instance
from src.ingestion._3instance_sampler import sample_instance

SMALL_GEN = ["--n", "8", "--teams-min", "2", "--teams-max", "3", "--robots-min", "2", "--robots-max", "2", "--threads", "1"]


def _meta(out_dir):
    return json.loads((out_dir / "run-meta.json").read_text())


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen -> train once for the whole module."""
    root = tmp_path_factory.mktemp("pipeline")
    data, model = root / "data", root / "model"
    assert main(["gen", *SMALL_GEN, "--timeout-ms", "0", "--seed", "3", "--out-dir", str(data)]) == 0
    assert main(["train", "--data", str(data), "--epochs", "2", "--hidden", "8", "--batch-size", "4", "--out-dir", str(model)]) == 0
    instance = save_instance(sample_instance(11, team_range=(3, 3), robots_per_team_range=(2, 2)), root / "instance.json")
    return root, data, model, instance


def test_out_dir_precedence(monkeypatch, tmp_path):
    monkeypatch.setenv("ALTRUIST_OUT_DIR", str(tmp_path / "env"))
    assert resolve_out_dir(tmp_path / "flag") == tmp_path / "flag"
    assert resolve_out_dir(None) == tmp_path / "env"
    monkeypatch.delenv("ALTRUIST_OUT_DIR")
    assert str(resolve_out_dir(None)) == "runs"


def test_gen_writes_dataset_and_meta(pipeline):
    _, data, _, _ = pipeline
    for name in ("train.jsonl", "val.jsonl", "test.jsonl", "manifest.json"):
        assert (data / name).exists()
    meta = _meta(data)
    assert meta["command"] == "gen"
    assert meta["seed"] == 3
    assert meta["flags"]["n"] == 8
    assert meta["feature_schema"] == "fire-features-v1"


def test_train_writes_history_and_checkpoint(pipeline):
    _, _, model, _ = pipeline
    history = pd.read_csv(model / "history.csv")
    assert history["epoch"].tolist() == [1, 2]
    metrics = json.loads((model / "train-metrics.json").read_text())
    assert 0.0 <= metrics["all_stay_baseline"] <= 1.0
    assert metrics["test"]["top3"] >= metrics["test"]["exact_acc"]
    assert (model / "policy.ckpt.json").exists()


def test_eval_reports_metrics_and_gap(pipeline, tmp_path):
    _, data, model, _ = pipeline
    code = main(
        [
            "eval", "--data", str(data), "--checkpoint", str(model / "policy.ckpt.json"), "--split", "train",
            "--gap-instances", "2", "--teams-min", "2", "--teams-max", "2", "--timeout-ms", "0", "--out-dir", str(tmp_path),
        ]
    )
    assert code == 0
    doc = json.loads((tmp_path / "eval.json").read_text())
    assert doc["split"] == "train"
    assert doc["gap"]["instances"] == 2
    assert len(pd.read_csv(tmp_path / "gap.csv")) == 2


def test_infer_with_exact_writes_both_episodes(pipeline, tmp_path):
    _, _, model, instance = pipeline
    code = main(
        [
            "infer", "--instance", str(instance), "--checkpoint", str(model / "policy.ckpt.json"),
            "--max-steps", "5", "--with-exact", "--exact-timeout-ms", "0", "--out-dir", str(tmp_path),
        ]
    )
    assert code == 0
    for name in ("episode.json", "episode-steps.csv", "episode-allocation.csv", "exact-episode.json", "exact-episode-steps.csv"):
        assert (tmp_path / name).exists()
    assert set(_meta(tmp_path)["outputs"]) >= {"log", "steps", "allocation", "exact_log", "exact_steps"}


def test_solve_one_step(pipeline, tmp_path):
    instance = pipeline[3]
    assert main(["solve", "--instance", str(instance), "--timeout-ms", "0", "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "solve.json").read_text())
    assert len(doc["best_assignment"]) == 6
    assert not doc["timed_out"]


def test_solve_iterate(pipeline, tmp_path):
    instance = pipeline[3]
    assert main(["solve", "--instance", str(instance), "--iterate", "--max-steps", "3", "--timeout-ms", "0", "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "exact-episode.json").exists()


def test_bench_with_excel(pipeline, tmp_path):
    _, _, model, _ = pipeline
    code = main(
        [
            "bench", "--sizes", "2,3", "--robots-per-team", "2", "--max-steps", "3", "--threads", "1",
            "--checkpoint", str(model / "policy.ckpt.json"), "--excel", "--history", str(model / "history.csv"),
            "--out-dir", str(tmp_path),
        ]
    )
    assert code == 0
    table = pd.read_csv(tmp_path / "bench.csv")
    assert sorted(table["method"].unique()) == ["exact", "gnn"]
    assert (tmp_path / "run-report.xlsx").read_bytes()[:2] == b"PK"


def test_inspect_schema(capsys, tmp_path):
    assert main(["inspect", "--schema", "--out-dir", str(tmp_path)]) == 0
    schema = json.loads(capsys.readouterr().out)
    assert "assignment" in json.dumps(schema)
    assert (tmp_path / "run-meta.json").exists()


def test_inspect_checkpoint(pipeline, capsys, tmp_path):
    _, _, model, _ = pipeline
    assert main(["inspect", "--checkpoint", str(model / "policy.ckpt.json"), "--out-dir", str(tmp_path)]) == 0
    header = json.loads(capsys.readouterr().out)
    assert header["architecture"]["hidden"] == 8


def test_missing_instance_is_a_user_error(tmp_path, capsys):
    assert main(["solve", "--instance", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)]) == 1
    assert "missing.json" in capsys.readouterr().err


def test_unknown_flag_is_a_user_error(tmp_path):
    assert main(["gen", "--n", "2", "--bogus", "--out-dir", str(tmp_path)]) == 1


def test_help_exits_cleanly():
    assert main(["--help"]) == 0


def test_foreign_checkpoint_is_a_user_error(tmp_path, pipeline):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code = main(["infer", "--instance", str(pipeline[3]), "--checkpoint", str(bad), "--out-dir", str(tmp_path)])
    assert code == 1


@pytest.mark.parametrize("command", [["solve"], ["solve", "--iterate"], ["infer"]])
def test_instance_without_mission_is_a_user_error(command, pipeline, tmp_path, capsys):
    _, _, model, _ = pipeline
    bare = save_instance(sample_instance(11, team_range=(2, 2)).with_mission(None), tmp_path / "bare.json")
    argv = [*command, "--instance", str(bare), "--out-dir", str(tmp_path / "out")]
    if command[0] == "infer":
        argv += ["--checkpoint", str(model / "policy.ckpt.json")]
    assert main(argv) == 1
    assert "mission_params" in capsys.readouterr().err
