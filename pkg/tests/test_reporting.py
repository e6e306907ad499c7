import io
import json
import zipfile

import numpy as np
import pandas as pd

from src.domain._2exact_solver import solve_iterative_exact
from src.reporting.csv_export import allocation_table, write_episode, write_json, write_table
from src.reporting.excel_export import export_run_report_to_excel

BENCH = pd.DataFrame(
    [
        {"teams": 3, "robots": 9, "method": "gnn", "total_seconds": 0.2, "mean_step_seconds": 0.02, "steps": 10, "timed_out": False},
        {"teams": 2, "robots": 6, "method": "exact", "total_seconds": 0.5, "mean_step_seconds": 0.1, "steps": 5, "timed_out": False},
        {"teams": 3, "robots": 9, "method": "exact", "total_seconds": 60.0, "mean_step_seconds": 60.0, "steps": 0, "timed_out": True},
        {"teams": 2, "robots": 6, "method": "gnn", "total_seconds": 0.1, "mean_step_seconds": 0.01, "steps": 10, "timed_out": False},
    ]
)
HISTORY = pd.DataFrame(
    {
        "epoch": [1, 2],
        "train_loss": [1.0, 0.5],
        "val_loss": [1.1, 0.7],
        "exact_acc": [0.6, 0.8],
        "ms_acc": [0.7, 0.9],
        "top3": [0.9, 1.0],
        "move_target": [0.2, 0.5],
        "move_precision": [0.3, 0.6],
        "move_recall": [0.1, 0.4],
    }
)


def test_json_is_sorted_and_plain(tmp_path):
    path = write_json(tmp_path / "doc.json", {"b": np.float64(1.5), "a": (1, 2), "c": float("inf")})
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [1, 2], "b": 1.5, "c": "inf"}


def test_table_has_no_index(tmp_path):
    path = write_table(tmp_path / "t.csv", pd.DataFrame({"x": [1.0 / 3.0]}))
    assert path.read_text().splitlines() == ["x", "0.3333333333"]


def test_episode_files(tmp_path, two_team_fire):
    log = solve_iterative_exact(two_team_fire, timeout=None)
    paths = write_episode(tmp_path, log, stem="exact-episode")
    assert paths["log"].name == "exact-episode.json"
    doc = json.loads(paths["log"].read_text())
    assert doc["terminal_reason"] == log.terminal_reason
    steps = pd.read_csv(paths["steps"])
    assert list(steps.columns) == ["step", "team", "total_fire", "psi", "power", "L"]
    assert len(steps) == 2 * len(log.steps)

    table = allocation_table(log)
    assert table["phase"].tolist() == ["initial", "initial", "final", "final"]
    assert table["n_robots"].sum() == 6


def test_run_report_workbook():
    data = export_run_report_to_excel(BENCH, HISTORY).getvalue()
    assert data[:2] == b"PK"
    with zipfile.ZipFile(io.BytesIO(data)) as book:
        workbook = book.read("xl/workbook.xml").decode()
        assert "Summary" in workbook
        assert "Runtime Scaling" in workbook
        assert "Training History" in workbook
        assert any(name.startswith("xl/charts/") for name in book.namelist())


def test_run_report_without_history():
    data = export_run_report_to_excel(BENCH).getvalue()
    with zipfile.ZipFile(io.BytesIO(data)) as book:
        assert "Training History" not in book.read("xl/workbook.xml").decode()
