"""
Machine-readable result files: CSV tables through pandas, JSON documents
with sorted keys so identical runs give identical bytes.
"""

import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np
import pandas as pd

from src.domain.episode_log import EpisodeLog

PathLike = Union[str, Path]


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def write_json(path: PathLike, document: Dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(document), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_table(path: PathLike, table: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.10g")
    return path


# ----------------------------------------------------------------------
# Episode dumps
# ----------------------------------------------------------------------
def write_episode(out_dir: PathLike, log: EpisodeLog, stem: str = "episode") -> Dict[str, Path]:
    """
    <stem>.json (full log, initial and final allocation included) and
    <stem>-steps.csv (step, team, total_fire, psi, power, L).
    """
    out_dir = Path(out_dir)
    return {
        "log": write_json(out_dir / f"{stem}.json", log.to_dict()),
        "steps": write_table(out_dir / f"{stem}-steps.csv", log.step_table()),
    }


def allocation_table(log: EpisodeLog) -> pd.DataFrame:
    """Initial and final per-team allocation side by side, one row per team and phase."""
    rows = [{"phase": "initial", **vars(s)} for s in log.initial_allocation]
    rows += [{"phase": "final", **vars(s)} for s in log.final_allocation]
    return pd.DataFrame(rows, columns=["phase", "team", "weight", "n_robots", "n_sensing", "n_fighting", "total_fire"])


def fire_is_monotone(log: EpisodeLog, tol: float = 1e-12) -> bool:
    """Per-team total fire never increases from one logged step to the next."""
    previous = [s.total_fire for s in log.initial_allocation] or None
    for record in log.steps:
        if previous is not None and any(b > a + tol * max(a, 1.0) for a, b in zip(previous, record.team_fire)):
            return False
        previous = record.team_fire
    return True
