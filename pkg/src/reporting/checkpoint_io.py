"""
Policy checkpoints as a single JSON document.

Layout:
  format, version, feature_schema, architecture {hidden, dropout, seed, dims},
  normalization {...}, parameters {name: {shape, dtype, data}}
where data is the base64 of the little-endian float64 buffer. Keys are
sorted, so saving the same parameters twice gives identical bytes.
"""

import base64
import binascii
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np

from src.core.errors import CheckpointFormatError, SchemaMismatchError
from src.core.settings import SETTINGS
from src.domain._6gnn_policy import PolicyNet
from src.ingestion._4feature_encoding import NormalizationStats, check_schema

FORMAT = "altruist-policy"
VERSION = 1


def _encode(value: np.ndarray) -> Dict[str, Any]:
    data = np.ascontiguousarray(value, dtype="<f8").tobytes()
    return {"shape": list(value.shape), "dtype": "<f8", "data": base64.b64encode(data).decode("ascii")}


def _decode(entry: Dict[str, Any]) -> np.ndarray:
    raw = base64.b64decode(entry["data"], validate=True)
    return np.frombuffer(raw, dtype=entry.get("dtype", "<f8")).astype(np.float64).reshape(entry["shape"])


def checkpoint_document(
    net: PolicyNet, stats: NormalizationStats, extra: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    return {
        "format": FORMAT,
        "version": VERSION,
        "feature_schema": net.feature_schema,
        "architecture": {"hidden": net.hidden, "dropout": net.dropout, "seed": net.seed, "dims": net.dims},
        "normalization": stats.to_dict(),
        "parameters": {name: _encode(value) for name, value in net.state_dict().items()},
        "extra": extra or {},
    }


def save_checkpoint(
    path: Union[str, Path], net: PolicyNet, stats: NormalizationStats, extra: Optional[Dict[str, Any]] = None
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(checkpoint_document(net, stats, extra), sort_keys=True, indent=1)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_checkpoint_header(path: Union[str, Path]) -> Dict[str, Any]:
    """Everything but the parameter payloads (for inspection)."""
    doc = _read(Path(path))
    header = {k: v for k, v in doc.items() if k != "parameters"}
    header["parameters"] = {name: entry.get("shape") for name, entry in doc["parameters"].items()}
    return header


def _read(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: not a JSON checkpoint ({exc})") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise CheckpointFormatError(f"{path}: unknown checkpoint format")
    if doc.get("version") != VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    for key in ("feature_schema", "architecture", "normalization", "parameters"):
        if key not in doc:
            raise CheckpointFormatError(f"{path}: missing '{key}'")
    return doc


def load_checkpoint(
    path: Union[str, Path], expected_schema: str = SETTINGS.FEATURE_SCHEMA
) -> Tuple[PolicyNet, NormalizationStats, Dict[str, Any]]:
    """Rebuilds the net and its normalization; validates the feature schema."""
    path = Path(path)
    doc = _read(path)
    check_schema(doc["feature_schema"], expected_schema)

    arch = doc["architecture"]
    try:
        dims = arch["dims"]
        net = PolicyNet(
            hidden=int(arch["hidden"]),
            dropout=float(arch["dropout"]),
            seed=int(arch["seed"]),
            team_dim=int(dims["team"]),
            robot_dim=int(dims["robot"]),
            edge_dim=int(dims["edge"]),
            feature_schema=doc["feature_schema"],
        )
        state = {name: _decode(entry) for name, entry in doc["parameters"].items()}
        stats = NormalizationStats.from_dict(doc["normalization"])
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        raise CheckpointFormatError(f"{path}: corrupt checkpoint ({exc})") from exc

    try:
        net.load_state_dict(state)
    except SchemaMismatchError as exc:
        raise CheckpointFormatError(f"{path}: {exc}") from exc
    return net, stats, doc.get("extra", {})
