"""Artifact writers: run logs, metrics, expressions, sweep tables and model checkpoints."""
from __future__ import annotations

import json
import logging
import os
from typing import Sequence

import pandas as pd
from pydantic import ValidationError

from src import symbolic as sym
from src.errors import CorruptCheckpoint
from src.models import Checkpoint, LogEntry, Metrics

logger = logging.getLogger(__name__)

RUN_LOG_COLUMNS = ["epoch", "train-loss", "val-loss", "active-params", "penalty-term"]


def export_csv(df: pd.DataFrame) -> bytes:
    return df.to_csv(index=False, float_format="%.17g").encode("utf-8")


def export_json(payload: dict) -> bytes:
    return json.dumps(payload, indent=2, sort_keys=True).encode("utf-8")


def _write(path: str, data: bytes) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(data)
    return path


def run_log_frame(history: Sequence[LogEntry]) -> pd.DataFrame:
    rows = [[e.epoch, e.train_loss, e.val_loss, e.active_params, e.penalty_term] for e in history]
    return pd.DataFrame(rows, columns=RUN_LOG_COLUMNS)


def write_run_log(history: Sequence[LogEntry], path: str) -> str:
    return _write(path, export_csv(run_log_frame(history)))


def write_metrics(metrics: Metrics, path: str) -> str:
    # Non-finite losses serialize as null.
    return _write(path, export_json(json.loads(metrics.model_dump_json())))


def write_frame(df: pd.DataFrame, path: str) -> str:
    return _write(path, export_csv(df))


def expression_documents(expr: sym.ExprNode, decimals: int | None = 3) -> dict[str, bytes]:
    """Plain text, LaTeX and JSON renderings keyed by file suffix."""
    payload = {
        "plain": sym.render(expr, "plain", decimals),
        "latex": sym.render(expr, "latex", decimals),
        "plain_full": sym.render(expr, "plain", None),
        "symbols": sorted(expr.symbols()),
        "decimals": decimals,
        "tree": expr.to_dict(),
    }
    return {
        ".expr.txt": (payload["plain"] + "\n").encode("utf-8"),
        ".expr.tex": (payload["latex"] + "\n").encode("utf-8"),
        ".expr.json": export_json(payload),
    }


def write_expressions(expr: sym.ExprNode, stem: str, decimals: int | None = 3) -> dict[str, str]:
    paths = {}
    for suffix, data in expression_documents(expr, decimals).items():
        paths[suffix.strip(".").replace(".", "_")] = _write(stem + suffix, data)
    return paths


def load_expression(path: str) -> sym.ExprNode:
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        return sym.ExprNode.from_dict(payload["tree"])
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise CorruptCheckpoint(f"Cannot read expression file {path}: {e}", path=path) from None


def save_checkpoint(checkpoint: Checkpoint, path: str) -> str:
    path = _write(path, export_json(checkpoint.model_dump()))
    logger.info("Checkpoint written to %s", path)
    return path


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, encoding="utf-8") as f:
            payload = json.load(f)
        return Checkpoint.model_validate(payload)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise CorruptCheckpoint(f"Cannot read checkpoint {path}: {type(e).__name__}", path=path) from None
