"""Regression metrics for fitted constitutive models."""
from __future__ import annotations

import numpy as np

from src.errors import EmptyDataset, ShapeError


def _pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float).ravel()
    target = np.asarray(target, dtype=float).ravel()
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction and target sizes differ: {pred.size} vs {target.size}")
    if pred.size == 0:
        raise EmptyDataset("Metrics need at least one value")
    return pred, target


def mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def r2_score(pred, target) -> float:
    """Coefficient of determination; 1.0 for a perfect fit of a constant target, else -inf."""
    pred, target = _pair(pred, target)
    ss_res = float(np.sum((pred - target) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot


def relative_l2(pred, target) -> float:
    pred, target = _pair(pred, target)
    norm = float(np.linalg.norm(target))
    diff = float(np.linalg.norm(pred - target))
    if norm == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return diff / norm


def regression_summary(pred, target, digits: int = 6) -> dict:
    pred, target = _pair(pred, target)
    return {
        "mse": round(mse(pred, target), digits + 6),
        "r2": round(r2_score(pred, target), digits),
        "relative_l2": round(relative_l2(pred, target), digits),
        "max_abs_error": round(float(np.max(np.abs(pred - target))), digits + 6),
        "n": int(pred.size),
    }
