"""Classification and rank-correlation metrics."""

from __future__ import annotations

import math

import numpy as np
from scipy.stats import rankdata

from ..errors import DegenerateConstantInput, LengthMismatch


def confusion(y_true, y_pred) -> tuple[int, int, int, int]:
    """``(tp, fp, tn, fn)`` for binary labels in {0, 1}."""
    t = np.asarray(y_true).astype(bool)
    p = np.asarray(y_pred).astype(bool)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.shape} vs {p.shape}")
    return (int((t & p).sum()), int((~t & p).sum()), int((~t & ~p).sum()), int((t & ~p).sum()))


def mcc(tp: int, fp: int, tn: int, fn: int) -> float:
    """Matthews correlation; 0 when any marginal is empty."""
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def mcc_from_labels(y_true, y_pred) -> float:
    return mcc(*confusion(y_true, y_pred))


def accuracy(y_true, y_pred) -> float:
    t, p = np.asarray(y_true), np.asarray(y_pred)
    if t.shape != p.shape:
        raise LengthMismatch(f"{t.shape} vs {p.shape}")
    return float((t == p).mean())


def srcc(xs, ys) -> float:
    """Spearman correlation: Pearson correlation of average ranks."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"srcc needs two equal-length vectors, got {x.shape} and {y.shape}")
    if len(x) < 2:
        raise LengthMismatch("srcc needs at least two points")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sx, sy = math.sqrt(float(rx @ rx)), math.sqrt(float(ry @ ry))
    if sx == 0 or sy == 0:
        raise DegenerateConstantInput("srcc is undefined for a constant input")
    return float(rx @ ry) / (sx * sy)
