"""Binary classification metrics and a paired two-sided t-test.

The t-test p-value comes from the regularized incomplete beta function
evaluated by a modified Lentz continued fraction, accurate to well below
1e-8 for the degrees of freedom used here.
"""

from __future__ import annotations

import math

import numpy as np

from .data import LABELS, label_index
from .errors import DataError

METRIC_NAMES = ("accuracy", "f1_fake", "f1_real", "macro_f1", "weighted_f1")


def confusion(predictions, labels) -> np.ndarray:
    """2x2 counts indexed (true class, predicted class) over (fake, real)."""
    preds = list(predictions)
    truth = list(labels)
    if len(preds) != len(truth):
        raise DataError(f"prediction/label length mismatch: {len(preds)} vs {len(truth)}")
    if not preds:
        raise DataError("cannot build a confusion matrix from zero samples")
    cm = np.zeros((2, 2), dtype=np.int64)
    for p, t in zip(preds, truth):
        cm[label_index(t) if isinstance(t, str) else int(t),
           label_index(p) if isinstance(p, str) else int(p)] += 1
    return cm


def classification_metrics(cm: np.ndarray) -> dict[str, float]:
    """Accuracy, per-class F1, macro-F1, and support-weighted F1.

    A class with zero precision+recall mass gets F1 = 0 rather than an
    error, so degenerate all-one-class predictions score poorly.
    """
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total <= 0:
        raise DataError("confusion matrix is empty")
    accuracy = float(np.trace(cm)) / total
    f1 = {}
    for c, name in enumerate(LABELS):
        tp = float(cm[c, c])
        pred_pos = float(cm[:, c].sum())
        actual_pos = float(cm[c, :].sum())
        precision = tp / pred_pos if pred_pos > 0 else 0.0
        recall = tp / actual_pos if actual_pos > 0 else 0.0
        f1[name] = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    supports = cm.sum(axis=1).astype(np.float64)
    weighted = float(sum((supports[c] / total) * f1[name] for c, name in enumerate(LABELS)))
    return {
        "accuracy": accuracy,
        "f1_fake": f1["fake"],
        "f1_real": f1["real"],
        "macro_f1": (f1["fake"] + f1["real"]) / 2.0,
        "weighted_f1": weighted,
    }


# ---------------------------------------------------------------------------
# paired t-test


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Modified Lentz evaluation of the incomplete beta continued fraction."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            break
    return h


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return float(x)
    front = math.exp(a * math.log(x) + b * math.log(1.0 - x) - _log_beta(a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def paired_t_test(metric_a, metric_b) -> float:
    """Two-sided p-value for paired per-seed metrics.

    All-zero differences are a degenerate input and report p = 1; zero
    variance with a nonzero mean is the t -> infinity limit and reports 0.
    """
    a = np.asarray(metric_a, dtype=np.float64)
    b = np.asarray(metric_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DataError(f"paired series must be equal-length vectors: {a.shape} vs {b.shape}")
    n = a.size
    if n < 2:
        raise DataError(f"paired t-test needs at least 2 pairs, got {n}")
    diff = a - b
    if np.all(diff == 0.0):
        return 1.0
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if sd == 0.0:
        return 0.0
    t = mean / (sd / math.sqrt(n))
    dof = n - 1
    x = dof / (dof + t * t)
    return float(regularized_incomplete_beta(dof / 2.0, 0.5, x))


def seed_summary(per_seed: dict[int, dict[str, float]]) -> dict[str, dict[str, float]]:
    """Mean and standard deviation per metric across seeds."""
    if not per_seed:
        return {"mean": {}, "std": {}}
    names = list(next(iter(per_seed.values())).keys())
    mean = {}
    std = {}
    for name in names:
        vals = np.array([m[name] for m in per_seed.values()], dtype=np.float64)
        mean[name] = float(vals.mean())
        std[name] = float(vals.std(ddof=0))
    return {"mean": mean, "std": std}
