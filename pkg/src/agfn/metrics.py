"""Sentiment metrics (Acc-2, F1, Acc-7, MAE), PSC and high-error flagging."""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import DomainError, ShapeError
from .numerics import pearson


def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    target = np.asarray(target, dtype=np.float64).ravel()
    if pred.shape != target.shape:
        raise ShapeError(f"length mismatch: {pred.size} vs {target.size}")
    if pred.size == 0:
        raise ShapeError("metrics need at least one sample")
    return pred, target


def binarize(x):
    """True for non-negative scores; negative means score < 0."""
    return np.asarray(x) >= 0.0


def acc2(pred, target):
    pred, target = _pair(pred, target)
    return float(np.mean(binarize(pred) == binarize(target)))


def confusion(pred, target):
    """(tp, fp, fn, tn) with non-negative as the positive class."""
    pred, target = _pair(pred, target)
    p, t = binarize(pred), binarize(target)
    return (int(np.sum(p & t)), int(np.sum(p & ~t)), int(np.sum(~p & t)), int(np.sum(~p & ~t)))


def f1_from_counts(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def f1_binary(pred, target):
    tp, fp, fn, _ = confusion(pred, target)
    return f1_from_counts(tp, fp, fn)


def to_seven_class(x):
    """Clamp to [-3, 3] and round half away from zero."""
    x = np.clip(np.asarray(x, dtype=np.float64), -3.0, 3.0)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def acc7(pred, target):
    pred, target = _pair(pred, target)
    return float(np.mean(to_seven_class(pred) == to_seven_class(target)))


def mae(pred, target):
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def psc(coords, errors):
    """Mean absolute Pearson correlation between each 2-D axis and the errors."""
    coords = np.asarray(coords, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64).ravel()
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ShapeError(f"coords must be n x 2, got {coords.shape}")
    if coords.shape[0] < 2:
        raise DomainError("psc needs at least two points")
    return 0.5 * (abs(pearson(coords[:, 0], errors)) + abs(pearson(coords[:, 1], errors)))


def high_error_mask(errors, fraction=0.10):
    """Flag the ceil(fraction * n) largest |errors|; ties go to the lower index."""
    errors = np.abs(np.asarray(errors, dtype=np.float64).ravel())
    n = errors.size
    if n < 1:
        raise DomainError("high_error_mask needs at least one error")
    k = math.ceil(Fraction(repr(float(fraction))) * n)
    order = np.argsort(-errors, kind="stable")
    mask = np.zeros(n, dtype=bool)
    mask[order[:k]] = True
    return mask


@dataclass
class MetricsReport:
    acc2: float
    f1: float
    acc7: float
    mae: float
    seed: int
    config_hash: str
    psc: Optional[float] = None

    @classmethod
    def compute(cls, pred, target, seed, config_hash, psc_value=None):
        return cls(acc2=acc2(pred, target), f1=f1_binary(pred, target), acc7=acc7(pred, target),
                   mae=mae(pred, target), seed=int(seed), config_hash=config_hash, psc=psc_value)

    @property
    def mae_x100(self):
        return 100.0 * self.mae

    def to_text(self):
        lines = [f"acc2={self.acc2:.6f}", f"f1={self.f1:.6f}", f"acc7={self.acc7:.6f}",
                 f"mae={self.mae:.6f}", f"mae_x100={self.mae_x100:.6f}"]
        if self.psc is not None:
            lines.append(f"psc={self.psc:.6f}")
        lines += [f"seed={self.seed}", f"config_hash={self.config_hash}"]
        return "\n".join(lines) + "\n"

    @staticmethod
    def parse(text):
        out = {}
        for line in text.splitlines():
            if line.strip():
                key, _, value = line.partition("=")
                out[key] = value
        return out
