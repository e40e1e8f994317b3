"""Segmentation metrics and loss functions.

Masks compare pixelwise; losses accept soft probability grids so the
same code scores binary masks and network-style outputs. Everything is
a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .raster import BinaryMask

BCE_EPS = 1e-7
DICE_SMOOTH = 1.0


@dataclass
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class LossWeights:
    w_bce: float = 0.45
    w_dice: float = 0.45
    w_matrix: float = 0.1

    def __post_init__(self):
        if min(self.w_bce, self.w_dice, self.w_matrix) < 0:
            raise ValueError("loss weights must be non-negative")


def _as_grid(m) -> np.ndarray:
    if isinstance(m, BinaryMask):
        return m.data.astype(np.float64)
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("expected a 2-D grid")
    return a


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def confusion(pred: BinaryMask, truth: BinaryMask) -> ConfusionCounts:
    """Exact pixel counts of the 2x2 agreement table."""
    _check_same_shape(pred.data, truth.data)
    p = pred.data.astype(bool)
    t = truth.data.astype(bool)
    return ConfusionCounts(
        tp=int((p & t).sum()),
        fp=int((p & ~t).sum()),
        fn=int((~p & t).sum()),
        tn=int((~p & ~t).sum()),
    )


def miou(pred: BinaryMask, truth: BinaryMask, classes: str = "fg_and_bg") -> float:
    """Mean IoU over the selected classes; an empty-union class counts 1."""
    if classes not in ("fg_only", "fg_and_bg"):
        raise ValueError(f"classes must be fg_only or fg_and_bg, got {classes!r}")
    _check_same_shape(pred.data, truth.data)
    p = pred.data.astype(bool)
    t = truth.data.astype(bool)
    ious = [_iou(p, t)]
    if classes == "fg_and_bg":
        ious.append(_iou(~p, ~t))
    return float(np.mean(ious))


def _iou(a: np.ndarray, b: np.ndarray) -> float:
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


def precision_recall_f1(c: ConfusionCounts) -> tuple:
    """Precision, recall, F1 with both-empty scoring perfect.

    A zero denominator means no predicted (precision) or no true (recall)
    positives; that is perfect agreement when the other side is empty too,
    and a total miss otherwise.
    """
    if min(c.tp, c.fp, c.fn, c.tn) < 0:
        raise ValueError("negative counts")
    if c.tp + c.fp == 0:
        precision = 1.0 if c.fn == 0 else 0.0
    else:
        precision = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        recall = 1.0 if c.fp == 0 else 0.0
    else:
        recall = c.tp / (c.tp + c.fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def bce_loss(pred, truth) -> float:
    """Mean binary cross-entropy; predictions clamp to [eps, 1-eps]."""
    p = _as_grid(pred)
    t = _as_grid(truth)
    _check_same_shape(p, t)
    if p.min() < 0 or p.max() > 1:
        raise ValueError("predictions must lie in [0, 1]")
    p = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return float(np.mean(-t * np.log(p) - (1.0 - t) * np.log(1.0 - p)))


def dice_loss(pred, truth) -> float:
    """Soft Dice loss with +1 smoothing on numerator and denominator."""
    p = _as_grid(pred)
    t = _as_grid(truth)
    _check_same_shape(p, t)
    inter = float((p * t).sum())
    sums = float(p.sum() + t.sum())
    return 1.0 - (2.0 * inter + DICE_SMOOTH) / (sums + DICE_SMOOTH)


def matrix_norm_loss(pred, truth, rel_tol: float = 1e-8, max_iters: int = 10_000) -> float:
    """Spectral norm of (pred - truth) via power iteration on D^T D."""
    p = _as_grid(pred)
    t = _as_grid(truth)
    _check_same_shape(p, t)
    d = p - t
    if not d.any():
        return 0.0
    a = d.T @ d
    rng = np.random.default_rng(0)  # fixed start: deterministic results
    v = rng.standard_normal(a.shape[0])
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    for i in range(1, max_iters + 1):
        w = a @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            v = rng.standard_normal(a.shape[0])  # restart out of the null space
            v /= np.linalg.norm(v)
            continue
        v = w / norm
        lam = float(v @ (a @ v))
        if abs(lam - lam_prev) <= rel_tol * max(abs(lam), 1e-300):
            return float(np.sqrt(lam))
        lam_prev = lam
    raise ConvergenceError(
        f"power iteration did not converge in {max_iters} iterations",
        iterations=max_iters,
    )


def combined_loss(pred, truth, w: LossWeights | None = None) -> float:
    """Weighted BCE + Dice + spectral-norm loss."""
    w = w or LossWeights()
    return (
        w.w_bce * bce_loss(pred, truth)
        + w.w_dice * dice_loss(pred, truth)
        + w.w_matrix * matrix_norm_loss(pred, truth)
    )
