"""Boxes, IoU/GIoU and the loss family used for set-prediction training.

Each loss has a plain-float version (used for matching costs and tests) and a
graph version operating on :class:`~stsgg.numeric.Tensor` rows for training.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .numeric import tensor as T
from .numeric.tensor import Tensor

FOCAL_EPS = 1e-12


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x1 <= self.x2 and self.y1 <= self.y2):
            raise ValueError(f"box corners out of order: {self.as_tuple()}")
        if min(self.as_tuple()) < 0.0 or max(self.as_tuple()) > 1.0:
            raise ValueError(f"box not normalized to [0, 1]: {self.as_tuple()}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def __iter__(self):
        return iter(self.as_tuple())

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x1 + self.x2) / 2, (self.y1 + self.y2) / 2)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> BoundingBox:
        return cls(*np.clip([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2], 0.0, 1.0))


def union_box(a: BoundingBox, b: BoundingBox) -> BoundingBox:
    return BoundingBox(min(a.x1, b.x1), min(a.y1, b.y1), max(a.x2, b.x2), max(a.y2, b.y2))


def _corners(b) -> tuple[float, float, float, float]:
    x1, y1, x2, y2 = (float(v) for v in b)
    if x1 > x2 or y1 > y2:
        raise ValueError(f"box corners out of order: {(x1, y1, x2, y2)}")
    return x1, y1, x2, y2


def iou(a, b) -> float:
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    inter = max(0.0, min(ax2, bx2) - max(ax1, bx1)) * max(0.0, min(ay2, by2) - max(ay1, by1))
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    if union <= 0.0:
        return 1.0 if (ax1, ay1, ax2, ay2) == (bx1, by1, bx2, by2) else 0.0
    return inter / union


def giou(a, b) -> float:
    ax1, ay1, ax2, ay2 = _corners(a)
    bx1, by1, bx2, by2 = _corners(b)
    hull = (max(ax2, bx2) - min(ax1, bx1)) * (max(ay2, by2) - min(ay1, by1))
    value = iou(a, b)
    if hull <= 0.0:
        # both boxes collapse onto the same point
        return value
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) \
        - max(0.0, min(ax2, bx2) - max(ax1, bx1)) * max(0.0, min(ay2, by2) - max(ay1, by1))
    return value - (hull - union) / hull


def giou_loss(a, b) -> float:
    return 1.0 - giou(a, b)


def l1_box(a, b) -> float:
    return float(np.mean(np.abs(np.asarray(tuple(a), float) - np.asarray(tuple(b), float))))


def cross_entropy(logits: Sequence[float], target: int, class_weights: Sequence[float] | None = None) -> float:
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("cross_entropy needs a logit vector with at least 2 classes")
    if not 0 <= target < z.size:
        raise IndexError(f"target {target} out of range for {z.size} classes")
    z = z - z.max()
    logp = z[target] - np.log(np.exp(z).sum())
    w = 1.0 if class_weights is None else float(class_weights[target])
    return float(-w * logp)


def focal_loss(probs: Sequence[float], targets: Sequence[float], gamma: float = 2.0, alpha: float = 0.25) -> float:
    p = np.asarray(probs, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"probs {p.shape} vs targets {t.shape}")
    if ((p < 0) | (p > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    pt = np.clip(np.where(t > 0.5, p, 1.0 - p), FOCAL_EPS, 1.0 - FOCAL_EPS)
    return float(np.sum(-alpha * (1.0 - pt) ** gamma * np.log(pt)))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


@dataclass(frozen=True)
class LossWeights:
    alpha_sub: float = 1.0
    alpha_obj: float = 1.0
    alpha_pred: float = 1.0
    beta: float = 1.0
    lambda_l1: float = 5.0
    lambda_giou: float = 2.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    no_object_weight: float = 0.1

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"loss weight {f.name} must be nonnegative")


# ---------------------------------------------------------------- vectorized (numpy) batches

def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``a`` (n x 4) and ``b`` (m x 4) corner boxes."""
    a = np.asarray(a, float).reshape(-1, 4)
    b = np.asarray(b, float).reshape(-1, 4)
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    inter = iw * ih
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    same = (a[:, None, :] == b[None, :, :]).all(axis=2)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), same.astype(float))
    return out


def giou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, float).reshape(-1, 4)
    b = np.asarray(b, float).reshape(-1, 4)
    base = iou_matrix(a, b)
    iw = np.clip(np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0]), 0, None)
    ih = np.clip(np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1]), 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - iw * ih
    hull = (np.maximum(a[:, None, 2], b[None, :, 2]) - np.minimum(a[:, None, 0], b[None, :, 0])) * \
           (np.maximum(a[:, None, 3], b[None, :, 3]) - np.minimum(a[:, None, 1], b[None, :, 1]))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(hull > 0, base - (hull - union) / np.where(hull > 0, hull, 1.0), base)


# ---------------------------------------------------------------- graph versions

def cxcywh_to_corners(raw: Tensor) -> Tensor:
    """Logistic-squashed center form (``M x 4`` logits) to clipped corners."""
    s = T.sigmoid(raw)
    cx, cy = T.slice_cols(s, 0, 1), T.slice_cols(s, 1, 2)
    hw, hh = T.slice_cols(s, 2, 3) * 0.5, T.slice_cols(s, 3, 4) * 0.5
    corners = T.concat_cols([cx - hw, cy - hh, cx + hw, cy + hh])
    return T.clip(corners, 0.0, 1.0)


def giou_rows(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Row-wise GIoU between predicted corners (``M x 4``) and fixed targets."""
    gt = np.asarray(gt, float).reshape(-1, 4)
    px1, py1, px2, py2 = (T.slice_cols(pred, i, i + 1) for i in range(4))
    gx1, gy1, gx2, gy2 = (gt[:, i:i + 1] for i in range(4))
    iw = T.maximum(T.minimum(px2, gx2) - T.maximum(px1, gx1), 0.0)
    ih = T.maximum(T.minimum(py2, gy2) - T.maximum(py1, gy1), 0.0)
    inter = iw * ih
    area_p = (px2 - px1) * (py2 - py1)
    area_g = (gx2 - gx1) * (gy2 - gy1)
    union = T.maximum(area_p + area_g - inter, 1e-12)
    hull = T.maximum((T.maximum(px2, gx2) - T.minimum(px1, gx1)) * (T.maximum(py2, gy2) - T.minimum(py1, gy1)), 1e-12)
    return inter / union - (hull - union) / hull


def l1_rows(pred: Tensor, gt: np.ndarray) -> Tensor:
    """Row-wise mean absolute corner difference, ``M x 1``."""
    return T.sum_rows(T.absolute(pred - np.asarray(gt, float).reshape(-1, 4))) * 0.25


def cross_entropy_rows(logits: Tensor, targets, weights) -> Tensor:
    """Per-row ``-w_i * log softmax(logits_i)[target_i]`` as ``M x 1``."""
    w = np.asarray(weights, float).reshape(-1, 1)
    return T.pick(T.log_softmax_rows(logits), targets) * (-w)


def focal_rows(probs: Tensor, targets: np.ndarray, gamma: float, alpha: float) -> Tensor:
    """Per-row focal loss summed over classes, ``M x 1``."""
    t = np.asarray(targets, float)
    pt = T.clip(probs * (2 * t - 1) + (1 - t), FOCAL_EPS, 1.0 - FOCAL_EPS)
    logpt = T.log(pt)
    if gamma == 0:
        per = logpt * (-alpha)
    else:
        per = T.power(1.0 - pt, gamma) * logpt * (-alpha)
    return T.sum_rows(per)
