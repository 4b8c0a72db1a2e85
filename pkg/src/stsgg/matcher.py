"""Optimal one-to-one matching between ground-truth relations and query slots."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.records import FrameAnnotation
from .geometry import (
    FOCAL_EPS,
    LossWeights,
    cross_entropy_rows,
    focal_rows,
    giou_matrix,
    giou_rows,
    l1_rows,
)
from .model import PredictionArrays, TripletPredictionSet
from .numeric import tensor as T
from .numeric.tensor import Tensor

_TIE_TOL = 1e-12


class CapacityError(ValueError):
    pass


# ---------------------------------------------------------------- assignment

def _solve(cost: np.ndarray) -> np.ndarray:
    """Shortest augmenting path assignment for ``n <= m``; returns row -> column."""
    n, m = cost.shape
    INF = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)      # column -> row (1-based, 0 = free)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, INF)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            used_idx = np.nonzero(used)[0]
            u[p[used_idx]] += delta
            v[used_idx] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    assign = np.full(n, -1, dtype=np.int64)
    for j in range(1, m + 1):
        if p[j]:
            assign[p[j] - 1] = j - 1
    return assign


def _optimum(cost: np.ndarray) -> float:
    if cost.shape[0] == 0:
        return 0.0
    a = _solve(cost)
    return float(cost[np.arange(cost.shape[0]), a].sum())


def hungarian(cost) -> tuple[list[int], float]:
    """Minimum-total injective row -> column assignment (``rows <= cols``).

    Among optimal assignments the lexicographically smallest column sequence
    is returned, so ties resolve deterministically.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n, m = cost.shape
    if n > m:
        raise CapacityError(f"{n} rows cannot be assigned injectively to {m} columns")
    if not np.isfinite(cost).all():
        raise ValueError("cost matrix must be finite")
    if n == 0:
        return [], 0.0
    best = _optimum(cost)
    tol = _TIE_TOL * max(1.0, abs(best), float(np.abs(cost).max()))
    rows = list(range(n))
    cols = list(range(m))
    chosen: list[int] = []
    fixed = 0.0
    for r in range(n):
        rest_rows = rows[r + 1:]
        for c in cols:
            remaining = [k for k in cols if k != c]
            sub = cost[np.ix_(rest_rows, remaining)] if rest_rows else np.zeros((0, len(remaining)))
            total = fixed + cost[r, c] + _optimum(sub)
            if total <= best + tol:
                chosen.append(c)
                fixed += cost[r, c]
                cols = remaining
                break
        else:  # pragma: no cover - an optimal completion always exists
            raise RuntimeError("assignment search failed")
    total = float(sum(cost[i, chosen[i]] for i in range(n)))
    return chosen, total


# ---------------------------------------------------------------- costs

@dataclass
class GroundTruth:
    """Per-relation targets of one frame in array form."""

    sub_cls: np.ndarray
    obj_cls: np.ndarray
    sub_boxes: np.ndarray
    obj_boxes: np.ndarray
    pred_targets: np.ndarray     # relations x predicates multi-hot

    @property
    def count(self) -> int:
        return len(self.sub_cls)

    @classmethod
    def from_annotation(cls, ann: FrameAnnotation, num_predicates: int) -> GroundTruth:
        n = len(ann.relations)
        targets = np.zeros((n, num_predicates))
        for i, r in enumerate(ann.relations):
            targets[i, r.all_predicates()] = 1.0
        ents = ann.entities
        return cls(
            np.array([ents[r.subject].cls for r in ann.relations], dtype=np.int64),
            np.array([ents[r.object].cls for r in ann.relations], dtype=np.int64),
            np.array([ents[r.subject].box.as_tuple() for r in ann.relations]).reshape(n, 4),
            np.array([ents[r.object].box.as_tuple() for r in ann.relations]).reshape(n, 4),
            targets,
        )

    def permuted(self, order) -> GroundTruth:
        order = list(order)
        return GroundTruth(self.sub_cls[order], self.obj_cls[order], self.sub_boxes[order],
                           self.obj_boxes[order], self.pred_targets[order])


def _focal_matrix(targets: np.ndarray, probs: np.ndarray, gamma: float, alpha: float) -> np.ndarray:
    t = targets[:, None, :]
    p = probs[None, :, :]
    pt = np.clip(np.where(t > 0.5, p, 1.0 - p), FOCAL_EPS, 1.0 - FOCAL_EPS)
    return np.sum(-alpha * (1.0 - pt) ** gamma * np.log(pt), axis=2)


def _l1_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.abs(a[:, None, :] - b[None, :, :]).mean(axis=2)


def cost_components(gt: GroundTruth, pred: PredictionArrays, w: LossWeights) -> dict[str, np.ndarray]:
    """Unweighted per-(gt, query) loss terms, each ``G x N``."""
    return {
        "sub_cls": -pred.sub_logp[:, gt.sub_cls].T,
        "obj_cls": -pred.obj_logp[:, gt.obj_cls].T,
        "pred_cls": _focal_matrix(gt.pred_targets, pred.pred_probs, w.focal_gamma, w.focal_alpha),
        "sub_l1": _l1_matrix(gt.sub_boxes, pred.sub_boxes),
        "obj_l1": _l1_matrix(gt.obj_boxes, pred.obj_boxes),
        "sub_giou": 1.0 - giou_matrix(gt.sub_boxes, pred.sub_boxes),
        "obj_giou": 1.0 - giou_matrix(gt.obj_boxes, pred.obj_boxes),
    }


def cost_matrix(gt: GroundTruth, pred: PredictionArrays, w: LossWeights, include_predicate: bool = True) -> np.ndarray:
    c = cost_components(gt, pred, w)
    total = w.alpha_sub * c["sub_cls"] + w.alpha_obj * c["obj_cls"]
    if include_predicate:
        total = total + w.alpha_pred * c["pred_cls"]
    box = w.lambda_l1 * (c["sub_l1"] + c["obj_l1"]) + w.lambda_giou * (c["sub_giou"] + c["obj_giou"])
    return total + w.beta * box


def matching_cost(gt: GroundTruth, index: int, pred: PredictionArrays, query: int, w: LossWeights) -> float:
    """Composite cost between one ground-truth relation and one query slot."""
    one_gt = gt.permuted([index])
    one_pred = PredictionArrays(pred.sub_boxes[[query]], pred.obj_boxes[[query]], pred.sub_logp[[query]],
                                pred.obj_logp[[query]], pred.pred_probs[[query]])
    return float(cost_matrix(one_gt, one_pred, w)[0, 0])


@dataclass
class MatchResult:
    assignment: list[int]        # gt relation index -> query index
    costs: list[float]
    total: float


def match(gt: GroundTruth, pred: PredictionArrays, w: LossWeights, include_predicate: bool = True) -> MatchResult:
    if gt.count > pred.num_queries:
        raise CapacityError(f"{gt.count} ground-truth relations exceed {pred.num_queries} queries")
    cost = cost_matrix(gt, pred, w, include_predicate)
    assign, total = hungarian(cost)
    return MatchResult(assign, [float(cost[i, j]) for i, j in enumerate(assign)], total)


# ---------------------------------------------------------------- training loss

def total_loss(preds: TripletPredictionSet, ann: FrameAnnotation, w: LossWeights,
               num_predicates: int | None = None) -> tuple[Tensor, dict[str, float], MatchResult]:
    """Matched slots take the full composite loss; the rest learn no-object.

    Returns the scalar graph loss, a per-component breakdown of its value, and
    the matching used.
    """
    num_predicates = num_predicates or preds.pred_probs.cols
    gt = GroundTruth.from_annotation(ann, num_predicates)
    arrays = preds.arrays()
    m = match(gt, arrays, w)
    n = arrays.num_queries
    no_obj = preds.sub_logits.cols - 1
    q = np.asarray(m.assignment, dtype=np.int64)
    unmatched = np.setdiff1d(np.arange(n), q)

    sub_t = np.full(n, no_obj)
    obj_t = np.full(n, no_obj)
    sub_t[q] = gt.sub_cls
    obj_t[q] = gt.obj_cls
    cls_w_sub = np.full(n, w.no_object_weight)
    cls_w_obj = np.full(n, w.no_object_weight)
    cls_w_sub[q] = w.alpha_sub
    cls_w_obj[q] = w.alpha_obj
    sub_ce = T.sum_all(cross_entropy_rows(preds.sub_logits, sub_t, cls_w_sub))
    obj_ce = T.sum_all(cross_entropy_rows(preds.obj_logits, obj_t, cls_w_obj))

    parts: dict[str, Tensor] = {"sub_cls": sub_ce, "obj_cls": obj_ce}
    if len(q):
        pred_rows = T.take_rows(preds.pred_probs, q)
        parts["pred_cls"] = T.sum_all(focal_rows(pred_rows, gt.pred_targets, w.focal_gamma, w.focal_alpha)) * w.alpha_pred
        for side, boxes, target in (("sub", preds.sub_boxes, gt.sub_boxes), ("obj", preds.obj_boxes, gt.obj_boxes)):
            rows = T.take_rows(boxes, q)
            parts[f"{side}_l1"] = T.sum_all(l1_rows(rows, target)) * (w.beta * w.lambda_l1)
            parts[f"{side}_giou"] = T.sum_all(1.0 - giou_rows(rows, target)) * (w.beta * w.lambda_giou)
    loss = parts["sub_cls"]
    for k, v in parts.items():
        if k != "sub_cls":
            loss = loss + v
    breakdown = {k: v.item() for k, v in parts.items()}
    breakdown["no_object"] = float(
        -w.no_object_weight * (arrays.sub_logp[unmatched, no_obj].sum() + arrays.obj_logp[unmatched, no_obj].sum())
    )
    breakdown["total"] = loss.item()
    return loss, breakdown, m
