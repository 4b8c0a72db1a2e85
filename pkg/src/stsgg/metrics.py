"""Ranked-triplet recall (R@K, mR@K) in three evaluation modes."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data.records import FrameAnnotation
from .data.vocab import Vocabulary
from .geometry import LossWeights, iou_matrix
from .matcher import GroundTruth, cost_matrix, hungarian
from .model import PredictionArrays

MODES = ("predcls", "sgcls", "sgdet")
CONSTRAINTS = ("with", "no")
SCOPES = ("pair", "group")


class MetricsConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredTriplet:
    pair: int                    # gt relation index (predcls/sgcls) or query index (sgdet)
    sub_cls: int
    sub_box: tuple
    sub_conf: float
    obj_cls: int
    obj_box: tuple
    obj_conf: float
    predicate: int
    pred_conf: float
    group: int = 0

    @property
    def score(self) -> float:
        return self.sub_conf * self.obj_conf * self.pred_conf


@dataclass(frozen=True)
class GtTriplet:
    sub_cls: int
    sub_box: tuple
    obj_cls: int
    obj_box: tuple
    predicate: int


def gt_triplets(ann: FrameAnnotation) -> list[GtTriplet]:
    ents = ann.entities
    out = []
    for i, pid, _ in ann.triplets():
        r = ann.relations[i]
        s, o = ents[r.subject], ents[r.object]
        out.append(GtTriplet(s.cls, s.box.as_tuple(), o.cls, o.box.as_tuple(), pid))
    return out


def _check_mode(mode: str) -> None:
    if mode not in MODES:
        raise MetricsConfigError(f"unknown evaluation mode {mode!r}; expected one of {MODES}")


def _groups(num_predicates: int, group_sizes: Sequence[int] | None) -> np.ndarray:
    if group_sizes is None:
        return np.zeros(num_predicates, dtype=np.int64)
    return np.repeat(np.arange(len(group_sizes)), group_sizes)


def assign_queries(pred: PredictionArrays, ann: FrameAnnotation, weights: LossWeights | None = None) -> list[int]:
    """Query slot standing in for each gt relation when gt boxes are given.

    Slots are chosen by optimal matching on the class and box terms only, so the
    predicate scores being evaluated never influence which slot is read.
    """
    gt = GroundTruth.from_annotation(ann, pred.pred_probs.shape[1])
    assign, _ = hungarian(cost_matrix(gt, pred, weights or LossWeights(), include_predicate=False))
    return assign


def enumerate_candidates(pred: PredictionArrays, mode: str, ann: FrameAnnotation | None = None,
                         group_sizes: Sequence[int] | None = None,
                         weights: LossWeights | None = None) -> list[ScoredTriplet]:
    """Expand predictions into one scored triplet per (pair, predicate)."""
    _check_mode(mode)
    num_pred = pred.pred_probs.shape[1]
    groups = _groups(num_pred, group_sizes)
    real = pred.sub_logp.shape[1] - 1            # last column is no-object
    out: list[ScoredTriplet] = []
    if mode == "sgdet":
        sub_p, obj_p = pred.sub_dist[:, :real], pred.obj_dist[:, :real]
        for q in range(pred.num_queries):
            sc, oc = int(np.argmax(sub_p[q])), int(np.argmax(obj_p[q]))
            sb, ob = tuple(pred.sub_boxes[q]), tuple(pred.obj_boxes[q])
            for p in range(num_pred):
                out.append(ScoredTriplet(q, sc, sb, float(sub_p[q, sc]), oc, ob, float(obj_p[q, oc]),
                                         p, float(pred.pred_probs[q, p]), int(groups[p])))
        return out
    if ann is None:
        raise MetricsConfigError(f"{mode} needs the frame's ground truth")
    slots = assign_queries(pred, ann, weights)
    ents = ann.entities
    for i, r in enumerate(ann.relations):
        q = slots[i]
        s, o = ents[r.subject], ents[r.object]
        if mode == "predcls":
            sc, sconf, oc, oconf = s.cls, 1.0, o.cls, 1.0
        else:
            sp, op = pred.sub_dist[q, :real], pred.obj_dist[q, :real]
            sc, oc = int(np.argmax(sp)), int(np.argmax(op))
            sconf, oconf = float(sp[sc]), float(op[oc])
        for p in range(num_pred):
            out.append(ScoredTriplet(i, sc, s.box.as_tuple(), sconf, oc, o.box.as_tuple(), oconf,
                                     p, float(pred.pred_probs[q, p]), int(groups[p])))
    return out


def rank(candidates: Iterable[ScoredTriplet]) -> list[ScoredTriplet]:
    """Score descending; ties go to the lower pair index, then lower predicate id."""
    return sorted(candidates, key=lambda c: (-c.score, c.pair, c.predicate))


def filter_with_constraint(candidates: Sequence[ScoredTriplet], constraint: str = "with",
                           scope: str = "pair") -> list[ScoredTriplet]:
    """Keep the best predicate per pair (``scope="pair"``) or per pair and group."""
    if constraint == "no":
        return list(candidates)
    if constraint != "with":
        raise MetricsConfigError(f"constraint must be one of {CONSTRAINTS}")
    if scope not in SCOPES:
        raise MetricsConfigError(f"constraint scope must be one of {SCOPES}")
    best: dict[tuple, ScoredTriplet] = {}
    for c in candidates:
        key = (c.pair,) if scope == "pair" else (c.pair, c.group)
        cur = best.get(key)
        if cur is None or (-c.score, c.predicate) < (-cur.score, cur.predicate):
            best[key] = c
    return [c for c in candidates if best[(c.pair,) if scope == "pair" else (c.pair, c.group)] is c]


def match_ranked(ranked: Sequence[ScoredTriplet], gts: Sequence[GtTriplet], k: int, mode: str,
                 iou_threshold: float = 0.5) -> list[bool]:
    """Which gts are recovered by the first ``k`` ranked candidates (greedy by rank)."""
    if k <= 0:
        raise MetricsConfigError(f"K must be positive, got {k}")
    _check_mode(mode)
    top = list(ranked[:k])
    hit = [False] * len(gts)
    if not top or not gts:
        return hit
    if mode == "sgdet":
        s_ok = iou_matrix(np.array([c.sub_box for c in top]), np.array([g.sub_box for g in gts])) >= iou_threshold
        o_ok = iou_matrix(np.array([c.obj_box for c in top]), np.array([g.obj_box for g in gts])) >= iou_threshold
        box_ok = s_ok & o_ok
    else:
        box_ok = np.ones((len(top), len(gts)), dtype=bool)
    for ci, c in enumerate(top):
        for gi, g in enumerate(gts):
            if hit[gi] or not box_ok[ci, gi]:
                continue
            if (c.sub_cls, c.obj_cls, c.predicate) == (g.sub_cls, g.obj_cls, g.predicate):
                hit[gi] = True
                break
    return hit


def recall_at_k(candidates: Sequence[ScoredTriplet], gts: Sequence[GtTriplet], k: int, mode: str,
                iou_threshold: float = 0.5) -> float:
    """Fraction of gts recovered in the top ``k``; an empty gt set counts as 1.0."""
    hit = match_ranked(rank(candidates), gts, k, mode, iou_threshold)
    return 1.0 if not gts else sum(hit) / len(gts)


@dataclass
class MeanRecall:
    per_class: dict[int, float]
    support: dict[int, int]
    mean: float


def mean_recall_at_k(frames: Sequence[tuple[Sequence[ScoredTriplet], Sequence[GtTriplet]]], k: int, mode: str,
                     iou_threshold: float = 0.5) -> MeanRecall:
    """Per-predicate recall pooled over frames, averaged over classes that occur."""
    hits: dict[int, int] = {}
    support: dict[int, int] = {}
    for cands, gts in frames:
        hit = match_ranked(rank(cands), gts, k, mode, iou_threshold)
        for g, h in zip(gts, hit):
            support[g.predicate] = support.get(g.predicate, 0) + 1
            hits[g.predicate] = hits.get(g.predicate, 0) + int(h)
    per = {p: hits[p] / support[p] for p in sorted(support)}
    mean = float(np.mean(list(per.values()))) if per else 0.0
    return MeanRecall(per, dict(sorted(support.items())), mean)


def frame_average_recall(frames: Sequence[tuple[Sequence[ScoredTriplet], Sequence[GtTriplet]]], k: int,
                         mode: str, iou_threshold: float = 0.5) -> float:
    """Mean per-frame recall over frames with at least one gt triplet."""
    vals = [recall_at_k(c, g, k, mode, iou_threshold) for c, g in frames if g]
    return float(np.mean(vals)) if vals else 1.0


# ---------------------------------------------------------------- reports

@dataclass
class MetricsReport:
    predicate_names: list[str]
    recall: dict[tuple[str, str, int], float] = field(default_factory=dict)
    mean_recall: dict[tuple[str, str, int], float] = field(default_factory=dict)
    per_predicate: dict[tuple[str, str, int], dict[int, float]] = field(default_factory=dict)
    support: dict[int, int] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        entries = []
        for key in sorted(self.recall, key=_key_order):
            mode, con, k = key
            entries.append({
                "mode": mode, "constraint": con, "k": k,
                "recall": self.recall[key], "mean_recall": self.mean_recall[key],
                "per_predicate": {self.predicate_names[p]: r for p, r in self.per_predicate[key].items()},
            })
        return {
            "entries": entries,
            "support": {self.predicate_names[p]: n for p, n in self.support.items()},
            "meta": self.meta,
        }

    def text_table(self) -> str:
        keys = sorted(self.recall, key=_key_order)
        rows = sorted({(m, c) for m, c, _ in keys}, key=lambda mc: (MODES.index(mc[0]), CONSTRAINTS.index(mc[1])))
        ks = sorted({k for _, _, k in keys})
        head = ["mode", "constraint"] + [f"R@{k}" for k in ks] + [f"mR@{k}" for k in ks]
        body = []
        for m, c in rows:
            body.append([m, c] + [f"{100 * self.recall[(m, c, k)]:.2f}" for k in ks]
                        + [f"{100 * self.mean_recall[(m, c, k)]:.2f}" for k in ks])
        widths = [max(len(r[i]) for r in [head] + body) for i in range(len(head))]
        fmt = lambda r: "  ".join(v.ljust(w) if i < 2 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths)))
        return "\n".join([fmt(head), fmt(["-" * w for w in widths])] + [fmt(r) for r in body]) + "\n"

    def json_text(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def per_predicate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "constraint", "k", "predicate", "support", "recall"])
        for key in sorted(self.per_predicate, key=_key_order):
            for p, r in self.per_predicate[key].items():
                w.writerow([*key, self.predicate_names[p], self.support.get(p, 0), f"{r:.6f}"])
        return buf.getvalue()


def _key_order(key):
    m, c, k = key
    return (MODES.index(m), CONSTRAINTS.index(c), k)


def evaluate(predictions: Sequence[PredictionArrays], annotations: Sequence[FrameAnnotation], vocab: Vocabulary,
             modes: Sequence[str] = MODES, constraints: Sequence[str] = CONSTRAINTS,
             ks: Sequence[int] = (10, 20, 50), iou_threshold: float = 0.5, scope: str = "pair",
             weights: LossWeights | None = None) -> MetricsReport:
    if len(predictions) != len(annotations):
        raise MetricsConfigError("need one prediction set per annotated frame")
    for k in ks:
        if k <= 0:
            raise MetricsConfigError(f"K must be positive, got {k}")
    for c in constraints:
        if c not in CONSTRAINTS:
            raise MetricsConfigError(f"constraint must be one of {CONSTRAINTS}")
    report = MetricsReport(vocab.predicate_names)
    gts = [gt_triplets(a) for a in annotations]
    for g in gts:
        for t in g:
            report.support[t.predicate] = report.support.get(t.predicate, 0) + 1
    report.support = dict(sorted(report.support.items()))
    for mode in modes:
        _check_mode(mode)
        cands = [enumerate_candidates(p, mode, a, vocab.group_sizes, weights) for p, a in zip(predictions, annotations)]
        for con in constraints:
            frames = [(filter_with_constraint(c, con, scope), g) for c, g in zip(cands, gts)]
            for k in ks:
                report.recall[(mode, con, k)] = frame_average_recall(frames, k, mode, iou_threshold)
                mr = mean_recall_at_k(frames, k, mode, iou_threshold)
                report.mean_recall[(mode, con, k)] = mr.mean
                report.per_predicate[(mode, con, k)] = mr.per_class
    return report


def oracle_predictions(ann: FrameAnnotation, num_queries: int, num_objects: int, num_predicates: int,
                       eps: float = 1e-9) -> PredictionArrays:
    """Ground truth written into prediction form: slot ``i`` holds relation ``i``, the rest are no-object."""
    n = max(num_queries, len(ann.relations))
    sub_boxes = np.zeros((n, 4))
    obj_boxes = np.zeros((n, 4))
    sub_lab = np.full(n, num_objects)
    obj_lab = np.full(n, num_objects)
    probs = np.zeros((n, num_predicates))
    for i, r in enumerate(ann.relations):
        s, o = ann.entities[r.subject], ann.entities[r.object]
        sub_boxes[i], obj_boxes[i] = s.box.as_tuple(), o.box.as_tuple()
        sub_lab[i], obj_lab[i] = s.cls, o.cls
        probs[i, r.all_predicates()] = 1.0

    def logp(labels):
        p = np.full((n, num_objects + 1), eps)
        p[np.arange(n), labels] = 1.0
        return np.log(p / p.sum(axis=1, keepdims=True))

    return PredictionArrays(sub_boxes, obj_boxes, logp(sub_lab), logp(obj_lab), probs)
