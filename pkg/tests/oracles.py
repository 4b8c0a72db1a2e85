"""Slow, loop-based reference implementations used as test oracles."""
import itertools
import math

import numpy as np

from stsgg.geometry import giou, iou
from stsgg.metrics import GtTriplet, ScoredTriplet


def score(c):
    return c.sub_conf * c.obj_conf * c.pred_conf


def constrain(cands, constraint, scope="pair"):
    if constraint == "no":
        return list(cands)
    keep = []
    for c in cands:
        same = [o for o in cands if o.pair == c.pair and (scope == "pair" or o.group == c.group)]
        if not any(score(o) > score(c) or (score(o) == score(c) and o.predicate < c.predicate) for o in same):
            keep.append(c)
    return keep


def ranked(cands):
    out = []
    for c in cands:
        pos = 0
        while pos < len(out):
            o = out[pos]
            if score(o) > score(c) or (score(o) == score(c) and (o.pair, o.predicate) <= (c.pair, c.predicate)):
                pos += 1
            else:
                break
        out.insert(pos, c)
    return out


def hits(cands, gts, k, mode, thr=0.5):
    used = [False] * len(gts)
    for c in ranked(cands)[:k]:
        for gi, g in enumerate(gts):
            if used[gi]:
                continue
            if c.sub_cls != g.sub_cls or c.obj_cls != g.obj_cls or c.predicate != g.predicate:
                continue
            if mode == "sgdet" and not (iou(c.sub_box, g.sub_box) >= thr and iou(c.obj_box, g.obj_box) >= thr):
                continue
            used[gi] = True
            break
    return used


def recall(cands, gts, k, mode, thr=0.5):
    if not gts:
        return 1.0
    return sum(hits(cands, gts, k, mode, thr)) / len(gts)


def mean_recall(frames, k, mode, thr=0.5):
    found, total = {}, {}
    for cands, gts in frames:
        for g, h in zip(gts, hits(cands, gts, k, mode, thr)):
            total[g.predicate] = total.get(g.predicate, 0) + 1
            found[g.predicate] = found.get(g.predicate, 0) + h
    per = {p: found[p] / total[p] for p in sorted(total)}
    return per, (sum(per.values()) / len(per) if per else 0.0)


def frame_recall(frames, k, mode, thr=0.5):
    vals = [recall(c, g, k, mode, thr) for c, g in frames if g]
    return sum(vals) / len(vals) if vals else 1.0


def slot_assignment(pred, ann, w):
    """Brute-force slot choice on class + box cost (no predicate term)."""
    rels = ann.relations
    n = pred.num_queries

    def cost(i, q):
        r = rels[i]
        s, o = ann.entities[r.subject], ann.entities[r.object]
        c = -w.alpha_sub * pred.sub_logp[q, s.cls] - w.alpha_obj * pred.obj_logp[q, o.cls]
        box = 0.0
        for gt_box, pb in ((s.box.as_tuple(), pred.sub_boxes[q]), (o.box.as_tuple(), pred.obj_boxes[q])):
            box += w.lambda_l1 * sum(abs(a - b) for a, b in zip(gt_box, pb)) / 4
            box += w.lambda_giou * (1 - giou(gt_box, tuple(pb)))
        return c + w.beta * box

    table = [[cost(i, q) for q in range(n)] for i in range(len(rels))]
    best, best_cols = math.inf, None
    for cols in itertools.permutations(range(n), len(rels)):
        total = sum(table[i][cols[i]] for i in range(len(rels)))
        if total < best - 1e-12:
            best, best_cols = total, cols
    return list(best_cols)


BOX_POOL = [(0.1, 0.1, 0.4, 0.4), (0.12, 0.1, 0.42, 0.4), (0.5, 0.5, 0.9, 0.9), (0.3, 0.2, 0.8, 0.6),
            (0.0, 0.0, 1.0, 1.0)]
CONF_POOL = [0.25, 0.5, 0.75, 1.0]


def random_fixture(rng, max_gts=5, max_cands=30, num_cls=3, num_pred=4):
    """Small candidate/gt lists with deliberate score ties and shared boxes."""
    pairs = []
    for p in range(int(rng.integers(1, 8))):
        pairs.append((int(rng.integers(num_cls)), BOX_POOL[rng.integers(len(BOX_POOL))],
                      float(rng.choice(CONF_POOL)), int(rng.integers(num_cls)),
                      BOX_POOL[rng.integers(len(BOX_POOL))], float(rng.choice(CONF_POOL))))
    slots = [(p, q) for p in range(len(pairs)) for q in range(num_pred)]
    rng.shuffle(slots)
    cands = []
    for p, q in slots[:int(rng.integers(0, max_cands + 1))]:
        sc, sb, sconf, oc, ob, oconf = pairs[p]
        cands.append(ScoredTriplet(p, sc, sb, sconf, oc, ob, oconf, q, float(rng.choice(CONF_POOL)), q % 2))
    gts = [GtTriplet(int(rng.integers(num_cls)), BOX_POOL[rng.integers(len(BOX_POOL))], int(rng.integers(num_cls)),
                     BOX_POOL[rng.integers(len(BOX_POOL))], int(rng.integers(num_pred)))
           for _ in range(int(rng.integers(0, max_gts + 1)))]
    return cands, gts


def check_metric_fixtures(count, seed=0):
    """Compare the evaluator with the oracle; returns the number of comparisons made."""
    from stsgg.metrics import filter_with_constraint, mean_recall_at_k, recall_at_k
    rng = np.random.default_rng(seed)
    n = 0
    for _ in range(count):
        frames = [random_fixture(rng) for _ in range(int(rng.integers(1, 4)))]
        for mode in ("predcls", "sgcls", "sgdet"):
            for con in ("with", "no"):
                kept = [(filter_with_constraint(c, con), g) for c, g in frames]
                ref_kept = [(constrain(c, con), g) for c, g in frames]
                for k in (1, 5, 10):
                    for (c, g), (rc, _) in zip(kept, ref_kept):
                        assert recall_at_k(c, g, k, mode) == recall(rc, g, k, mode)
                    per, mean = mean_recall(ref_kept, k, mode)
                    got = mean_recall_at_k(kept, k, mode)
                    assert got.per_class == per and got.mean == mean
                    n += 1
    return n


def golden_fixture():
    """Synthetic frames plus seeded pseudo-predictions, some slots close to the truth."""
    from stsgg.data.synthetic import SyntheticConfig, generate_synthetic
    from stsgg.model import PredictionArrays
    ds = generate_synthetic(SyntheticConfig(seed=11, frames=6, frames_per_video=3, grid_size=3))
    rng = np.random.default_rng(11)
    n, c, p = 6, ds.vocab.num_objects + 1, ds.vocab.num_predicates
    preds = []
    for ann in ds.annotations:
        sub_logits, obj_logits = rng.normal(size=(n, c)), rng.normal(size=(n, c))
        lo = rng.uniform(0, 0.5, size=(n, 2))
        boxes = [np.hstack([lo, lo + rng.uniform(0.1, 0.5, size=(n, 2))]) for _ in range(2)]
        probs = rng.uniform(size=(n, p))
        for i, r in enumerate(ann.relations[:n]):
            if rng.uniform() < 0.3:
                continue
            s, o = ann.entities[r.subject], ann.entities[r.object]
            boxes[0][i] = np.array(s.box.as_tuple()) + rng.normal(0, 0.01, 4)
            boxes[1][i] = np.array(o.box.as_tuple()) + rng.normal(0, 0.01, 4)
            sub_logits[i, s.cls] += 3.0
            obj_logits[i, o.cls] += 3.0
            probs[i, r.all_predicates()] += 0.5
        logp = lambda z: z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        preds.append(PredictionArrays(boxes[0], boxes[1], logp(sub_logits), logp(obj_logits), probs / 1.5))
    return preds, ds.annotations, ds.vocab


def _candidates(pred, ann, mode, vocab, w):
    groups = [g for g, size in enumerate(vocab.group_sizes) for _ in range(size)]
    real = pred.sub_logp.shape[1] - 1
    num_pred = pred.pred_probs.shape[1]

    def top(row):
        best = 0
        for j in range(real):
            if row[j] > row[best]:
                best = j
        return best, float(math.exp(row[best]))

    out = []
    if mode == "sgdet":
        for q in range(pred.num_queries):
            (sc, sconf), (oc, oconf) = top(pred.sub_logp[q]), top(pred.obj_logp[q])
            for p in range(num_pred):
                out.append(ScoredTriplet(q, sc, tuple(pred.sub_boxes[q]), sconf, oc, tuple(pred.obj_boxes[q]), oconf,
                                         p, float(pred.pred_probs[q, p]), groups[p]))
        return out
    slots = slot_assignment(pred, ann, w)
    for i, r in enumerate(ann.relations):
        q = slots[i]
        s, o = ann.entities[r.subject], ann.entities[r.object]
        if mode == "predcls":
            (sc, sconf), (oc, oconf) = (s.cls, 1.0), (o.cls, 1.0)
        else:
            (sc, sconf), (oc, oconf) = top(pred.sub_logp[q]), top(pred.obj_logp[q])
        for p in range(num_pred):
            out.append(ScoredTriplet(i, sc, s.box.as_tuple(), sconf, oc, o.box.as_tuple(), oconf,
                                     p, float(pred.pred_probs[q, p]), groups[p]))
    return out


def golden_report_text(preds, anns, vocab, ks=(10, 20, 50)):
    """The structured report, computed entirely by the loop-based oracles."""
    import json
    from stsgg.geometry import LossWeights
    w = LossWeights()
    names = vocab.predicate_names
    gts = []
    for ann in anns:
        gts.append([GtTriplet(ann.entities[r.subject].cls, ann.entities[r.subject].box.as_tuple(),
                              ann.entities[r.object].cls, ann.entities[r.object].box.as_tuple(), pid)
                    for r in ann.relations for pid in r.all_predicates()])
    support = {}
    for g in gts:
        for t in g:
            support[names[t.predicate]] = support.get(names[t.predicate], 0) + 1
    entries = []
    for mode in ("predcls", "sgcls", "sgdet"):
        cands = [_candidates(p, a, mode, vocab, w) for p, a in zip(preds, anns)]
        for con in ("with", "no"):
            frames = [(constrain(c, con), g) for c, g in zip(cands, gts)]
            for k in ks:
                per, mean = mean_recall(frames, k, mode)
                entries.append({"mode": mode, "constraint": con, "k": k, "recall": frame_recall(frames, k, mode),
                                "mean_recall": mean, "per_predicate": {names[p]: r for p, r in per.items()}})
    doc = {"entries": entries, "support": support, "meta": {"frames": len(anns), "oracle": False}}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
