import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tiny_inputs, tiny_model
from stsgg.data.records import Entity, FrameAnnotation, Relation
from stsgg.geometry import BoundingBox, LossWeights
from stsgg.matcher import CapacityError, GroundTruth, cost_matrix, hungarian, match, matching_cost, total_loss
from stsgg.model import PredictionArrays, TripletPredictionSet
from stsgg.numeric import tensor as T
from stsgg.numeric.tensor import Tensor


def brute_force(cost):
    n, m = cost.shape
    best = None
    for cols in itertools.permutations(range(m), n):
        total = float(sum(cost[i, cols[i]] for i in range(n)))
        if best is None or total < best[1]:
            best = (list(cols), total)
    return best


def test_hungarian_examples():
    assert hungarian(1 - np.eye(4)) == ([0, 1, 2, 3], 0.0)
    assert hungarian([[2, 1], [1, 2]]) == ([1, 0], 2.0)
    assert hungarian([[4, 1, 3], [2, 0, 5], [3, 2, 2]]) == ([1, 0, 2], 5.0)
    assert hungarian(np.zeros((0, 3))) == ([], 0.0)


def test_hungarian_capacity_and_finiteness():
    with pytest.raises(CapacityError):
        hungarian(np.ones((3, 2)))
    with pytest.raises(ValueError):
        hungarian([[np.inf, 1.0]])


def test_hungarian_ties_are_lexicographic():
    assert hungarian(np.ones((2, 3)))[0] == [0, 1]
    assert hungarian([[0, 0, 1], [1, 0, 0]])[0] == [0, 1]
    assert hungarian(np.zeros((3, 3)))[0] == [0, 1, 2]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 3), st.integers(0, 10 ** 6), st.booleans())
def test_hungarian_matches_brute_force(n, extra, seed, integer):
    rng = np.random.default_rng(seed)
    cost = rng.integers(0, 4, size=(n, n + extra)).astype(float) if integer else rng.uniform(size=(n, n + extra))
    cols, total = hungarian(cost)
    ref_cols, ref_total = brute_force(cost)
    assert total == ref_total
    assert len(set(cols)) == n
    if integer:
        # among all optimal assignments the smallest column sequence wins
        optimal = [list(p) for p in itertools.permutations(range(n + extra), n)
                   if sum(cost[i, p[i]] for i in range(n)) == ref_total]
        assert cols == min(optimal)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10 ** 6), st.floats(-5, 5))
def test_row_shift_keeps_assignment(n, seed, shift):
    cost = np.random.default_rng(seed).uniform(size=(n, n + 1))
    shifted = cost.copy()
    shifted[n // 2] += shift
    assert hungarian(cost)[0] == hungarian(shifted)[0]


def arrays(sub_logits, obj_logits, probs, sub_boxes, obj_boxes):
    ls = lambda z: z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return PredictionArrays(np.array(sub_boxes, float), np.array(obj_boxes, float), ls(np.array(sub_logits, float)),
                            ls(np.array(obj_logits, float)), np.array(probs, float))


def one_relation_gt(sub_cls=1, obj_cls=2, preds=(0,), num_pred=3):
    return GroundTruth(np.array([sub_cls]), np.array([obj_cls]), np.array([[0.1, 0.1, 0.4, 0.5]]),
                       np.array([[0.3, 0.2, 0.8, 0.9]]), np.eye(num_pred)[list(preds)].sum(axis=0, keepdims=True))


def test_matching_cost_perfect_prediction_is_zero():
    gt = one_relation_gt()
    big = 60.0
    pred = arrays([[0, big, 0, 0]], [[0, 0, big, 0]], [[1.0, 0.0, 0.0]], gt.sub_boxes, gt.obj_boxes)
    assert matching_cost(gt, 0, pred, 0, LossWeights()) < 1e-20


def test_matching_cost_uniform_classes():
    gt = one_relation_gt()
    pred = arrays(np.zeros((1, 4)), np.zeros((1, 4)), [[0.3, 0.5, 0.9]], gt.sub_boxes, gt.obj_boxes)
    for beta in (0.0, 1.0, 7.0):
        w = LossWeights(alpha_pred=0.0, beta=beta)
        assert abs(matching_cost(gt, 0, pred, 0, w) - 2 * math.log(4)) < 1e-12


def test_beta_scales_box_part_only():
    gt = one_relation_gt()
    pred = arrays([[0.1, 0.4, -0.2, 0.0]], [[0.3, 0.0, 0.2, 0.1]], [[0.3, 0.5, 0.9]],
                  [[0.0, 0.0, 0.3, 0.3]], [[0.2, 0.1, 0.9, 0.7]])
    c1 = matching_cost(gt, 0, pred, 0, LossWeights(beta=1.0))
    c2 = matching_cost(gt, 0, pred, 0, LossWeights(beta=2.0))
    c0 = matching_cost(gt, 0, pred, 0, LossWeights(beta=0.0))
    assert abs((c2 - c0) - 2 * (c1 - c0)) < 1e-12
    assert c1 > c0


def prediction_set(sub_logits, obj_logits, probs, sub_boxes, obj_boxes):
    return TripletPredictionSet(Tensor(sub_boxes), Tensor(obj_boxes), Tensor(sub_logits), Tensor(obj_logits),
                                Tensor(probs))


def annotation(num_rel=2):
    ents = [Entity(0, BoundingBox(0.1, 0.1, 0.4, 0.5)), Entity(1, BoundingBox(0.5, 0.2, 0.8, 0.6)),
            Entity(2, BoundingBox(0.2, 0.6, 0.4, 0.9))]
    rels = [Relation(0, 1, ((0,), (), ())), Relation(0, 2, ((), (1,), (2,)))][:num_rel]
    return FrameAnnotation("v", 0, tuple(ents), tuple(rels))


def test_total_loss_ideal_is_near_zero():
    ann = annotation()
    big = 60.0
    n, c = 3, 4                          # 3 object classes + no-object
    sub_l = np.zeros((n, c))
    obj_l = np.zeros((n, c))
    sub_l[0, 0] = sub_l[1, 0] = big
    obj_l[0, 1] = obj_l[1, 2] = big
    sub_l[2, 3] = obj_l[2, 3] = big
    probs = np.zeros((n, 3))
    probs[0, 0] = probs[1, 1] = probs[1, 2] = 1.0
    sb = np.array([ann.entities[0].box.as_tuple()] * 2 + [[0, 0, 0, 0]])
    ob = np.array([ann.entities[1].box.as_tuple(), ann.entities[2].box.as_tuple(), [0, 0, 0, 0]])
    loss, parts, m = total_loss(prediction_set(sub_l, obj_l, probs, sb, ob), ann, LossWeights())
    assert m.assignment == [0, 1]
    assert 0.0 <= loss.item() < 1e-9


def test_total_loss_single_gt_two_slots_matches_enumeration():
    ann = annotation(1)
    rng = np.random.default_rng(0)
    sub_l, obj_l = rng.normal(size=(2, 4)), rng.normal(size=(2, 4))
    probs = rng.uniform(0.1, 0.9, size=(2, 3))
    sb = np.array([[0.1, 0.1, 0.35, 0.5], [0.0, 0.3, 0.5, 0.7]])
    ob = np.array([[0.5, 0.25, 0.8, 0.6], [0.1, 0.1, 0.3, 0.3]])
    preds = prediction_set(sub_l, obj_l, probs, sb, ob)
    w = LossWeights()
    loss, parts, m = total_loss(preds, ann, w)
    gt = GroundTruth.from_annotation(ann, 3)
    arr = preds.arrays()
    costs = [matching_cost(gt, 0, arr, q, w) for q in range(2)]
    q = int(np.argmin(costs))
    other = 1 - q
    no_obj = -w.no_object_weight * (arr.sub_logp[other, 3] + arr.obj_logp[other, 3])
    assert m.assignment == [q]
    assert abs(loss.item() - (costs[q] + no_obj)) < 1e-12


def test_total_loss_permutation_invariance(tiny_data):
    m = tiny_model(tiny_data, seed=1)
    cur, ref = tiny_inputs(tiny_data, m, [1, 0])
    preds = m(cur, [ref])
    ann = tiny_data.annotations[1]
    w = LossWeights()
    base, _, res = total_loss(preds, ann, w)
    rev = FrameAnnotation(ann.video, ann.frame, ann.entities, tuple(reversed(ann.relations)))
    assert abs(total_loss(preds, rev, w)[0].item() - base.item()) < 1e-12
    perm = [3, 1, 0, 2]
    shuffled = TripletPredictionSet(*(T.take_rows(getattr(preds, f), perm) for f in
                                      ("sub_boxes", "obj_boxes", "sub_logits", "obj_logits", "pred_probs")))
    assert abs(total_loss(shuffled, ann, w)[0].item() - base.item()) < 1e-12
    assert base.item() > 0


def test_total_loss_capacity():
    ann = annotation()
    preds = prediction_set(np.zeros((1, 4)), np.zeros((1, 4)), np.full((1, 3), 0.5), np.zeros((1, 4)),
                           np.zeros((1, 4)))
    with pytest.raises(CapacityError):
        total_loss(preds, ann, LossWeights())


def test_match_costs_sum_to_total():
    gt = GroundTruth.from_annotation(annotation(), 3)
    rng = np.random.default_rng(2)
    pred = arrays(rng.normal(size=(4, 4)), rng.normal(size=(4, 4)), rng.uniform(size=(4, 3)),
                  np.tile([0.1, 0.1, 0.5, 0.5], (4, 1)), np.tile([0.2, 0.3, 0.6, 0.9], (4, 1)))
    res = match(gt, pred, LossWeights())
    assert abs(sum(res.costs) - res.total) < 1e-12
    full = cost_matrix(gt, pred, LossWeights())
    assert res.total == brute_force(full)[1]
