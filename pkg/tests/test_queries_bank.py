import numpy as np
import pytest

from stsgg.bank import ConsistencyError, assemble_bank, encode_bank, spatial_feature, spatial_vector
from stsgg.data.embed import CueEmbeddings, EmbeddingProvider
from stsgg.data.records import Cue
from stsgg.geometry import BoundingBox
from stsgg.numeric import checkpoint
from stsgg.numeric.nn import EncoderLayer, ParamStore
from stsgg.numeric.tensor import DimensionError, Parameter, Tensor
from stsgg.queries import (
    CapacityError,
    build_predicate_queries,
    build_subject_object_queries,
    load_anchor_table,
    set_anchors,
)


def random_cues(x, dl=4, seed=0):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(0, 0.5, size=(2, x, 2))
    boxes = [np.concatenate([lo[i], lo[i] + 0.3], axis=1) for i in range(2)]
    return CueEmbeddings.from_arrays(
        **{n: rng.normal(size=(x, dl)) for n in ("sub_t", "obj_t", "pred_t", "sub_v", "obj_v", "pred_v")},
        sub_box=boxes[0], obj_box=boxes[1])


def test_no_cues_gives_anchor_queries():
    anchors = Tensor(np.random.default_rng(0).normal(size=(3, 4)))
    q = build_subject_object_queries(random_cues(0), anchors, Tensor(np.ones((4, 8))))
    assert np.array_equal(q.content.data, np.zeros((3, 4)))
    assert np.array_equal(q.combined.data, anchors.data)


def test_single_cue_hand_value():
    cues = CueEmbeddings.from_arrays(sub_t=[[1.0, 0.0]], obj_t=[[0.0, 1.0]], pred_t=[[1.0, 0.0]])
    anchors = Tensor(np.full((2, 4), 0.1))
    q = build_subject_object_queries(cues, anchors, Tensor(np.eye(4)))
    assert np.allclose(q.combined.data[0], [1.1, 0.1, 0.1, 1.1], atol=1e-15)
    assert np.array_equal(q.content.data[1], np.zeros(4))


def test_full_and_overfull_cues():
    anchors = Tensor(np.zeros((3, 4)))
    q = build_subject_object_queries(random_cues(3), anchors, Tensor(np.ones((4, 8))))
    assert np.all(np.abs(q.content.data).sum(axis=1) > 0)
    with pytest.raises(CapacityError):
        build_subject_object_queries(random_cues(4), anchors, Tensor(np.ones((4, 8))))


def test_predicate_queries():
    so = Tensor(np.random.default_rng(1).normal(size=(3, 4)))
    q = build_predicate_queries(random_cues(0), so, Tensor(np.eye(4)))
    assert np.array_equal(q.combined.data, so.data)
    cues = random_cues(2, seed=3)
    q = build_predicate_queries(cues, so, Tensor(np.eye(4)))
    assert np.array_equal(q.combined.data[:2], cues.pred_t + so.data[:2])
    with pytest.raises(DimensionError):
        build_predicate_queries(cues, so, Tensor(np.eye(4)[:3]))


def test_multi_predicate_cue_uses_normalized_mean():
    prov = EmbeddingProvider(6, seed=2)
    box = BoundingBox(0.1, 0.1, 0.3, 0.3)
    cue = Cue("person", "cup", ("holding", "in_front_of"), box, box)
    emb = CueEmbeddings([cue], prov)
    mean = (prov.embed("holding") + prov.embed("in_front_of")) / 2
    assert np.allclose(emb.pred_t[0], mean / np.linalg.norm(mean), atol=1e-15)
    proj = np.random.default_rng(0).normal(size=(6, 6))
    q = build_predicate_queries(emb, Tensor(np.zeros((2, 6))), Tensor(proj))
    assert np.allclose(q.content.data[0], proj @ emb.pred_t[0], atol=1e-14)


def test_cue_permutation_moves_rows_together():
    cues = random_cues(3, seed=4)
    perm = [2, 0, 1]
    rng = np.random.default_rng(5)
    anchors, p1, p2 = Tensor(rng.normal(size=(4, 4))), Tensor(rng.normal(size=(4, 8))), Tensor(rng.normal(size=(4, 4)))
    so = Tensor(rng.normal(size=(4, 4)))
    a = build_subject_object_queries(cues, anchors, p1).content.data
    b = build_subject_object_queries(cues.permuted(perm), anchors, p1).content.data
    assert np.array_equal(b[:3], a[perm])
    c = build_predicate_queries(cues, so, p2).content.data
    d = build_predicate_queries(cues.permuted(perm), so, p2).content.data
    assert np.array_equal(d[:3], c[perm])


def test_anchor_table_loader(tmp_path):
    table = np.random.default_rng(0).normal(size=(3, 4))
    checkpoint.save(tmp_path / "anchors.ckpt", {"anchors": table})
    loaded = load_anchor_table(tmp_path / "anchors.ckpt", 3, 4)
    p = Parameter("queries.anchors", np.zeros((3, 4)))
    set_anchors(p, loaded)
    assert np.array_equal(p.data, table)
    with pytest.raises(checkpoint.CompatibilityError):
        load_anchor_table(tmp_path / "anchors.ckpt", 4, 4)


def test_spatial_vector_hand_value():
    v = spatial_vector((0.1, 0.1, 0.5, 0.5), (0.4, 0.4, 0.8, 0.8))
    assert np.allclose(v, [0.1, 0.1, 0.5, 0.5, 0.4, 0.4, 0.8, 0.8, -0.3, -0.3, 0.16, 0.16], atol=1e-15)
    same = spatial_vector((0.2, 0.1, 0.4, 0.6), (0.2, 0.1, 0.4, 0.6))
    assert np.all(same[8:10] == 0) and same[10] == same[11]


def test_spatial_vector_translation():
    a, b = np.array([0.1, 0.2, 0.3, 0.5]), np.array([0.3, 0.1, 0.6, 0.4])
    delta = 0.05
    u = spatial_vector(a, b)
    w = spatial_vector(a + delta, b + delta)
    assert np.allclose(w[:8] - u[:8], delta, atol=1e-15)
    assert np.allclose(w[8:], u[8:], atol=1e-15)
    proj = Tensor(np.random.default_rng(0).normal(size=(5, 12)))
    assert spatial_feature(a, b, proj).shape == (1, 5)


def test_bank_layout():
    store = ParamStore(0)
    text, vis, sp = store.weight("t", 8, 4), store.weight("v", 8, 4), store.weight("s", 8, 12)
    null = store.uniform("n", 1, 8, 1.0)
    bank = assemble_bank(random_cues(2), text, vis, sp, null)
    assert bank.size == 14
    assert bank.region_index == (0,) * 7 + (1,) * 7
    empty = assemble_bank(random_cues(0), text, vis, sp, null)
    assert empty.size == 1 and np.array_equal(empty.tokens.data, null.data)
    bad = random_cues(2)
    bad.obj_box = bad.obj_box[:1]
    with pytest.raises(ConsistencyError):
        assemble_bank(bad, text, vis, sp, null)


def test_bank_permutation_moves_token_blocks():
    store = ParamStore(1)
    args = (store.weight("t", 8, 4), store.weight("v", 8, 4), store.weight("s", 8, 12), store.uniform("n", 1, 8, 1.0))
    cues = random_cues(3, seed=7)
    a = assemble_bank(cues, *args).tokens.data.reshape(3, 7, 8)
    b = assemble_bank(cues.permuted([1, 2, 0]), *args).tokens.data.reshape(3, 7, 8)
    assert np.array_equal(b, a[[1, 2, 0]])


def test_encode_bank_shape_and_determinism():
    def run():
        store = ParamStore(3)
        args = (store.weight("t", 8, 4), store.weight("v", 8, 4), store.weight("s", 8, 12),
                store.uniform("n", 1, 8, 1.0))
        layers = [EncoderLayer(store, f"e{i}", 8, 2, 16) for i in range(2)]
        return encode_bank(assemble_bank(random_cues(2), *args), layers).data
    a, b = run(), run()
    assert a.shape == (14, 8) and np.array_equal(a, b)
