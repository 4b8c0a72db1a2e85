"""Cascaded subject-object / predicate decoders with temporal aggregation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import bank as mmbank
from .data.embed import CueEmbeddings, EmbeddingProvider
from .data.records import FrameCues
from .geometry import cxcywh_to_corners
from .numeric import tensor as T
from .numeric.nn import (
    DecoderLayer,
    EncoderLayer,
    FeedForward,
    Linear,
    MLP,
    MultiHeadAttention,
    ParamStore,
    sinusoidal_pe_2d,
)
from .numeric.tensor import DimensionError, Tensor
from .queries import QueryBlock, build_predicate_queries, build_subject_object_queries

CONTENT_SOURCES = ("vlm", "zero")
PREDICATE_MEMORIES = ("bank", "image")


@dataclass(frozen=True)
class ModelConfig:
    num_queries: int = 100
    d_model: int = 256
    d_embed: int = 512
    layers: int = 6
    heads: int = 8
    ffn_dim: int = 0           # 0 means 4 * d_model
    n_ref: int = 1
    num_objects: int = 6
    group_sizes: tuple[int, int, int] = (3, 4, 5)
    grid_size: int = 8
    content_source: str = "vlm"
    predicate_memory: str = "bank"

    def __post_init__(self):
        if len(self.group_sizes) != 3:
            raise ValueError("predicate classifiers come in exactly 3 groups")
        if self.d_model % self.heads or (2 * self.d_model) % self.heads:
            raise DimensionError(f"d_model {self.d_model} not divisible by heads {self.heads}")
        if self.d_model % 4:
            raise DimensionError("d_model must be divisible by 4 for 2-D position encodings")
        if self.layers < 1 or self.num_queries < 1:
            raise ValueError("layers and num_queries must be >= 1")
        if self.content_source not in CONTENT_SOURCES:
            raise ValueError(f"content_source must be one of {CONTENT_SOURCES}")
        if self.predicate_memory not in PREDICATE_MEMORIES:
            raise ValueError(f"predicate_memory must be one of {PREDICATE_MEMORIES}")

    @property
    def hidden(self) -> int:
        return self.ffn_dim or 4 * self.d_model

    @property
    def num_predicates(self) -> int:
        return sum(self.group_sizes)

    @property
    def tokens(self) -> int:
        return self.grid_size ** 2


@dataclass
class TripletPredictionSet:
    """Per-query predictions (graph tensors, ``N`` rows each)."""

    sub_boxes: Tensor          # corners
    obj_boxes: Tensor
    sub_logits: Tensor         # num_objects + 1 columns, last is no-object
    obj_logits: Tensor
    pred_probs: Tensor         # all predicate groups, independent logistic

    def arrays(self) -> PredictionArrays:
        return PredictionArrays(
            self.sub_boxes.data.copy(), self.obj_boxes.data.copy(),
            _log_softmax(self.sub_logits.data), _log_softmax(self.obj_logits.data),
            self.pred_probs.data.copy(),
        )


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class PredictionArrays:
    """Detached predictions used by matching and evaluation."""

    sub_boxes: np.ndarray
    obj_boxes: np.ndarray
    sub_logp: np.ndarray
    obj_logp: np.ndarray
    pred_probs: np.ndarray

    @property
    def num_queries(self) -> int:
        return self.sub_boxes.shape[0]

    @property
    def sub_dist(self) -> np.ndarray:
        return np.exp(self.sub_logp)

    @property
    def obj_dist(self) -> np.ndarray:
        return np.exp(self.obj_logp)


@dataclass
class FrameInput:
    features: np.ndarray                 # L x channels occupancy grid
    cues: CueEmbeddings
    extra: dict = field(default_factory=dict)


def split_triplets(tri: Tensor) -> tuple[Tensor, Tensor]:
    d = tri.cols // 2
    return T.slice_cols(tri, 0, d), T.slice_cols(tri, d, 2 * d)


def form_triplets(so: Tensor, p: Tensor) -> Tensor:
    if so.rows != p.rows:
        raise DimensionError(f"triplet halves have {so.rows} and {p.rows} rows")
    return T.concat_cols([so, p])


class TemporalAggregator:
    """Cross-attention from current-frame triplets into all reference triplets.

    ``out = current + FFN(attn(current, refs, refs))``; with no reference frames
    the input is returned unchanged. References are concatenated without any
    frame marker, so their order does not matter.
    """

    def __init__(self, store: ParamStore, name: str, width: int, heads: int, hidden: int):
        self.attn = MultiHeadAttention(store, f"{name}.attn", width, heads)
        self.ffn = FeedForward(store, f"{name}.ffn", width, hidden)

    def __call__(self, current: Tensor, refs: Sequence[Tensor]) -> Tensor:
        for r in refs:
            if r.shape != current.shape:
                raise DimensionError(f"reference triplets {r.shape} vs current {current.shape}")
        if not refs:
            return current
        memory = refs[0] if len(refs) == 1 else T.concat_rows(list(refs))
        return current + self.ffn(self.attn(current, memory, memory))


class SceneGraphModel:
    def __init__(self, cfg: ModelConfig, channels: int, seed: int = 0):
        self.cfg = cfg
        self.channels = channels
        d, hid = cfg.d_model, cfg.hidden
        s = self.store = ParamStore(seed)

        self.patch = Linear(s, "patch", channels, d)
        self.image_encoder = [EncoderLayer(s, f"image_enc.{i}", d, cfg.heads, hid) for i in range(cfg.layers)]

        self.bank_text = s.weight("bank.text", d, cfg.d_embed)
        self.bank_visual = s.weight("bank.visual", d, cfg.d_embed)
        self.bank_spatial = s.weight("bank.spatial", d, 12)
        self.bank_null = s.uniform("bank.null", 1, d, 1.0)
        self.bank_encoder = [EncoderLayer(s, f"bank_enc.{i}", d, cfg.heads, hid) for i in range(cfg.layers)]

        self.anchors = s.uniform("queries.anchors", cfg.num_queries, d, 1.0)
        self.so_content = s.weight("queries.so_content", d, 2 * cfg.d_embed)
        self.pred_content = s.weight("queries.pred_content", d, cfg.d_embed)

        self.so_decoder = [DecoderLayer(s, f"so_dec.{i}", d, cfg.heads, hid) for i in range(cfg.layers)]
        self.pred_decoder = [DecoderLayer(s, f"pred_dec.{i}", d, cfg.heads, hid) for i in range(cfg.layers)]

        self.temporal = TemporalAggregator(s, "temporal", 2 * d, cfg.heads, hid)

        c = cfg.num_objects + 1
        self.sub_box = MLP(s, "head.sub_box", d, d, 4)
        self.obj_box = MLP(s, "head.obj_box", d, d, 4)
        self.sub_cls = Linear(s, "head.sub_cls", d, c)
        self.obj_cls = Linear(s, "head.obj_cls", d, c)
        self.pred_cls = [Linear(s, f"head.pred_cls.{g}", d, n) for g, n in enumerate(cfg.group_sizes)]

        self._image_pe = sinusoidal_pe_2d(cfg.grid_size, cfg.grid_size, d)

    # -------------------------------------------------------------- stages

    def encode_image(self, features: np.ndarray) -> Tensor:
        if features.shape[0] != self.cfg.tokens:
            raise DimensionError(f"frame has {features.shape[0]} tokens, model expects {self.cfg.tokens}")
        h = self.patch(Tensor(features)) + self._image_pe
        for layer in self.image_encoder:
            h = layer(h)
        return h

    def subject_object_decode(self, q: QueryBlock, memory: Tensor) -> Tensor:
        tgt = q.content
        for layer in self.so_decoder:
            tgt = layer(tgt, q.position, memory)
        return tgt

    def predicate_decode(self, q: QueryBlock, memory: Tensor) -> Tensor:
        tgt = q.content
        for layer in self.pred_decoder:
            tgt = layer(tgt, q.position, memory)
        return tgt

    def build_bank(self, cues: CueEmbeddings) -> mmbank.MultiModalBank:
        return mmbank.assemble_bank(cues, self.bank_text, self.bank_visual, self.bank_spatial, self.bank_null)

    def encode_bank(self, bank: mmbank.MultiModalBank) -> Tensor:
        return mmbank.encode_bank(bank, self.bank_encoder)

    def frame_triplets(self, frame: FrameInput) -> Tensor:
        E = self.encode_image(frame.features)
        cues = frame.cues
        if cues.count > self.cfg.num_queries:
            cues = cues.permuted(range(self.cfg.num_queries))
        query_cues = cues if self.cfg.content_source == "vlm" else _EMPTY_CUES
        so_out = self.subject_object_decode(
            build_subject_object_queries(query_cues, self.anchors, self.so_content), E)
        if self.cfg.predicate_memory == "bank":
            memory = self.encode_bank(self.build_bank(cues))
        else:
            memory = E
        p_out = self.predicate_decode(build_predicate_queries(query_cues, so_out, self.pred_content), memory)
        return form_triplets(so_out, p_out)

    def predict_heads(self, tri: Tensor) -> TripletPredictionSet:
        so, p = split_triplets(tri)
        pred = T.sigmoid(T.concat_cols([head(p) for head in self.pred_cls]))
        return TripletPredictionSet(
            cxcywh_to_corners(self.sub_box(so)), cxcywh_to_corners(self.obj_box(so)),
            self.sub_cls(so), self.obj_cls(so), pred,
        )

    def forward(self, current: FrameInput, refs: Sequence[FrameInput] = ()) -> TripletPredictionSet:
        tri = self.frame_triplets(current)
        ref_tri = [self.frame_triplets(r) for r in refs]
        return self.predict_heads(self.temporal(tri, ref_tri))

    __call__ = forward

    def parameters(self):
        return list(self.store)


class _EmptyCues(CueEmbeddings):
    def __init__(self):
        self.count = 0
        for n in ("sub_t", "obj_t", "pred_t", "sub_v", "obj_v", "pred_v"):
            setattr(self, n, np.zeros((0, 0)))
        self.sub_box = np.zeros((0, 4))
        self.obj_box = np.zeros((0, 4))


_EMPTY_CUES = _EmptyCues()


def frame_input(features: np.ndarray, cues: FrameCues | None, provider: EmbeddingProvider,
                max_cues: int | None = None) -> FrameInput:
    items = () if cues is None else cues.cues
    if max_cues is not None:
        items = items[:max_cues]
    return FrameInput(np.asarray(features, dtype=np.float64), CueEmbeddings(items, provider))
