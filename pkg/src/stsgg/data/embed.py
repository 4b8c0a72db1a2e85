"""Deterministic label embeddings standing in for pretrained text/image encoders."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..geometry import union_box
from .records import Cue

KINDS = ("text", "visual")
QUANT = 16


class MissingEmbeddingError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0])


def quantize_box(box) -> tuple[int, int, int, int]:
    return tuple(int(min(QUANT - 1, max(0, np.floor(float(v) * QUANT)))) for v in box)  # type: ignore[return-value]


class EmbeddingProvider:
    """Unit vectors keyed by ``(label, kind, quantized box)``.

    A hash of the key seeds a generator whose Gaussian draw is normalized.
    Kinds that appear in a loaded table are served from it by exact label, and
    a miss there raises :class:`MissingEmbeddingError`.
    """

    def __init__(self, dim: int, seed: int = 0, table: dict[tuple[str, str], np.ndarray] | None = None):
        self.dim = dim
        self.seed = seed
        self.table = dict(table or {})
        self._table_kinds = {k for k, _ in self.table}
        self._cache: dict[tuple, np.ndarray] = {}
        for (kind, label), v in self.table.items():
            if v.shape != (dim,):
                raise ValueError(f"table entry {kind}:{label} has shape {v.shape}, expected ({dim},)")

    def embed(self, label: str, kind: str = "text", box=None) -> np.ndarray:
        if not label:
            raise ValueError("embedding label must be nonempty")
        if kind not in KINDS:
            raise ValueError(f"unknown embedding kind {kind!r}")
        if kind in self._table_kinds:
            try:
                v = self.table[(kind, label)]
            except KeyError:
                raise MissingEmbeddingError(f"no {kind} embedding for label {label!r}") from None
            return v / np.linalg.norm(v)
        q = None if box is None else quantize_box(box)
        key = (label, kind, q)
        hit = self._cache.get(key)
        if hit is not None:
            return hit.copy()
        digest = hashlib.blake2b(repr((self.seed, label, kind, q)).encode(), digest_size=16).digest()
        rng = np.random.default_rng(np.frombuffer(digest, dtype="<u4").tolist())
        v = rng.standard_normal(self.dim)
        v /= np.linalg.norm(v)
        self._cache[key] = v
        return v.copy()

    def embed_many(self, labels: Sequence[str], kind: str = "text", box=None) -> np.ndarray:
        """Mean of the individual embeddings, re-normalized."""
        if not labels:
            raise ValueError("need at least one label")
        m = np.mean([self.embed(lab, kind, box) for lab in labels], axis=0)
        n = np.linalg.norm(m)
        return m / n if n > 0 else m


def load_table(path: str | Path) -> dict[tuple[str, str], np.ndarray]:
    """Read ``{"label": ..., "kind": "text", "vector": [...]}`` lines."""
    table: dict[tuple[str, str], np.ndarray] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = (rec.get("kind", "text"), rec["label"])
                table[key] = np.asarray(rec["vector"], dtype=np.float64)
            except (ValueError, KeyError, TypeError) as exc:
                from .formats import ParseError
                raise ParseError(f"{path}:{lineno}: bad embedding record ({exc})") from None
    return table


class CueEmbeddings:
    """Per-cue embedding and box arrays (``x`` rows each)."""

    def __init__(self, cues: Sequence[Cue], provider: EmbeddingProvider):
        x = len(cues)
        dl = provider.dim
        self.count = x
        self.sub_t = np.zeros((x, dl))
        self.obj_t = np.zeros((x, dl))
        self.pred_t = np.zeros((x, dl))
        self.sub_v = np.zeros((x, dl))
        self.obj_v = np.zeros((x, dl))
        self.pred_v = np.zeros((x, dl))
        self.sub_box = np.zeros((x, 4))
        self.obj_box = np.zeros((x, 4))
        for i, c in enumerate(cues):
            self.sub_t[i] = provider.embed(c.subject, "text")
            self.obj_t[i] = provider.embed(c.object, "text")
            self.pred_t[i] = provider.embed_many(c.predicates, "text")
            self.sub_v[i] = provider.embed(c.subject, "visual", c.subject_box)
            self.obj_v[i] = provider.embed(c.object, "visual", c.object_box)
            self.pred_v[i] = provider.embed_many(c.predicates, "visual", union_box(c.subject_box, c.object_box))
            self.sub_box[i] = c.subject_box.as_tuple()
            self.obj_box[i] = c.object_box.as_tuple()

    @classmethod
    def from_arrays(cls, **arrays) -> CueEmbeddings:
        self = cls.__new__(cls)
        names = ("sub_t", "obj_t", "pred_t", "sub_v", "obj_v", "pred_v", "sub_box", "obj_box")
        counts = {np.asarray(arrays[n]).shape[0] for n in names if n in arrays}
        if len(counts) > 1:
            from ..bank import ConsistencyError
            raise ConsistencyError(f"cue arrays disagree on cue count: {sorted(counts)}")
        self.count = counts.pop() if counts else 0
        for n in names:
            setattr(self, n, np.asarray(arrays.get(n, np.zeros((self.count, 0))), dtype=np.float64))
        return self

    def permuted(self, order: Sequence[int]) -> CueEmbeddings:
        order = list(order)
        return CueEmbeddings.from_arrays(**{
            n: getattr(self, n)[order]
            for n in ("sub_t", "obj_t", "pred_t", "sub_v", "obj_v", "pred_v", "sub_box", "obj_box")
        })
