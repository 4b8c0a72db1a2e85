"""Dual-source query construction.

Content rows come from cue embeddings (what to look for); position rows come
from instance-agnostic anchors or, for the predicate decoder, from the
subject-object decoder output (where to look). Rows beyond the number of
cues keep a zero content vector.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.embed import CueEmbeddings
from .numeric import checkpoint
from .numeric import tensor as T
from .numeric.tensor import DimensionError, Parameter, Tensor


class CapacityError(ValueError):
    pass


@dataclass
class QueryBlock:
    content: Tensor
    position: Tensor

    def __post_init__(self):
        if self.content.shape != self.position.shape:
            raise DimensionError(f"content {self.content.shape} vs position {self.position.shape}")

    @property
    def combined(self) -> Tensor:
        return self.content + self.position


def _pad_content(filled: Tensor | None, n: int, d: int) -> Tensor:
    if filled is None:
        return T.zeros(n, d)
    if filled.rows == n:
        return filled
    return T.concat_rows([filled, T.zeros(n - filled.rows, d)])


def build_subject_object_queries(cues: CueEmbeddings, anchors: Tensor, proj: Tensor) -> QueryBlock:
    """Content row ``i < x`` is ``proj @ [sub_t_i; obj_t_i]``; position is the anchor table."""
    n, d = anchors.shape
    x = cues.count
    if x > n:
        raise CapacityError(f"{x} cues exceed the {n} available queries")
    filled = None
    if x:
        pair = np.concatenate([cues.sub_t, cues.obj_t], axis=1)
        filled = T.linear(Tensor(pair), proj)
    content = _pad_content(filled, n, d)
    return QueryBlock(content, anchors)


def build_predicate_queries(cues: CueEmbeddings, so_out: Tensor, proj: Tensor) -> QueryBlock:
    """Content row ``i < x`` is ``proj @ pred_t_i``; position is the subject-object output."""
    n, d = so_out.shape
    x = cues.count
    if x > n:
        raise CapacityError(f"{x} cues exceed the {n} available queries")
    if proj.rows != d:
        raise DimensionError(f"predicate projection outputs {proj.rows}, queries have width {d}")
    filled = T.linear(Tensor(cues.pred_t), proj) if x else None
    return QueryBlock(_pad_content(filled, n, d), so_out)


def load_anchor_table(path: str | Path, rows: int, cols: int) -> np.ndarray:
    """Read an externally supplied ``rows x cols`` anchor table.

    Uses the array named ``anchors`` if present, otherwise the only array.
    """
    arrays = checkpoint.load(path)
    if "anchors" in arrays:
        table = arrays["anchors"]
    elif len(arrays) == 1:
        table = next(iter(arrays.values()))
    else:
        raise checkpoint.CheckpointError(f"{path}: no array named 'anchors'")
    if table.shape != (rows, cols):
        raise checkpoint.CompatibilityError(f"anchor table shape {table.shape}, expected {(rows, cols)}")
    return table


def set_anchors(anchors: Parameter, table: np.ndarray) -> None:
    if table.shape != anchors.shape:
        raise checkpoint.CompatibilityError(f"anchor table shape {table.shape}, expected {anchors.shape}")
    anchors.data = np.array(table, dtype=np.float64)
