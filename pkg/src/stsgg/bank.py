"""Multi-modal feature bank: per-cue textual, visual and spatial tokens."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data.embed import CueEmbeddings
from .numeric import tensor as T
from .numeric.nn import EncoderLayer, sinusoidal_pe
from .numeric.tensor import Tensor

ROLES = ("sub_text", "sub_vis", "obj_text", "obj_vis", "pred_text", "pred_vis", "spatial")
NULL_ROLE = "null"


class ConsistencyError(ValueError):
    pass


@dataclass
class MultiModalBank:
    tokens: Tensor
    roles: tuple[str, ...]
    region_index: tuple[int, ...]

    @property
    def size(self) -> int:
        return self.tokens.rows


def spatial_vector(sub_box, obj_box) -> np.ndarray:
    """``[sub corners, obj corners, sub center - obj center, sub area, obj area]``."""
    s = np.asarray(tuple(sub_box), dtype=np.float64)
    o = np.asarray(tuple(obj_box), dtype=np.float64)
    cs = np.array([(s[0] + s[2]) / 2, (s[1] + s[3]) / 2])
    co = np.array([(o[0] + o[2]) / 2, (o[1] + o[3]) / 2])
    area_s = (s[2] - s[0]) * (s[3] - s[1])
    area_o = (o[2] - o[0]) * (o[3] - o[1])
    return np.concatenate([s, o, cs - co, [area_s, area_o]])


def spatial_vectors(sub_boxes: np.ndarray, obj_boxes: np.ndarray) -> np.ndarray:
    s = np.asarray(sub_boxes, float).reshape(-1, 4)
    o = np.asarray(obj_boxes, float).reshape(-1, 4)
    cs = np.stack([(s[:, 0] + s[:, 2]) / 2, (s[:, 1] + s[:, 3]) / 2], axis=1)
    co = np.stack([(o[:, 0] + o[:, 2]) / 2, (o[:, 1] + o[:, 3]) / 2], axis=1)
    area_s = ((s[:, 2] - s[:, 0]) * (s[:, 3] - s[:, 1]))[:, None]
    area_o = ((o[:, 2] - o[:, 0]) * (o[:, 3] - o[:, 1]))[:, None]
    return np.concatenate([s, o, cs - co, area_s, area_o], axis=1)


def spatial_feature(sub_box, obj_box, proj: Tensor) -> Tensor:
    return T.linear(Tensor(spatial_vector(sub_box, obj_box)), proj)


def assemble_bank(cues: CueEmbeddings, text_proj: Tensor, vis_proj: Tensor, spatial_proj: Tensor,
                  null_token: Tensor) -> MultiModalBank:
    """Seven tokens per cue in region-major order (see ``ROLES``); one null token when empty."""
    x = cues.count
    arrays = [cues.sub_t, cues.sub_v, cues.obj_t, cues.obj_v, cues.pred_t, cues.pred_v]
    if any(a.shape[0] != x for a in arrays) or cues.sub_box.shape != (x, 4) or cues.obj_box.shape != (x, 4):
        raise ConsistencyError("cue embedding and box arrays are not aligned per cue")
    if x == 0:
        return MultiModalBank(null_token, (NULL_ROLE,), (-1,))
    projs = [text_proj, vis_proj] * 3
    role_major = [T.linear(Tensor(a), p) for a, p in zip(arrays, projs)]
    role_major.append(T.linear(Tensor(spatial_vectors(cues.sub_box, cues.obj_box)), spatial_proj))
    stacked = T.concat_rows(role_major)
    # stacked row r*x + i holds role r of region i
    order = [r * x + i for i in range(x) for r in range(len(ROLES))]
    tokens = T.take_rows(stacked, order)
    return MultiModalBank(tokens, ROLES * x, tuple(i for i in range(x) for _ in ROLES))


def encode_bank(bank: MultiModalBank, layers: list[EncoderLayer]) -> Tensor:
    h = bank.tokens + sinusoidal_pe(bank.size, bank.tokens.cols)
    for layer in layers:
        h = layer(h)
    return h
