"""Training loop, optimizer and batch prediction."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data.embed import EmbeddingProvider
from .data.records import Dataset
from .geometry import LossWeights
from .matcher import total_loss
from .model import FrameInput, ModelConfig, PredictionArrays, SceneGraphModel, frame_input
from .numeric import checkpoint
from .numeric.tensor import NumericError, Parameter, no_grad

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class Adam:
    """Adaptive moment estimation with optional decoupled weight decay."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 0.0):
        self.params = list(params)
        self.lr, self.b1, self.b2, self.eps, self.wd = lr, betas[0], betas[1], eps, weight_decay
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in self.params}
        self.v = {p.name: np.zeros_like(p.data) for p in self.params}

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p in self.params:
            if p.grad is None:
                continue
            g = p.grad
            m, v = self.m[p.name], self.v[p.name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            upd = (m / c1) / (np.sqrt(v / c2) + self.eps)
            if self.wd:
                upd = upd + self.wd * p.data
            p.data = p.data - self.lr * upd

    def state(self) -> dict[str, np.ndarray]:
        out = {"adam.t": np.array([[float(self.t)]])}
        for p in self.params:
            out[f"adam.m.{p.name}"] = self.m[p.name].copy()
            out[f"adam.v.{p.name}"] = self.v[p.name].copy()
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.t = int(state["adam.t"][0, 0])
        for p in self.params:
            self.m[p.name] = np.array(state[f"adam.m.{p.name}"])
            self.v[p.name] = np.array(state[f"adam.v.{p.name}"])


@dataclass
class TrainConfig:
    steps: int = 2000
    lr: float = 1e-3
    weight_decay: float = 0.0
    grad_clip: float = 0.0          # global norm; 0 disables
    seed: int = 0
    max_cues: int = 0               # 0 means num_queries


def frame_order(num_frames: int, step: int, seed: int) -> int:
    """Frame visited at ``step``: a fresh seeded permutation per pass over the data."""
    epoch, pos = divmod(step, num_frames)
    perm = np.random.default_rng([seed, epoch]).permutation(num_frames)
    return int(perm[pos])


def build_inputs(ds: Dataset, provider: EmbeddingProvider, max_cues: int) -> list[FrameInput]:
    return [frame_input(ds.features[i], ds.cues[i], provider, max_cues) for i in range(len(ds))]


@dataclass
class Trainer:
    model: SceneGraphModel
    dataset: Dataset
    provider: EmbeddingProvider
    weights: LossWeights = field(default_factory=LossWeights)
    cfg: TrainConfig = field(default_factory=TrainConfig)
    frames: Sequence[int] | None = None       # subset of dataset indices to train on

    def __post_init__(self):
        mc = self.model.cfg
        self.optim = Adam(self.model.parameters(), self.cfg.lr, weight_decay=self.cfg.weight_decay)
        self.inputs = build_inputs(self.dataset, self.provider, self.cfg.max_cues or mc.num_queries)
        self.pool = list(range(len(self.dataset))) if self.frames is None else list(self.frames)
        allowed = set(self.pool)
        self.refs = {i: [r for r in self.dataset.reference_indices(i, len(self.dataset)) if r in allowed][:mc.n_ref]
                     for i in self.pool}
        self.step_index = 0
        self.history: list[dict] = []

    def loss_at(self, index: int, step: int | None = None):
        preds = self.model(self.inputs[index], [self.inputs[r] for r in self.refs[index]])
        if step is not None:
            arr = preds.arrays()
            if not all(np.isfinite(a).all() for a in (arr.sub_boxes, arr.obj_boxes, arr.sub_logp, arr.obj_logp,
                                                       arr.pred_probs)):
                raise TrainingError(f"non-finite model output at step {step} (frame {index})")
        return total_loss(preds, self.dataset.annotations[index], self.weights, self.model.cfg.num_predicates)

    def step(self) -> dict:
        if not self.pool:
            raise TrainingError("no frames to train on")
        s = self.step_index
        index = self.pool[frame_order(len(self.pool), s, self.cfg.seed)]
        self.model.store.zero_grad()
        loss, parts, _ = self.loss_at(index, s)
        if not np.isfinite(loss.item()):
            raise TrainingError(f"non-finite loss at step {s} (frame {index})")
        loss.backward()
        params = self.model.parameters()
        if self.cfg.grad_clip > 0:
            norm = np.sqrt(sum(float(np.sum(p.grad ** 2)) for p in params if p.grad is not None))
            if not np.isfinite(norm):
                raise TrainingError(f"non-finite gradient at step {s} (frame {index})")
            if norm > self.cfg.grad_clip:
                for p in params:
                    if p.grad is not None:
                        p.grad = p.grad * (self.cfg.grad_clip / norm)
        self.optim.step()
        self.step_index += 1
        rec = {"step": s, "frame": index, **parts}
        self.history.append(rec)
        log.debug("step %d total %.6f", s, parts["total"])
        return rec

    def run(self, steps: int | None = None, log_path: str | Path | None = None) -> list[dict]:
        n = self.cfg.steps if steps is None else steps
        fh = open(log_path, "a", encoding="utf-8") if log_path else None
        try:
            for _ in range(n):
                rec = self.step()
                if fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        finally:
            if fh:
                fh.close()
        return self.history

    # ------------------------------------------------------------ checkpoints

    def state(self) -> dict[str, np.ndarray]:
        out = dict(self.model.store.state())
        out.update(self.optim.state())
        out["train.step"] = np.array([[float(self.step_index)]])
        return out

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, self.state())

    def restore(self, path: str | Path) -> None:
        state = checkpoint.load(path)
        self.model.store.load_state(state)
        if "adam.t" in state:
            self.optim.load_state(state)
        self.step_index = int(state.get("train.step", np.zeros((1, 1)))[0, 0])


def predict(model: SceneGraphModel, dataset: Dataset, provider: EmbeddingProvider, indices: Sequence[int] | None = None,
            max_cues: int = 0) -> list[PredictionArrays]:
    """Forward every selected frame (with its reference frames) without building graphs."""
    idx = list(range(len(dataset))) if indices is None else list(indices)
    inputs = build_inputs(dataset, provider, max_cues or model.cfg.num_queries)
    allowed = set(idx)
    out = []
    with no_grad():
        for i in idx:
            refs = [r for r in dataset.reference_indices(i, len(dataset)) if r in allowed][:model.cfg.n_ref]
            try:
                out.append(model(inputs[i], [inputs[r] for r in refs]).arrays())
            except FloatingPointError as exc:  # pragma: no cover
                raise NumericError(f"frame {i}: {exc}") from None
    return out


def load_model(cfg: ModelConfig, channels: int, path: str | Path, seed: int = 0) -> SceneGraphModel:
    model = SceneGraphModel(cfg, channels, seed)
    model.store.load_state(checkpoint.load(path))
    return model
