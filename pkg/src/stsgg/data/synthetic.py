"""Synthetic videos with long-tail predicate statistics.

Each video has one ``person`` subject and 1-3 objects. Every subject-object
pair carries one predicate drawn from a Zipf law over the predicate ids
(id 0 most frequent). The predicate fixes where the object sits relative to the
subject, so predicates are recoverable from geometry. Subjects drift with a
constant velocity across the video's frames and objects follow them.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import BoundingBox
from .records import Cue, Dataset, Entity, FrameAnnotation, FrameCues, Relation
from .vocab import Vocabulary, desk_vocabulary

MAX_PLACEMENT_TRIES = 200


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 0
    frames: int = 30
    frames_per_video: int = 5
    grid_size: int = 8
    num_objects: int = 6
    attention_predicates: int = 3
    spatial_predicates: int = 4
    contacting_predicates: int = 5
    zipf_exponent: float = 1.0
    cue_noise: float = 0.2

    def __post_init__(self):
        if self.zipf_exponent < 0:
            raise ValueError("zipf_exponent must be >= 0")
        if not 0.0 <= self.cue_noise <= 1.0:
            raise ValueError("cue_noise must lie in [0, 1]")
        if self.frames < 0 or self.frames_per_video < 1 or self.grid_size < 1:
            raise ValueError("frames >= 0, frames_per_video >= 1 and grid_size >= 1 required")

    @property
    def group_sizes(self) -> tuple[int, int, int]:
        return (self.attention_predicates, self.spatial_predicates, self.contacting_predicates)

    def vocabulary(self) -> Vocabulary:
        return desk_vocabulary(self.num_objects, self.group_sizes)


def zipf_probs(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1, dtype=np.float64) ** exponent
    return w / w.sum()


def predicate_layout(pid: int, num_predicates: int) -> tuple[float, float, float]:
    """Object-center offset ``(dx, dy)`` from the subject and object half-size."""
    angle = 2 * np.pi * pid / num_predicates
    radius = 0.14 + 0.08 * (pid % 2)
    half = 0.05 + 0.02 * (pid % 3)
    return radius * np.cos(angle), radius * np.sin(angle), half


def render_grid(entities, num_classes: int, grid: int) -> np.ndarray:
    """Per-cell, per-class box coverage fraction (``grid*grid x num_classes``)."""
    edges = np.linspace(0.0, 1.0, grid + 1)
    lo, hi = edges[:-1], edges[1:]
    cell = 1.0 / grid
    out = np.zeros((grid, grid, num_classes))
    for e in entities:
        b = e.box
        ox = np.clip(np.minimum(hi, b.x2) - np.maximum(lo, b.x1), 0, None) / cell
        oy = np.clip(np.minimum(hi, b.y2) - np.maximum(lo, b.y1), 0, None) / cell
        out[:, :, e.cls] += np.outer(oy, ox)
    return np.clip(out, 0.0, 1.0).reshape(grid * grid, num_classes)


def _box(cx: float, cy: float, hw: float, hh: float) -> BoundingBox:
    return BoundingBox(cx - hw, cy - hh, cx + hw, cy + hh)


def _inside(cx, cy, hw, hh) -> bool:
    return cx - hw >= 0.0 and cy - hh >= 0.0 and cx + hw <= 1.0 and cy + hh <= 1.0


def _perturb_box(box: BoundingBox, rng: np.random.Generator, apply: bool) -> BoundingBox:
    jitter = rng.normal(0.0, 0.05, size=4)
    if not apply:
        return box
    c = np.clip(np.asarray(box.as_tuple()) + jitter, 0.0, 1.0)
    return BoundingBox(min(c[0], c[2]), min(c[1], c[3]), max(c[0], c[2]), max(c[1], c[3]))


def make_cues(ann: FrameAnnotation, vocab: Vocabulary, noise: float, rng: np.random.Generator) -> FrameCues:
    """Ground-truth cues with fields corrupted independently at rate ``noise``.

    Every random draw is made whether or not it is applied, so the noise rate
    never shifts the stream.
    """
    names = vocab.predicate_names
    cues = []
    for rel in ann.relations:
        sub, obj = ann.entities[rel.subject], ann.entities[rel.object]
        flips = rng.random(3) < noise
        alt_obj = int(rng.integers(1, vocab.num_objects - 1)) if vocab.num_objects > 2 else obj.cls
        alt_pred = int(rng.integers(0, vocab.num_predicates - 1))
        obj_cls = obj.cls
        if flips[0] and vocab.num_objects > 2:
            obj_cls = alt_obj if alt_obj < obj.cls else alt_obj + 1
        preds = rel.all_predicates()
        if flips[1]:
            swapped = alt_pred if alt_pred < preds[0] else alt_pred + 1
            preds = [swapped] + preds[1:]
        sbox = _perturb_box(sub.box, rng, bool(flips[2]))
        obox = _perturb_box(obj.box, rng, bool(flips[2]))
        conf = float(rng.uniform(0.5, 1.0))
        cues.append(Cue(vocab.objects[sub.cls], vocab.objects[obj_cls], tuple(names[p] for p in preds),
                        sbox, obox, round(conf, 6)))
    order = sorted(range(len(cues)), key=lambda i: -cues[i].confidence)
    return FrameCues(ann.video, ann.frame, tuple(cues[i] for i in order))


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    vocab = cfg.vocabulary()
    scene_ss, cue_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(scene_ss)
    cue_rng = np.random.default_rng(cue_ss)
    zipf = zipf_probs(vocab.num_predicates, cfg.zipf_exponent)

    annotations: list[FrameAnnotation] = []
    features: list[np.ndarray] = []
    video = 0
    while len(annotations) < cfg.frames:
        n_frames = min(cfg.frames_per_video, cfg.frames - len(annotations))
        n_obj = int(rng.integers(1, 4))
        classes = [int(c) for c in rng.integers(1, vocab.num_objects, size=n_obj)]
        preds = [int(p) for p in rng.choice(vocab.num_predicates, size=n_obj, p=zipf)]
        layouts = [predicate_layout(p, vocab.num_predicates) for p in preds]
        shw, shh = rng.uniform(0.07, 0.12, size=2)
        for _ in range(MAX_PLACEMENT_TRIES):
            c0 = rng.uniform(0.2, 0.8, size=2)
            vel = rng.uniform(-0.015, 0.015, size=2)
            jit = rng.normal(0.0, 0.004, size=(n_frames, n_obj, 2))
            ok = True
            for t in range(n_frames):
                cx, cy = c0 + vel * t
                ok &= _inside(cx, cy, shw, shh)
                for j, (dx, dy, half) in enumerate(layouts):
                    ok &= _inside(cx + dx + jit[t, j, 0], cy + dy + jit[t, j, 1], half, half)
            if ok:
                break
        else:
            raise GenerationError(f"could not place video {video} within {MAX_PLACEMENT_TRIES} tries")
        for t in range(n_frames):
            cx, cy = c0 + vel * t
            ents = [Entity(0, _box(cx, cy, shw, shh))]
            rels = []
            for j, (dx, dy, half) in enumerate(layouts):
                ents.append(Entity(classes[j], _box(cx + dx + jit[t, j, 0], cy + dy + jit[t, j, 1], half, half)))
                g = vocab.group_of(preds[j])
                grouped = [(), (), ()]
                grouped[g] = (preds[j],)
                rels.append(Relation(0, j + 1, tuple(grouped)))  # type: ignore[arg-type]
            ann = FrameAnnotation(f"v{video:04d}", t, tuple(ents), tuple(rels))
            annotations.append(ann)
            features.append(render_grid(ents, vocab.num_objects, cfg.grid_size))
        video += 1

    cues = [make_cues(a, vocab, cfg.cue_noise, cue_rng) for a in annotations]
    L = cfg.grid_size ** 2
    feats = np.stack(features) if features else np.zeros((0, L, vocab.num_objects))
    return Dataset(vocab, feats, annotations, cues, cfg.grid_size, meta={"seed": cfg.seed})
