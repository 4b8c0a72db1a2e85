"""In-memory annotation and cue records."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import BoundingBox
from .vocab import GROUPS, Vocabulary, VocabularyError


@dataclass(frozen=True)
class Entity:
    cls: int
    box: BoundingBox


@dataclass(frozen=True)
class Relation:
    subject: int
    object: int
    # predicate ids per group, in GROUPS order
    predicates: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]

    def all_predicates(self) -> list[int]:
        return [p for g in self.predicates for p in g]


@dataclass(frozen=True)
class FrameAnnotation:
    video: str
    frame: int
    entities: tuple[Entity, ...]
    relations: tuple[Relation, ...]

    def validate(self, vocab: Vocabulary) -> None:
        n = len(self.entities)
        for e in self.entities:
            if not 0 <= e.cls < vocab.num_objects:
                raise VocabularyError(f"entity class {e.cls} out of range")
        if not self.relations:
            raise ValueError(f"{self.video}/{self.frame}: annotated frame has no relations")
        off = vocab.group_offsets()
        sizes = vocab.group_sizes
        for r in self.relations:
            if not (0 <= r.subject < n and 0 <= r.object < n):
                raise IndexError(f"{self.video}/{self.frame}: relation refers to missing entity")
            for g, ids in enumerate(r.predicates):
                for pid in ids:
                    if not off[g] <= pid < off[g] + sizes[g]:
                        raise VocabularyError(f"predicate id {pid} not valid for group {GROUPS[g]}")

    def triplets(self) -> list[tuple[int, int, int]]:
        """Flattened ``(relation index, predicate id, group)`` ground-truth triplets."""
        out = []
        for i, r in enumerate(self.relations):
            for g, ids in enumerate(r.predicates):
                for pid in ids:
                    out.append((i, pid, g))
        return out


@dataclass(frozen=True)
class Cue:
    subject: str
    object: str
    predicates: tuple[str, ...]
    subject_box: BoundingBox
    object_box: BoundingBox
    confidence: float = 1.0

    def in_vocabulary(self, vocab: Vocabulary) -> bool:
        names = set(vocab.predicate_names)
        return (self.subject in vocab.objects and self.object in vocab.objects
                and all(p in names for p in self.predicates))


@dataclass(frozen=True)
class FrameCues:
    video: str
    frame: int
    cues: tuple[Cue, ...] = ()
    frame_size: tuple[int, int] | None = None

    def truncated(self, n: int) -> FrameCues:
        """Keep the first ``n`` cues in provider (confidence) order."""
        if len(self.cues) <= n:
            return self
        return FrameCues(self.video, self.frame, self.cues[:n], self.frame_size)


@dataclass
class Dataset:
    vocab: Vocabulary
    features: np.ndarray          # frames x L x channels
    annotations: list[FrameAnnotation]
    cues: list[FrameCues]
    grid_size: int
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.annotations)

    def reference_indices(self, index: int, n_ref: int) -> list[int]:
        """Up to ``n_ref`` preceding frames of the same video, nearest first.

        At the start of a video, following frames fill the remaining slots.
        """
        ann = self.annotations[index]
        same = [i for i, a in enumerate(self.annotations) if a.video == ann.video and i != index]
        same.sort(key=lambda i: (abs(self.annotations[i].frame - ann.frame),
                                 self.annotations[i].frame > ann.frame))
        return same[:n_ref]
