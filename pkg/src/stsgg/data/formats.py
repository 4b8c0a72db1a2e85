"""Line-delimited JSON files, one frame per record.

Annotation record::

    {"video": "v0000", "frame": 0,
     "entities": [{"label": "person", "box": [x1, y1, x2, y2]}, ...],
     "relations": [{"subject": 0, "object": 1,
                    "attention": [...], "spatial": [...], "contacting": [...]}]}

Cue record::

    {"video": "v0000", "frame": 0, "frame_size": [w, h] | null,
     "box_units": "normalized" | "pixel",
     "cues": [{"subject": "person", "object": "cup", "predicates": ["holding"],
               "subject_box": [...], "object_box": [...], "confidence": 0.9}]}

Pixel-unit cue boxes are divided by ``frame_size`` on load; files are always
written normalized.
"""
from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterable

import numpy as np

from ..geometry import BoundingBox
from .records import Cue, Dataset, Entity, FrameAnnotation, FrameCues, Relation
from .vocab import GROUPS, Vocabulary, VocabularyError


class ParseError(ValueError):
    pass


def _dump_line(rec: dict) -> str:
    return json.dumps(rec, separators=(", ", ": "), ensure_ascii=False)


def _write_lines(path: str | os.PathLike, lines: Iterable[str]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")
    os.replace(tmp, path)


def _read_records(path: str | os.PathLike):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(f"{path}:{lineno}: record must be an object")
            yield lineno, rec


def _box(value, where: str, scale: tuple[float, float] | None = None) -> BoundingBox:
    if not (isinstance(value, list) and len(value) == 4 and all(isinstance(v, (int, float)) for v in value)):
        raise ParseError(f"{where}: box must be a list of 4 numbers")
    v = [float(x) for x in value]
    if scale is not None:
        v = [v[0] / scale[0], v[1] / scale[1], v[2] / scale[0], v[3] / scale[1]]
    try:
        return BoundingBox(*v)
    except ValueError as exc:
        raise ParseError(f"{where}: {exc}") from None


def _field(rec: dict, key: str, types, where: str):
    if key not in rec:
        raise ParseError(f"{where}: missing field {key!r}")
    value = rec[key]
    if not isinstance(value, types) or isinstance(value, bool):
        raise ParseError(f"{where}: field {key!r} has wrong type")
    return value


# ---------------------------------------------------------------- annotations

def annotation_to_record(ann: FrameAnnotation, vocab: Vocabulary) -> dict:
    names = vocab.predicate_names
    return {
        "video": ann.video,
        "frame": ann.frame,
        "entities": [{"label": vocab.objects[e.cls], "box": list(e.box.as_tuple())} for e in ann.entities],
        "relations": [
            {"subject": r.subject, "object": r.object,
             **{g: [names[p] for p in ids] for g, ids in zip(GROUPS, r.predicates)}}
            for r in ann.relations
        ],
    }


def record_to_annotation(rec: dict, vocab: Vocabulary, where: str) -> FrameAnnotation:
    video = _field(rec, "video", str, where)
    frame = _field(rec, "frame", int, where)
    entities = []
    for j, e in enumerate(_field(rec, "entities", list, where)):
        w = f"{where}: entities[{j}]"
        if not isinstance(e, dict):
            raise ParseError(f"{w}: must be an object")
        try:
            cls = vocab.object_id(_field(e, "label", str, w))
        except VocabularyError as exc:
            raise VocabularyError(f"{w}: {exc}") from None
        entities.append(Entity(cls, _box(e.get("box"), w)))
    relations = []
    for j, r in enumerate(_field(rec, "relations", list, where)):
        w = f"{where}: relations[{j}]"
        if not isinstance(r, dict):
            raise ParseError(f"{w}: must be an object")
        grouped = []
        for g, group in enumerate(GROUPS):
            ids = []
            for name in r.get(group, []):
                try:
                    pid = vocab.predicate_id(name)
                except VocabularyError as exc:
                    raise VocabularyError(f"{w}: {exc}") from None
                if vocab.group_of(pid) != g:
                    raise VocabularyError(f"{w}: predicate {name!r} listed under {group!r}")
                ids.append(pid)
            grouped.append(tuple(ids))
        relations.append(Relation(_field(r, "subject", int, w), _field(r, "object", int, w), tuple(grouped)))  # type: ignore[arg-type]
    ann = FrameAnnotation(video, frame, tuple(entities), tuple(relations))
    try:
        ann.validate(vocab)
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{where}: {exc}") from None
    return ann


def save_annotations(path, annotations: Iterable[FrameAnnotation], vocab: Vocabulary) -> None:
    _write_lines(path, (_dump_line(annotation_to_record(a, vocab)) for a in annotations))


def load_annotations(path, vocab: Vocabulary) -> list[FrameAnnotation]:
    return [record_to_annotation(rec, vocab, f"{path}:{lineno}") for lineno, rec in _read_records(path)]


# ---------------------------------------------------------------- cues

def cues_to_record(fc: FrameCues) -> dict:
    return {
        "video": fc.video,
        "frame": fc.frame,
        "frame_size": list(fc.frame_size) if fc.frame_size else None,
        "box_units": "normalized",
        "cues": [
            {"subject": c.subject, "object": c.object, "predicates": list(c.predicates),
             "subject_box": list(c.subject_box.as_tuple()), "object_box": list(c.object_box.as_tuple()),
             "confidence": c.confidence}
            for c in fc.cues
        ],
    }


def record_to_cues(rec: dict, where: str, vocab: Vocabulary | None = None) -> FrameCues:
    video = _field(rec, "video", str, where)
    frame = _field(rec, "frame", int, where)
    size = rec.get("frame_size")
    if size is not None:
        if not (isinstance(size, list) and len(size) == 2 and all(isinstance(v, (int, float)) and v > 0 for v in size)):
            raise ParseError(f"{where}: frame_size must be [width, height]")
        size = (size[0], size[1])
    units = rec.get("box_units", "normalized")
    if units not in ("normalized", "pixel"):
        raise ParseError(f"{where}: box_units must be 'normalized' or 'pixel'")
    if units == "pixel" and size is None:
        raise ParseError(f"{where}: pixel boxes need frame_size")
    scale = (float(size[0]), float(size[1])) if units == "pixel" else None
    cues = []
    for j, c in enumerate(_field(rec, "cues", list, where)):
        w = f"{where}: cues[{j}]"
        if not isinstance(c, dict):
            raise ParseError(f"{w}: must be an object")
        preds = _field(c, "predicates", list, w)
        if not preds or not all(isinstance(p, str) and p for p in preds):
            raise ParseError(f"{w}: predicates must be a nonempty list of labels")
        conf = float(_field(c, "confidence", (int, float), w)) if "confidence" in c else 1.0
        if not 0.0 <= conf <= 1.0:
            raise ParseError(f"{w}: confidence must lie in [0, 1]")
        cue = Cue(_field(c, "subject", str, w), _field(c, "object", str, w), tuple(preds),
                  _box(c.get("subject_box"), w, scale), _box(c.get("object_box"), w, scale), conf)
        if vocab is not None and not cue.in_vocabulary(vocab):
            raise VocabularyError(f"{w}: cue label outside the vocabulary")
        cues.append(cue)
    return FrameCues(video, frame, tuple(cues), size)


def save_cues(path, frames: Iterable[FrameCues]) -> None:
    _write_lines(path, (_dump_line(cues_to_record(fc)) for fc in frames))


def load_cues(path, vocab: Vocabulary | None = None) -> list[FrameCues]:
    """Parse a cue file; with ``vocab`` given, out-of-vocabulary labels raise."""
    return [record_to_cues(rec, f"{path}:{lineno}", vocab) for lineno, rec in _read_records(path)]


# ---------------------------------------------------------------- frame features

def save_features(path, features: np.ndarray) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.save(fh, np.ascontiguousarray(features, dtype="<f8"), allow_pickle=False)
    os.replace(tmp, path)


def load_features(path) -> np.ndarray:
    return np.load(path, allow_pickle=False).astype(np.float64)


# ---------------------------------------------------------------- dataset directories

ANNOTATIONS_FILE = "annotations.jsonl"
CUES_FILE = "cues.jsonl"
FEATURES_FILE = "frames.npy"
INFO_FILE = "dataset.json"


def save_dataset(directory, ds: Dataset) -> list[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    info = {"vocabulary": ds.vocab.to_dict(), "grid_size": ds.grid_size, "meta": ds.meta}
    _write_lines(d / INFO_FILE, [json.dumps(info, indent=2, sort_keys=True)])
    save_annotations(d / ANNOTATIONS_FILE, ds.annotations, ds.vocab)
    save_cues(d / CUES_FILE, ds.cues)
    save_features(d / FEATURES_FILE, ds.features)
    return [d / INFO_FILE, d / ANNOTATIONS_FILE, d / CUES_FILE, d / FEATURES_FILE]


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    try:
        info = json.loads((d / INFO_FILE).read_text(encoding="utf-8"))
        vocab = Vocabulary.from_dict(info["vocabulary"])
        grid = int(info["grid_size"])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{d / INFO_FILE}: malformed ({exc.msg})") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{d / INFO_FILE}: bad dataset description ({exc})") from None
    anns = load_annotations(d / ANNOTATIONS_FILE, vocab)
    cues = load_cues(d / CUES_FILE, vocab)
    feats = load_features(d / FEATURES_FILE)
    if feats.ndim != 3 or feats.shape[0] != len(anns) or feats.shape[1] != grid * grid:
        raise ParseError(f"{d / FEATURES_FILE}: shape {feats.shape} does not fit {len(anns)} frames of {grid}x{grid}")
    if [(c.video, c.frame) for c in cues] != [(a.video, a.frame) for a in anns]:
        raise ParseError(f"{d / CUES_FILE}: frames do not line up with {ANNOTATIONS_FILE}")
    return Dataset(vocab, feats, anns, cues, grid, meta=info.get("meta", {}))
