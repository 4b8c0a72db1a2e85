from __future__ import annotations

from dataclasses import dataclass

GROUPS = ("attention", "spatial", "contacting")

_DESK_OBJECTS = ["person", "cup", "book", "phone", "chair", "laptop", "pillow", "towel", "box", "door"]
_DESK_PREDICATES = {
    "attention": ["looking_at", "not_looking_at", "unsure"],
    "spatial": ["in_front_of", "behind", "beside", "above", "beneath", "in"],
    "contacting": ["holding", "touching", "sitting_on", "wiping", "twisting", "carrying", "leaning_on"],
}

AG_OBJECTS = [
    "person", "bag", "bed", "blanket", "book", "box", "broom", "chair", "closet/cabinet", "clothes",
    "cup/glass/bottle", "dish", "door", "doorknob", "doorway", "floor", "food", "groceries", "laptop",
    "light", "medicine", "mirror", "paper/notebook", "phone/camera", "picture", "pillow", "refrigerator",
    "sandwich", "shelf", "shoe", "sofa/couch", "table", "television", "towel", "vacuum", "window",
]
AG_PREDICATES = {
    "attention": ["looking_at", "not_looking_at", "unsure"],
    "spatial": ["above", "beneath", "in_front_of", "behind", "on_the_side_of", "in"],
    "contacting": [
        "carrying", "covered_by", "drinking_from", "eating", "have_it_on_the_back", "holding",
        "leaning_on", "lying_on", "not_contacting", "sitting_on", "standing_on", "touching",
        "twisting", "wearing", "wiping", "writing_on",
    ],
}


class VocabularyError(KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "vocabulary error"


@dataclass(frozen=True)
class Vocabulary:
    objects: tuple[str, ...]
    predicates: tuple[tuple[str, ...], tuple[str, ...], tuple[str, ...]]

    def __post_init__(self):
        if len(self.predicates) != len(GROUPS):
            raise ValueError("predicate vocabulary must have exactly 3 groups")
        names = [p for g in self.predicates for p in g]
        if len(set(names)) != len(names) or len(set(self.objects)) != len(self.objects):
            raise ValueError("vocabulary names must be unique")

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    @property
    def group_sizes(self) -> tuple[int, int, int]:
        return tuple(len(g) for g in self.predicates)  # type: ignore[return-value]

    @property
    def num_predicates(self) -> int:
        return sum(self.group_sizes)

    @property
    def predicate_names(self) -> list[str]:
        return [p for g in self.predicates for p in g]

    def group_offsets(self) -> list[int]:
        sizes = self.group_sizes
        return [0, sizes[0], sizes[0] + sizes[1]]

    def object_id(self, name: str) -> int:
        try:
            return self.objects.index(name)
        except ValueError:
            raise VocabularyError(f"unknown object label {name!r}") from None

    def predicate_id(self, name: str) -> int:
        try:
            return self.predicate_names.index(name)
        except ValueError:
            raise VocabularyError(f"unknown predicate label {name!r}") from None

    def group_of(self, pid: int) -> int:
        off = self.group_offsets()
        if not 0 <= pid < self.num_predicates:
            raise VocabularyError(f"predicate id {pid} out of range")
        return 2 if pid >= off[2] else (1 if pid >= off[1] else 0)

    def to_dict(self) -> dict:
        return {"objects": list(self.objects), **{g: list(p) for g, p in zip(GROUPS, self.predicates)}}

    @classmethod
    def from_dict(cls, d: dict) -> Vocabulary:
        return cls(tuple(d["objects"]), tuple(tuple(d[g]) for g in GROUPS))  # type: ignore[arg-type]


def _names(pool: list[str], n: int, prefix: str) -> tuple[str, ...]:
    return tuple(pool[i] if i < len(pool) else f"{prefix}_{i}" for i in range(n))


def desk_vocabulary(num_objects: int = 6, group_sizes: tuple[int, int, int] = (3, 4, 5)) -> Vocabulary:
    if num_objects < 2:
        raise ValueError("need at least a subject class and one object class")
    preds = tuple(_names(_DESK_PREDICATES[g], n, g) for g, n in zip(GROUPS, group_sizes))
    return Vocabulary(_names(_DESK_OBJECTS, num_objects, "object"), preds)  # type: ignore[arg-type]


def action_genome_vocabulary() -> Vocabulary:
    return Vocabulary(tuple(AG_OBJECTS), tuple(tuple(AG_PREDICATES[g]) for g in GROUPS))  # type: ignore[arg-type]
