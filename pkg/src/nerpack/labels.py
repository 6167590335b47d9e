"""Composite IOB2 label coding for nested annotation sets.

Each annotation is rendered independently as IOB2 on its own layer and the
active layer labels of a token are joined with ``#`` into one word-level
label, e.g. ``I-ORG#B-PER`` for a word that begins a person name inside an
organization name.

Assumptions this module fixes (the underlying scheme leaves them open):

* Canonical ordering inside a composite label: annotations sort by
  (span length descending, start ascending, category ascending), i.e.
  outermost first, and keep that layer for their whole span.
* Decoding aligns the parts of adjacent labels by position, padding
  missing positions with ``O``, and repairs inconsistent sequences
  (``I-X`` after ``O`` or after a different category opens a new span).

Round-trip exactness ``decode(encode(A)) == A`` is guaranteed for properly
nested annotation sets (any two spans disjoint or contained, which covers
layered corpora); partially overlapping spans still encode
deterministically but may split on decode.
"""

from __future__ import annotations

from typing import Iterable, Sequence

from .corpus import Annotation, Dataset, iob_tags_to_spans

__all__ = [
    "LabelDepthError",
    "LabelVocabulary",
    "O_LABEL",
    "SEPARATOR",
    "assign_layers",
    "build_vocabulary",
    "canonical_order",
    "decode_labels",
    "encode_sentence",
]

O_LABEL = "O"
SEPARATOR = "#"
DEFAULT_MAX_DEPTH = 4


class LabelDepthError(ValueError):
    pass


def canonical_order(annotations: Iterable[Annotation]) -> list[Annotation]:
    """Outermost first: span length descending, then start, then category."""
    return sorted(annotations, key=lambda a: (a.start - a.end, a.start, a.category))


def assign_layers(
    annotations: Iterable[Annotation],
    max_depth: int | None = None,
) -> list[list[Annotation]]:
    """Place each annotation on the lowest layer where it overlaps nothing.

    Annotations are processed in canonical order, so containing spans land
    below contained ones.
    """
    layers: list[list[Annotation]] = []
    for ann in canonical_order(annotations):
        placed = False
        for layer in layers:
            if all(ann.end <= other.start or other.end <= ann.start for other in layer):
                layer.append(ann)
                placed = True
                break
        if not placed:
            if max_depth is not None and len(layers) >= max_depth:
                raise LabelDepthError(
                    f"nesting depth exceeds {max_depth} at token {ann.start} "
                    f"(annotation {ann.category} [{ann.start}, {ann.end}))"
                )
            layers.append([ann])
    return layers


def encode_sentence(
    annotations: Iterable[Annotation],
    sentence_length: int,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[str]:
    """Encode annotations into one composite label per token."""
    anns = list(annotations)
    for ann in anns:
        if ann.end > sentence_length:
            raise ValueError(f"annotation {ann} exceeds sentence length {sentence_length}")
    layers = assign_layers(anns, max_depth)
    # per layer, map token -> covering annotation (layers are overlap-free)
    covering: list[list[Annotation | None]] = []
    for layer in layers:
        row: list[Annotation | None] = [None] * sentence_length
        for ann in layer:
            for t in range(ann.start, ann.end):
                row[t] = ann
        covering.append(row)
    out: list[str] = []
    for t in range(sentence_length):
        parts = []
        for row in covering:
            ann = row[t]
            if ann is not None:
                parts.append(("B-" if t == ann.start else "I-") + ann.category)
        out.append(SEPARATOR.join(parts) if parts else O_LABEL)
    return out


def _split_parts(label: str) -> list[str]:
    if label == O_LABEL or not label:
        return []
    return label.split(SEPARATOR)


def decode_labels(labels: Sequence[str]) -> set[Annotation]:
    """Decode composite labels back into an annotation set.

    Total on arbitrary input: every layer position is decoded independently
    with the tolerant IOB2 reader, and unrecognizable atoms count as ``O``.
    """
    parts = [_split_parts(lab) for lab in labels]
    arity = max((len(p) for p in parts), default=0)
    spans: set[Annotation] = set()
    for k in range(arity):
        column = [p[k] if k < len(p) else O_LABEL for p in parts]
        spans.update(iob_tags_to_spans(column))
    return spans


class LabelVocabulary:
    """Dense label -> id map over composite labels, always containing O."""

    def __init__(self, labels: Iterable[str]):
        self.labels = tuple(labels)
        self._ids: dict[str, int] = {}
        for i, lab in enumerate(self.labels):
            if not lab:
                raise ValueError(f"empty label at id {i}")
            if lab in self._ids:
                raise ValueError(f"duplicate label {lab!r}")
            self._ids[lab] = i
        if O_LABEL not in self._ids:
            raise ValueError("label vocabulary must contain O")
        self.outside_id = self._ids[O_LABEL]

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def index(self, label: str) -> int:
        return self._ids[label]

    def index_or_outside(self, label: str) -> int:
        """Lookup with O fallback, for packing data with unseen composites."""
        return self._ids.get(label, self.outside_id)

    def label(self, idx: int) -> str:
        return self.labels[idx]

    def to_text(self) -> str:
        return "\n".join(self.labels)

    @classmethod
    def from_text(cls, text: str | bytes) -> "LabelVocabulary":
        if isinstance(text, bytes):
            text = text.decode("utf-8")
        return cls(text.splitlines())


def build_vocabulary(dataset: Dataset, max_depth: int = DEFAULT_MAX_DEPTH) -> LabelVocabulary:
    """Collect every composite label occurring in the encoded dataset."""
    seen = {O_LABEL}
    for _, sent in dataset.sentences():
        seen.update(encode_sentence(sent.annotations, len(sent), max_depth))
    return LabelVocabulary(sorted(seen))
