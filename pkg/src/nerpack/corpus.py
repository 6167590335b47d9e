"""Document model and parsers for column-formatted NER corpora.

Supported formats:

* CoNLL 2003 column text: whitespace-separated columns, last column holds
  the IOB/IOB2 tag, ``-DOCSTART-`` rows delimit documents, blank lines
  delimit sentences.  IOB1 input is normalized to IOB2 spans.
* Nested TSV: tab-separated, column 0 is the token, columns 1..n are
  independent IOB2 layers, ``#`` comment lines delimit documents and carry
  their ids.
* Canonical JSONL: one JSON object per document per line.

Conventions: annotation spans are half-open token ranges scoped to their
sentence.  Sentence segmentation always comes from the input file.  Files
without document markers yield one document per file.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "Annotation",
    "CorpusStats",
    "Dataset",
    "Document",
    "ParseError",
    "Sentence",
    "Token",
    "corpus_stats",
    "from_jsonl",
    "iob_tags_to_spans",
    "merge_datasets",
    "parse_conll2003",
    "parse_nested_tsv",
    "sentence_from_words",
    "split_dataset",
    "to_conll2003",
    "to_jsonl",
    "to_nested_tsv",
]


class ParseError(ValueError):
    """Malformed corpus input.  Carries the 1-based source line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Token:
    text: str
    word_index: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        if self.word_index < 0:
            raise ValueError("word_index must be non-negative")


@dataclass(frozen=True)
class Annotation:
    """A categorized span over ``[start, end)`` token positions."""

    category: str
    start: int
    end: int

    def __post_init__(self):
        if not self.category:
            raise ValueError("annotation category must be non-empty")
        if not 0 <= self.start < self.end:
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    @property
    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Sentence:
    """Tokens plus annotations; annotations are stored in (start, end,
    category) order and duplicates are rejected."""

    tokens: tuple[Token, ...]
    sent_index: int
    annotations: tuple[Annotation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        anns = tuple(sorted(self.annotations, key=lambda a: (a.start, a.end, a.category)))
        object.__setattr__(self, "annotations", anns)
        for pos, tok in enumerate(self.tokens):
            if tok.word_index != pos:
                raise ValueError(f"token at position {pos} has word_index {tok.word_index}")
        n = len(self.tokens)
        seen = set()
        for ann in anns:
            if ann.end > n:
                raise ValueError(f"annotation {ann} exceeds sentence length {n}")
            key = (ann.category, ann.start, ann.end)
            if key in seen:
                raise ValueError(f"duplicate annotation {ann}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tokens)


def sentence_from_words(
    words: Sequence[str],
    annotations: Iterable[Annotation] = (),
    sent_index: int = 0,
) -> Sentence:
    tokens = tuple(Token(w, i) for i, w in enumerate(words))
    return Sentence(tokens, sent_index, tuple(annotations))


@dataclass(frozen=True)
class Document:
    doc_id: str
    sentences: tuple[Sentence, ...]

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        for pos, sent in enumerate(self.sentences):
            if sent.sent_index != pos:
                raise ValueError(f"sentence at position {pos} has sent_index {sent.sent_index}")


@dataclass(frozen=True)
class Dataset:
    documents: tuple[Document, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        seen = set()
        for doc in self.documents:
            if doc.doc_id in seen:
                raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)

    @property
    def categories(self) -> tuple[str, ...]:
        cats = {a.category for d in self.documents for s in d.sentences for a in s.annotations}
        return tuple(sorted(cats))

    def sentences(self):
        for doc in self.documents:
            for sent in doc.sentences:
                yield doc, sent


@dataclass(frozen=True)
class CorpusStats:
    sentence_count: int
    token_count: int
    annotation_count: int
    category_count: int


def corpus_stats(dataset: Dataset) -> CorpusStats:
    sentences = tokens = annotations = 0
    for doc in dataset.documents:
        sentences += len(doc.sentences)
        for sent in doc.sentences:
            tokens += len(sent.tokens)
            annotations += len(sent.annotations)
    return CorpusStats(sentences, tokens, annotations, len(dataset.categories))


# ---------------------------------------------------------------------------
# IOB tag handling

def _check_iob_tag(tag: str, line: int) -> None:
    if tag == "O":
        return
    if len(tag) > 2 and tag[0] in "BI" and tag[1] == "-":
        return
    raise ParseError(f"malformed IOB tag {tag!r}", line)


def iob_tags_to_spans(tags: Sequence[str]) -> list[Annotation]:
    """Convert one IOB/IOB2 tag sequence to spans.

    Tolerant reading: ``B-`` always opens a span; ``I-`` continues a
    same-category span and otherwise opens one.  This normalizes IOB1 input
    and repairs inconsistent model output in a single rule.
    """
    spans: list[Annotation] = []
    open_cat: str | None = None
    open_start = 0
    for i, tag in enumerate(tags):
        if tag == "O" or len(tag) < 3 or tag[1] != "-" or tag[0] not in "BI":
            if open_cat is not None:
                spans.append(Annotation(open_cat, open_start, i))
                open_cat = None
            continue
        category = tag[2:]
        if tag[0] == "B" or category != open_cat:
            if open_cat is not None:
                spans.append(Annotation(open_cat, open_start, i))
            open_cat, open_start = category, i
    if open_cat is not None:
        spans.append(Annotation(open_cat, open_start, len(tags)))
    return spans


def _spans_to_iob2(spans: Iterable[Annotation], length: int) -> list[str]:
    """Render non-overlapping spans as one IOB2 tag column."""
    tags = ["O"] * length
    for ann in sorted(spans, key=lambda a: a.start):
        for t in range(ann.start, ann.end):
            if tags[t] != "O":
                raise ValueError(f"overlapping spans at token {t}")
            tags[t] = ("B-" if t == ann.start else "I-") + ann.category
    return tags


# ---------------------------------------------------------------------------
# CoNLL 2003

_DOCSTART = "-DOCSTART-"


def parse_conll2003(text: str | bytes) -> Dataset:
    """Parse CoNLL 2003 column text into a Dataset.

    One document per ``-DOCSTART-`` block (or per file when absent); the
    last whitespace column is read as the IOB/IOB1/IOB2 tag.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    documents: list[Document] = []
    sentences: list[Sentence] = []
    words: list[str] = []
    tags: list[str] = []

    def flush_sentence():
        nonlocal words, tags
        if words:
            anns = iob_tags_to_spans(tags)
            sentences.append(sentence_from_words(words, anns, len(sentences)))
            words, tags = [], []

    def flush_document():
        nonlocal sentences
        flush_sentence()
        if sentences:
            documents.append(Document(f"d{len(documents):04d}", tuple(sentences)))
            sentences = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            flush_sentence()
            continue
        fields = line.split()
        if fields[0] == _DOCSTART:
            flush_document()
            continue
        if len(fields) < 2:
            raise ParseError("expected at least token and tag columns", lineno)
        _check_iob_tag(fields[-1], lineno)
        words.append(fields[0])
        tags.append(fields[-1])
    flush_document()
    return Dataset(tuple(documents))


def to_conll2003(dataset: Dataset) -> str:
    """Render a flat dataset as two-column IOB2 text.

    Document ids are not representable in this format; they regenerate
    positionally on re-parse.  Overlapping annotations are rejected.
    """
    lines: list[str] = []
    for doc in dataset.documents:
        lines.append(f"{_DOCSTART} O")
        lines.append("")
        for sent in doc.sentences:
            tags = _spans_to_iob2(sent.annotations, len(sent))
            for tok, tag in zip(sent.tokens, tags):
                lines.append(f"{tok.text} {tag}")
            lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Nested TSV

def parse_nested_tsv(text: str | bytes, n_layers: int) -> Dataset:
    """Parse token + n IOB2 layer columns; ``#`` comments delimit documents.

    Each layer is decoded independently and the per-layer spans are merged
    per sentence (identical (category, start, end) triples collapse).
    """
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    documents: list[Document] = []
    sentences: list[Sentence] = []
    words: list[str] = []
    layer_tags: list[list[str]] = [[] for _ in range(n_layers)]
    pending_id: str | None = None
    used_ids: set[str] = set()

    def flush_sentence():
        nonlocal words, layer_tags
        if words:
            spans: list[Annotation] = []
            seen = set()
            for col in layer_tags:
                for ann in iob_tags_to_spans(col):
                    key = (ann.category, ann.start, ann.end)
                    if key not in seen:
                        seen.add(key)
                        spans.append(ann)
            sentences.append(sentence_from_words(words, spans, len(sentences)))
            words, layer_tags = [], [[] for _ in range(n_layers)]

    def flush_document():
        nonlocal sentences, pending_id
        flush_sentence()
        if sentences:
            doc_id = pending_id or f"d{len(documents):04d}"
            if doc_id in used_ids:
                k = 2
                while f"{doc_id}~{k}" in used_ids:
                    k += 1
                doc_id = f"{doc_id}~{k}"
            used_ids.add(doc_id)
            documents.append(Document(doc_id, tuple(sentences)))
            sentences = []
            pending_id = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.startswith("#"):
            if sentences or words:
                flush_document()
            comment = raw.lstrip("#").strip()
            if pending_id is None and comment:
                pending_id = comment
            continue
        if not raw.strip():
            flush_sentence()
            continue
        fields = raw.rstrip("\n").split("\t")
        if len(fields) != 1 + n_layers:
            raise ParseError(
                f"expected {1 + n_layers} columns, found {len(fields)}", lineno
            )
        if not fields[0]:
            raise ParseError("empty token column", lineno)
        for tag in fields[1:]:
            _check_iob_tag(tag, lineno)
        words.append(fields[0])
        for k in range(n_layers):
            layer_tags[k].append(fields[1 + k])
    flush_document()
    return Dataset(tuple(documents))


def to_nested_tsv(dataset: Dataset, n_layers: int | None = None) -> str:
    """Render a dataset as nested TSV; layers are assigned canonically."""
    from .labels import assign_layers  # labels depends on this module

    per_sentence: list[tuple[Document, Sentence, list[list[Annotation]]]] = []
    needed = 1
    for doc, sent in dataset.sentences():
        layers = assign_layers(sent.annotations)
        needed = max(needed, len(layers))
        per_sentence.append((doc, sent, layers))
    width = needed if n_layers is None else n_layers
    if needed > width:
        raise ValueError(f"dataset needs {needed} layers, only {width} requested")

    lines: list[str] = []
    current_doc = None
    for doc, sent, layers in per_sentence:
        if doc is not current_doc:
            lines.append(f"# {doc.doc_id}")
            current_doc = doc
        cols = [_spans_to_iob2(layer, len(sent)) for layer in layers]
        cols += [["O"] * len(sent) for _ in range(width - len(cols))]
        for t, tok in enumerate(sent.tokens):
            lines.append("\t".join([tok.text] + [col[t] for col in cols]))
        lines.append("")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Canonical JSONL

def to_jsonl(dataset: Dataset) -> str:
    lines = []
    for doc in dataset.documents:
        obj = {
            "doc_id": doc.doc_id,
            "sentences": [
                {
                    "tokens": [t.text for t in s.tokens],
                    "annotations": [
                        {"category": a.category, "start": a.start, "end": a.end}
                        for a in s.annotations
                    ],
                }
                for s in doc.sentences
            ],
        }
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    return "\n".join(lines)


def from_jsonl(text: str | bytes) -> Dataset:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    documents = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
            sentences = [
                sentence_from_words(
                    s["tokens"],
                    [Annotation(a["category"], a["start"], a["end"]) for a in s["annotations"]],
                    i,
                )
                for i, s in enumerate(obj["sentences"])
            ]
            documents.append(Document(obj["doc_id"], tuple(sentences)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad document record: {exc}", lineno) from exc
    return Dataset(tuple(documents))


# ---------------------------------------------------------------------------
# Dataset manipulation

def merge_datasets(datasets: Sequence[Dataset], prefixes: Sequence[str] | None = None) -> Dataset:
    """Concatenate datasets, prefixing doc ids to keep them unique."""
    if prefixes is not None and len(prefixes) != len(datasets):
        raise ValueError("one prefix per dataset required")
    docs = []
    for i, ds in enumerate(datasets):
        prefix = prefixes[i] if prefixes is not None else f"p{i}"
        for doc in ds.documents:
            docs.append(Document(f"{prefix}:{doc.doc_id}", doc.sentences))
    return Dataset(tuple(docs))


def split_dataset(dataset: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Partition documents into (train, tune) parts.

    The train part holds floor(train_fraction * N) whole documents.  The
    seed-shuffled order is cut once and the larger side is always the
    permutation prefix, so same-seed splits with fractions f and 1 - f are
    exact complements of each other whenever the rounded sizes add up to N.
    Document order within each part follows the original dataset.
    """
    n = len(dataset.documents)
    if n < 2:
        raise ValueError("need at least 2 documents to split")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    k = int(train_fraction * n)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    cut = max(k, n - k)
    prefix, suffix = order[:cut], order[cut:]
    train_idx, tune_idx = (prefix, suffix) if k == cut else (suffix, prefix)
    train = Dataset(tuple(dataset.documents[i] for i in sorted(train_idx)))
    tune = Dataset(tuple(dataset.documents[i] for i in sorted(tune_idx)))
    return train, tune
