"""Fixed-length window packing under the four data representation strategies.

* single: one window per sentence; oversized sentences split into
  consecutive non-overlapping chunks at subtoken granularity.
* merged: greedy first-fit, whole sentences appended in document order
  until the capacity is reached.
* context: one window per sentence (or per half-capacity chunk of an
  oversized sentence) extended left and right with neighboring material;
  context subtokens take part in attention but are classifier-masked.
* union: the concatenation of the three packings, each window keeping its
  own strategy tag.

Every window reserves position 0 for BOS and one position after the last
content subtoken for EOS, so the usable capacity is max_len - 2.  Word
labels sit on the word's first subtoken only; a word's subtokens never
straddle a chunk boundary unless the word alone exceeds the chunk limit,
in which case the labeled first subtoken stays with the first chunk.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .corpus import Document
from .labels import DEFAULT_MAX_DEPTH, LabelVocabulary, encode_sentence
from .tokenizer import SubwordVocabulary, tokenize_words

__all__ = [
    "IGNORE_LABEL",
    "STRATEGIES",
    "TRAIN_STRATEGIES",
    "INFER_STRATEGIES",
    "CoverageReport",
    "EncodedWindow",
    "PackerConfig",
    "coverage_check",
    "pack_context",
    "pack_document",
    "pack_merged",
    "pack_single",
    "pack_union",
    "strategy_config",
    "windows_from_jsonl",
    "windows_to_jsonl",
]

IGNORE_LABEL = -1

TRAIN_STRATEGIES = ("single", "merged", "context", "union")
INFER_STRATEGIES = ("single", "merged", "context")
STRATEGIES = TRAIN_STRATEGIES


@dataclass(frozen=True)
class PackerConfig:
    max_len: int = 256
    context_budget_fraction: float = 1.0
    strategy: str = "single"

    def __post_init__(self):
        if self.max_len < 8:
            raise ValueError("max_len must be at least 8")
        if not 0.0 <= self.context_budget_fraction <= 1.0:
            raise ValueError("context_budget_fraction must be in [0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @property
    def capacity(self) -> int:
        return self.max_len - 2


@dataclass
class EncodedWindow:
    """One fixed-length model input with masks, labels, and provenance."""

    subtoken_ids: np.ndarray   # (max_len,) int64, PAD-filled
    attention_mask: np.ndarray  # (max_len,) bool, true on BOS/content/EOS
    classifier_mask: np.ndarray  # (max_len,) bool, true on target first-subtokens
    label_ids: np.ndarray      # (max_len,) int64, IGNORE_LABEL off the classifier mask
    provenance: tuple[tuple[str, int, int], ...]  # (doc_id, sent_index, word_index)
    strategy_tag: str

    def __len__(self) -> int:
        return len(self.subtoken_ids)

    @property
    def content_length(self) -> int:
        return int(self.attention_mask.sum())

    def to_json_dict(self) -> dict:
        return {
            "subtoken_ids": self.subtoken_ids.tolist(),
            "attention_mask": self.attention_mask.astype(int).tolist(),
            "classifier_mask": self.classifier_mask.astype(int).tolist(),
            "label_ids": self.label_ids.tolist(),
            "provenance": [list(p) for p in self.provenance],
            "strategy_tag": self.strategy_tag,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "EncodedWindow":
        return cls(
            subtoken_ids=np.asarray(obj["subtoken_ids"], dtype=np.int64),
            attention_mask=np.asarray(obj["attention_mask"], dtype=bool),
            classifier_mask=np.asarray(obj["classifier_mask"], dtype=bool),
            label_ids=np.asarray(obj["label_ids"], dtype=np.int64),
            provenance=tuple((p[0], int(p[1]), int(p[2])) for p in obj["provenance"]),
            strategy_tag=obj["strategy_tag"],
        )


def windows_to_jsonl(windows: Iterable[EncodedWindow]) -> str:
    return "\n".join(
        json.dumps(w.to_json_dict(), sort_keys=True, separators=(",", ":")) for w in windows
    )


def windows_from_jsonl(text: str | bytes) -> list[EncodedWindow]:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return [EncodedWindow.from_json_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# Document preparation: flatten tokenized sentences into one piece stream.

@dataclass
class _DocStream:
    doc_id: str
    ids: list[int] = field(default_factory=list)
    sent: list[int] = field(default_factory=list)
    word: list[int] = field(default_factory=list)
    first: list[bool] = field(default_factory=list)
    label_id: list[int] = field(default_factory=list)  # valid at first subtokens
    sent_bounds: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.ids)


def _prepare_document(
    doc: Document,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    max_depth: int,
) -> _DocStream:
    stream = _DocStream(doc.doc_id)
    for sent in doc.sentences:
        start = len(stream)
        word_labels = encode_sentence(sent.annotations, len(sent), max_depth)
        tok = tokenize_words(vocab, sent.words)
        for pid, w_idx, is_first in zip(tok.subtoken_ids, tok.word_of_subtoken, tok.is_first_subtoken):
            stream.ids.append(pid)
            stream.sent.append(sent.sent_index)
            stream.word.append(w_idx)
            stream.first.append(is_first)
            stream.label_id.append(
                label_vocab.index_or_outside(word_labels[w_idx]) if is_first else IGNORE_LABEL
            )
        stream.sent_bounds.append((start, len(stream)))
    return stream


def _chunk_ranges(stream: _DocStream, lo: int, hi: int, limit: int) -> list[tuple[int, int]]:
    """Split stream range [lo, hi) into chunks of at most `limit` subtokens.

    Chunks break at word boundaries; a word longer than the limit is split
    mid-word with its first subtoken staying in the earlier chunk.
    """
    if hi <= lo:
        return [(lo, hi)]
    groups: list[tuple[int, int]] = []
    g_lo = lo
    for p in range(lo + 1, hi):
        if stream.first[p]:
            groups.append((g_lo, p))
            g_lo = p
    groups.append((g_lo, hi))

    ranges: list[tuple[int, int]] = []
    cur_lo, cur_hi = lo, lo
    for g_start, g_end in groups:
        g_len = g_end - g_start
        if g_len > limit:
            if cur_hi > cur_lo:
                ranges.append((cur_lo, cur_hi))
            pos = g_start
            while g_end - pos > limit:
                ranges.append((pos, pos + limit))
                pos += limit
            cur_lo, cur_hi = pos, g_end
        elif (cur_hi - cur_lo) + g_len > limit:
            ranges.append((cur_lo, cur_hi))
            cur_lo, cur_hi = g_start, g_end
        else:
            cur_hi = g_end
    if cur_hi > cur_lo or not ranges:
        ranges.append((cur_lo, cur_hi))
    return ranges


def _build_window(
    stream: _DocStream,
    spans: Sequence[tuple[int, int, bool]],
    config: PackerConfig,
    vocab: SubwordVocabulary,
    tag: str,
) -> EncodedWindow:
    """Assemble a window from (lo, hi, classifier_active) stream spans."""
    max_len = config.max_len
    ids = np.full(max_len, vocab.pad_id, dtype=np.int64)
    att = np.zeros(max_len, dtype=bool)
    cls = np.zeros(max_len, dtype=bool)
    lab = np.full(max_len, IGNORE_LABEL, dtype=np.int64)
    prov: list[tuple[str, int, int]] = []

    ids[0] = vocab.bos_id
    pos = 1
    for lo, hi, active in spans:
        for p in range(lo, hi):
            ids[pos] = stream.ids[p]
            if active and stream.first[p]:
                cls[pos] = True
                lab[pos] = stream.label_id[p]
                prov.append((stream.doc_id, stream.sent[p], stream.word[p]))
            pos += 1
    ids[pos] = vocab.eos_id
    att[: pos + 1] = True
    return EncodedWindow(ids, att, cls, lab, tuple(prov), tag)


# ---------------------------------------------------------------------------
# Strategies

def pack_single(
    doc: Document,
    config: PackerConfig,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[EncodedWindow]:
    """One window per sentence; oversized sentences split into chunks."""
    stream = _prepare_document(doc, vocab, label_vocab, max_depth)
    windows = []
    for lo, hi in stream.sent_bounds:
        for c_lo, c_hi in _chunk_ranges(stream, lo, hi, config.capacity):
            windows.append(_build_window(stream, [(c_lo, c_hi, True)], config, vocab, "single"))
    return windows


def pack_merged(
    doc: Document,
    config: PackerConfig,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[EncodedWindow]:
    """Greedy first-fit of whole sentences in document order."""
    stream = _prepare_document(doc, vocab, label_vocab, max_depth)
    capacity = config.capacity
    windows = []
    buf_lo = buf_hi = None

    def flush():
        nonlocal buf_lo, buf_hi
        if buf_lo is not None and buf_hi is not None:
            windows.append(_build_window(stream, [(buf_lo, buf_hi, True)], config, vocab, "merged"))
        buf_lo = buf_hi = None

    for lo, hi in stream.sent_bounds:
        n = hi - lo
        if n > capacity:
            # oversized sentences become standalone chunk windows
            flush()
            for c_lo, c_hi in _chunk_ranges(stream, lo, hi, capacity):
                windows.append(_build_window(stream, [(c_lo, c_hi, True)], config, vocab, "merged"))
        elif buf_lo is None:
            buf_lo, buf_hi = lo, hi
        elif (buf_hi - buf_lo) + n > capacity:
            flush()
            buf_lo, buf_hi = lo, hi
        else:
            buf_hi = hi
    flush()
    return windows


def _context_budgets(want_l: int, want_r: int, avail_l: int, avail_r: int) -> tuple[int, int]:
    """Split the context budget, letting unused budget cross to the other side."""
    take_l = min(want_l, avail_l)
    take_r = min(want_r, avail_r)
    slack = (want_l - take_l) + (want_r - take_r)
    extra_r = min(slack, avail_r - take_r)
    slack -= extra_r
    extra_l = min(slack, avail_l - take_l)
    return take_l + extra_l, take_r + extra_r


def pack_context(
    doc: Document,
    config: PackerConfig,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[EncodedWindow]:
    """One window per sentence, extended with classifier-masked context.

    Leftover capacity splits half/half into left and right budgets,
    optionally scaled down by ``context_budget_fraction``; a side without
    enough material hands its budget to the other side.  Context is taken
    at subtoken granularity and never crosses the document boundary.
    Sentences longer than the capacity are chunked at half capacity so
    every chunk still sees surrounding material.
    """
    stream = _prepare_document(doc, vocab, label_vocab, max_depth)
    capacity = config.capacity
    frac = config.context_budget_fraction
    total = len(stream)
    windows = []
    for lo, hi in stream.sent_bounds:
        if hi - lo > capacity:
            targets = _chunk_ranges(stream, lo, hi, max(1, capacity // 2))
        else:
            targets = [(lo, hi)]
        for t_lo, t_hi in targets:
            r = capacity - (t_hi - t_lo)
            want_l = int((r // 2) * frac)
            want_r = int((r - r // 2) * frac)
            take_l, take_r = _context_budgets(want_l, want_r, t_lo, total - t_hi)
            spans = []
            if take_l:
                spans.append((t_lo - take_l, t_lo, False))
            spans.append((t_lo, t_hi, True))
            if take_r:
                spans.append((t_hi, t_hi + take_r, False))
            windows.append(_build_window(stream, spans, config, vocab, "context"))
    return windows


def pack_union(
    doc: Document,
    config: PackerConfig,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[EncodedWindow]:
    """All three packings back to back: single, then merged, then context."""
    out = pack_single(doc, config, vocab, label_vocab, max_depth)
    out += pack_merged(doc, config, vocab, label_vocab, max_depth)
    out += pack_context(doc, config, vocab, label_vocab, max_depth)
    return out


_PACKERS = {
    "single": pack_single,
    "merged": pack_merged,
    "context": pack_context,
    "union": pack_union,
}


def pack_document(
    doc: Document,
    config: PackerConfig,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[EncodedWindow]:
    """Pack one document with the strategy named in the config."""
    return _PACKERS[config.strategy](doc, config, vocab, label_vocab, max_depth)


def strategy_config(config: PackerConfig, strategy: str) -> PackerConfig:
    return replace(config, strategy=strategy)


# ---------------------------------------------------------------------------
# Coverage verification

@dataclass(frozen=True)
class CoverageReport:
    expected_multiplicity: int
    violations: tuple[tuple[tuple[str, int, int], int], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def coverage_check(
    windows: Iterable[EncodedWindow],
    doc: Document,
    expected_multiplicity: int,
) -> CoverageReport:
    """Verify each word of the document is classifier-active exactly
    expected_multiplicity times across the windows."""
    counts: Counter = Counter()
    for w in windows:
        for key in w.provenance:
            if key[0] == doc.doc_id:
                counts[key] += 1
    violations = []
    for sent in doc.sentences:
        for tok in sent.tokens:
            key = (doc.doc_id, sent.sent_index, tok.word_index)
            got = counts.pop(key, 0)
            if got != expected_multiplicity:
                violations.append((key, got))
    # leftover provenance points at words the document does not have
    for key, got in sorted(counts.items()):
        violations.append((key, got))
    return CoverageReport(expected_multiplicity, tuple(violations))
