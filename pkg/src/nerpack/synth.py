"""Synthetic corpora where some entity categories require cross-sentence
context.

Each document interleaves filler sentences with mention blocks.  A
context-dependent mention uses an ambiguous surface form that occurs with
every category across the corpus; its gold category is fixed by a cue
token placed in a different sentence of the same document (the nearest
preceding cue, or the nearest following one in right-cue mode).  A
self-disambiguating mention uses a surface form tied to one category, so a
sentence-local model can label it.  With context_dependence_rate 0 the
whole corpus is sentence-local; with rate 1 no deterministic
sentence-local rule can reach F1 = 1.

Entities are single-token, flat, and drawn from 2 to 4 categories;
nesting behavior is exercised by the label codec, not here.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Iterable

from .corpus import Annotation, Dataset, Document, Sentence, sentence_from_words

__all__ = [
    "Mention",
    "SynthConfig",
    "SynthCorpus",
    "bayes_upper_bound",
    "cue_word",
    "generate",
]


def cue_word(category: str) -> str:
    return f"cue{category.lower()}"


@dataclass(frozen=True)
class SynthConfig:
    n_docs: int = 200
    sentences_per_doc: int = 8
    vocab_size: int = 100
    ambiguous_entity_count: int = 6
    cue_distance: int = 3  # per-mention distance is uniform in [1, cue_distance]
    context_dependence_rate: float = 0.7
    seed: int = 0
    categories: tuple[str, ...] = ("LOC", "ORG")
    cue_side: str = "left"  # cues precede targets; "right" puts them after
    mention_rate: float = 0.55

    def __post_init__(self):
        if min(self.n_docs, self.sentences_per_doc, self.vocab_size, self.ambiguous_entity_count) <= 0:
            raise ValueError("size parameters must be positive")
        if not 1 <= self.cue_distance < self.sentences_per_doc:
            raise ValueError("cue_distance must satisfy 1 <= cue_distance < sentences_per_doc")
        if not 0.0 <= self.context_dependence_rate <= 1.0:
            raise ValueError("context_dependence_rate must be in [0, 1]")
        if not 2 <= len(self.categories) <= 4:
            raise ValueError("2 to 4 categories supported")
        if self.cue_side not in ("left", "right"):
            raise ValueError("cue_side must be 'left' or 'right'")
        if not 0.0 < self.mention_rate <= 1.0:
            raise ValueError("mention_rate must be in (0, 1]")


@dataclass(frozen=True)
class Mention:
    doc_id: str
    sent_index: int
    word_index: int
    surface: str
    category: str
    context_dependent: bool
    cue_sent_index: int | None


@dataclass(frozen=True)
class SynthCorpus:
    dataset: Dataset
    mentions: tuple[Mention, ...]
    config: SynthConfig

    def word_types(self) -> list[str]:
        seen: set[str] = set()
        for doc in self.dataset.documents:
            for sent in doc.sentences:
                seen.update(sent.words)
        return sorted(seen)


def _filler_sentence(rng: random.Random, fillers: list[str]) -> list[str]:
    return [rng.choice(fillers) for _ in range(rng.randint(3, 6))]


def _insert(rng: random.Random, words: list[str], token: str) -> tuple[list[str], int]:
    pos = rng.randrange(len(words) + 1)
    return words[:pos] + [token] + words[pos:], pos


def generate(config: SynthConfig) -> SynthCorpus:
    """Deterministic for a given seed."""
    rng = random.Random(config.seed)
    fillers = [f"w{i:03d}" for i in range(config.vocab_size)]
    ambiguous = [f"Xam{i}" for i in range(config.ambiguous_entity_count)]
    unambiguous = {
        cat: [f"U{cat.lower()}{i}" for i in range(config.ambiguous_entity_count)]
        for cat in config.categories
    }

    documents: list[Document] = []
    mentions: list[Mention] = []
    for doc_n in range(config.n_docs):
        doc_id = f"doc{doc_n:04d}"
        rows: list[tuple[list[str], Annotation | None]] = []

        def emit_target(category: str, surface: str, context_dependent: bool, cue_at: int | None):
            words, pos = _insert(rng, _filler_sentence(rng, fillers), surface)
            rows.append((words, Annotation(category, pos, pos + 1)))
            mentions.append(
                Mention(doc_id, len(rows) - 1, pos, surface, category, context_dependent, cue_at)
            )

        while len(rows) < config.sentences_per_doc:
            remaining = config.sentences_per_doc - len(rows)
            if rng.random() >= config.mention_rate:
                rows.append((_filler_sentence(rng, fillers), None))
                continue
            category = rng.choice(config.categories)
            wants_context = rng.random() < config.context_dependence_rate
            if wants_context and remaining >= 2:
                d = rng.randint(1, min(config.cue_distance, remaining - 1))
                cue_words, _ = _insert(rng, _filler_sentence(rng, fillers), cue_word(category))
                surface = rng.choice(ambiguous)
                if config.cue_side == "left":
                    cue_at = len(rows)
                    rows.append((cue_words, None))
                    for _ in range(d - 1):
                        rows.append((_filler_sentence(rng, fillers), None))
                    emit_target(category, surface, True, cue_at)
                else:
                    target_at = len(rows)
                    emit_target(category, surface, True, target_at + d)
                    for _ in range(d - 1):
                        rows.append((_filler_sentence(rng, fillers), None))
                    rows.append((cue_words, None))
            else:
                # no room for a cue block also lands here; keeps documents full
                emit_target(category, rng.choice(unambiguous[category]), False, None)

        sentences = [
            sentence_from_words(words, [ann] if ann else [], i)
            for i, (words, ann) in enumerate(rows)
        ]
        documents.append(Document(doc_id, tuple(sentences)))
    return SynthCorpus(Dataset(tuple(documents)), tuple(mentions), config)


# ---------------------------------------------------------------------------
# Distribution-level accuracy bound per window strategy.

def _merged_groups(word_counts: list[int], capacity: int) -> list[list[int]]:
    groups: list[list[int]] = []
    cur: list[int] = []
    used = 0
    for i, n in enumerate(word_counts):
        if cur and used + n > capacity:
            groups.append(cur)
            cur, used = [], 0
        cur.append(i)
        used += n
    if cur:
        groups.append(cur)
    return groups


def _visible_word_range(
    strategy: str,
    word_counts: list[int],
    sent_index: int,
    capacity: int,
    fraction: float,
) -> tuple[int, int]:
    """Flat [lo, hi) word range visible from the target sentence's window."""
    offsets = [0]
    for n in word_counts:
        offsets.append(offsets[-1] + n)
    lo, hi = offsets[sent_index], offsets[sent_index + 1]
    if strategy == "single":
        return lo, hi
    if strategy == "merged":
        for group in _merged_groups(word_counts, capacity):
            if sent_index in group:
                return offsets[group[0]], offsets[group[-1] + 1]
        raise AssertionError("sentence missing from merged groups")
    if strategy == "context":
        r = capacity - (hi - lo)
        want_l = int((r // 2) * fraction)
        want_r = int((r - r // 2) * fraction)
        avail_l, avail_r = lo, offsets[-1] - hi
        take_l = min(want_l, avail_l)
        take_r = min(want_r, avail_r)
        slack = (want_l - take_l) + (want_r - take_r)
        extra_r = min(slack, avail_r - take_r)
        take_l = min(take_l + (slack - extra_r), avail_l)
        return lo - take_l, hi + take_r + extra_r
    raise ValueError(f"unknown strategy {strategy!r}")


def bayes_upper_bound(
    corpus: SynthCorpus,
    strategy: str,
    max_len: int = 256,
    context_budget_fraction: float = 1.0,
) -> float:
    """Best achievable mention-categorization accuracy given a window.

    Majority rule over visible-evidence classes, where the evidence is the
    mention surface plus every cue token visible in the window with its
    sentence offset.  Filler words carry no category information by
    construction, so this is the ceiling for any labeler that does not
    memorize spurious filler correlations.  Word counts stand in for
    subtoken counts, which is exact under word-level vocabularies.
    """
    if not corpus.mentions:
        return 1.0
    capacity = max_len - 2
    cues = {cue_word(c) for c in corpus.config.categories}
    doc_index = {doc.doc_id: doc for doc in corpus.dataset.documents}

    groups: dict[tuple, dict[str, int]] = {}
    for mention in corpus.mentions:
        doc = doc_index[mention.doc_id]
        word_counts = [len(s) for s in doc.sentences]
        if max(word_counts) > capacity:
            raise ValueError("synthetic sentences must fit the window capacity")
        lo, hi = _visible_word_range(
            strategy, word_counts, mention.sent_index, capacity, context_budget_fraction
        )
        visible_cues = []
        flat = 0
        for sent in doc.sentences:
            for word in sent.words:
                if lo <= flat < hi and word in cues:
                    visible_cues.append((word, sent.sent_index - mention.sent_index))
                flat += 1
        key = (mention.surface, tuple(visible_cues))
        groups.setdefault(key, {}).setdefault(mention.category, 0)
        groups[key][mention.category] += 1

    correct = sum(max(by_cat.values()) for by_cat in groups.values())
    return correct / len(corpus.mentions)
