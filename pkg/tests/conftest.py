"""Shared builders for the test suite."""

import random

import pytest

from nerpack.corpus import Annotation, Dataset, Document, sentence_from_words

CATEGORIES = ("PER", "ORG", "LOC", "MISC")


def make_doc(doc_id, sentence_specs):
    """sentence_specs: list of (words, annotations)."""
    sentences = [
        sentence_from_words(words, anns, i) for i, (words, anns) in enumerate(sentence_specs)
    ]
    return Document(doc_id, tuple(sentences))


def random_nested_annotations(rng: random.Random, length: int, max_depth: int = 4,
                              allow_equal_spans: bool = True):
    """Properly nested annotation sets: any two spans are disjoint, equal, or
    strictly contained; at most max_depth layers; (category, span) distinct."""
    annotations = []

    def gen(lo, hi, budget, max_span):
        pos = lo
        while pos < hi:
            if rng.random() < 0.4:
                pos += 1
                continue
            span_len = rng.randint(1, max(1, min(hi - pos, max_span)))
            start, end = pos, pos + span_len
            cat = rng.choice(CATEGORIES)
            annotations.append(Annotation(cat, start, end))
            used = 1
            if allow_equal_spans and budget - used >= 1 and rng.random() < 0.08:
                other = rng.choice([c for c in CATEGORIES if c != cat])
                annotations.append(Annotation(other, start, end))
                used += 1
            if budget - used >= 1 and span_len >= 2 and rng.random() < 0.6:
                # children strictly shorter, fully inside the parent span
                gen(start, end, budget - used, span_len - 1)
            pos = end + rng.randint(0, 2)

    gen(0, length, max_depth, 6)
    return annotations


def random_flat_annotations(rng: random.Random, length: int):
    annotations = []
    pos = 0
    while pos < length:
        if rng.random() < 0.5:
            pos += 1
            continue
        span_len = rng.randint(1, min(4, length - pos))
        annotations.append(Annotation(rng.choice(CATEGORIES), pos, pos + span_len))
        pos += span_len + rng.randint(0, 2)
    return annotations


def random_document(rng: random.Random, doc_id: str, n_sentences=None, nested=False):
    specs = []
    for _ in range(n_sentences if n_sentences is not None else rng.randint(1, 6)):
        length = rng.randint(1, 12)
        words = [f"w{rng.randint(0, 30)}" for _ in range(length)]
        anns = (random_nested_annotations(rng, length) if nested
                else random_flat_annotations(rng, length))
        specs.append((words, anns))
    return make_doc(doc_id, specs)


def random_dataset(rng: random.Random, n_docs: int, nested=False):
    return Dataset(tuple(random_document(rng, f"d{i:04d}", nested=nested) for i in range(n_docs)))


@pytest.fixture
def tiny_doc():
    return make_doc("d0", [
        (["Mark", "works", "in", "Xax"], [Annotation("LOC", 3, 4)]),
        (["He", "loves", "this", "city"], []),
        (["Totally", "unrelated", "words"], [Annotation("PER", 0, 2)]),
    ])
