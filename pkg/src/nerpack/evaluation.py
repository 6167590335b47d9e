"""Strict span-level scoring and the train-by-inference cross matrix.

A prediction counts as a true positive only when an unmatched gold span
has the identical key (same sentence, boundaries, and category); matching
is one-to-one and micro-aggregated over the corpus.  Zero denominators
define precision/recall as 0, and F1 of (0, 0) is 0.  Run aggregation
reports the mean and the population standard deviation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Sequence

from .corpus import Dataset

__all__ = [
    "CrossMatrix",
    "EvalReport",
    "RunAggregate",
    "aggregate_runs",
    "cross_matrix",
    "dataset_span_tuples",
    "strict_span_f1",
]


@dataclass(frozen=True)
class EvalReport:
    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def precision(self) -> float:
        denom = self.true_positives + self.false_positives
        return self.true_positives / denom if denom else 0.0

    @property
    def recall(self) -> float:
        denom = self.true_positives + self.false_negatives
        return self.true_positives / denom if denom else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


def strict_span_f1(gold: Iterable[Hashable], pred: Iterable[Hashable]) -> EvalReport:
    """Score predictions against gold spans under strict matching.

    Items are hashable span keys, e.g. (doc_id, sent_index, start, end,
    category).  Inputs may contain duplicates; each gold span can absorb at
    most one prediction.
    """
    gold_counts = Counter(gold)
    pred_counts = Counter(pred)
    tp = sum(min(c, pred_counts[k]) for k, c in gold_counts.items())
    n_gold = sum(gold_counts.values())
    n_pred = sum(pred_counts.values())
    return EvalReport(tp, n_pred - tp, n_gold - tp)


def dataset_span_tuples(dataset: Dataset) -> list[tuple]:
    """Flatten a dataset's annotations into strict-matching keys."""
    return [
        (doc.doc_id, sent.sent_index, ann.start, ann.end, ann.category)
        for doc, sent in dataset.sentences()
        for ann in sent.annotations
    ]


@dataclass(frozen=True)
class RunAggregate:
    scores: tuple[float, ...]
    mean: float
    sigma: float

    @classmethod
    def from_scores(cls, scores: Sequence[float]) -> "RunAggregate":
        if not scores:
            raise ValueError("cannot aggregate an empty run list")
        mean = sum(scores) / len(scores)
        sigma = math.sqrt(sum((s - mean) ** 2 for s in scores) / len(scores))
        return cls(tuple(scores), mean, sigma)


def aggregate_runs(scores: Sequence[float]) -> RunAggregate:
    return RunAggregate.from_scores(scores)


@dataclass(frozen=True)
class CrossMatrix:
    train_strategies: tuple[str, ...]
    infer_strategies: tuple[str, ...]
    cells: dict[tuple[str, str], RunAggregate]

    def cell(self, train_strategy: str, infer_strategy: str) -> RunAggregate:
        return self.cells[(train_strategy, infer_strategy)]

    def row_average(self, train_strategy: str) -> float:
        means = [self.cells[(train_strategy, s)].mean for s in self.infer_strategies]
        return sum(means) / len(means)

    def to_csv(self) -> str:
        header = ["training"]
        for s in self.infer_strategies:
            header += [f"{s}_f1", f"{s}_sigma"]
        header.append("avg")
        lines = [",".join(header)]
        for tr in self.train_strategies:
            row = [tr]
            for s in self.infer_strategies:
                agg = self.cells[(tr, s)]
                row += [f"{agg.mean:.6f}", f"{agg.sigma:.6f}"]
            row.append(f"{self.row_average(tr):.6f}")
            lines.append(",".join(row))
        return "\n".join(lines)

    def to_text(self) -> str:
        """Aligned table: training strategy rows, per-inference F1/sigma columns."""
        widths = 10
        head1 = "training".ljust(widths)
        head2 = " " * widths
        for s in self.infer_strategies:
            head1 += s.center(2 * widths)
            head2 += "F1".center(widths) + "sigma".center(widths)
        head1 += "AVG".center(widths)
        lines = [head1, head2]
        for tr in self.train_strategies:
            row = tr.ljust(widths)
            for s in self.infer_strategies:
                agg = self.cells[(tr, s)]
                row += f"{agg.mean:.4f}".center(widths) + f"{agg.sigma:.4f}".center(widths)
            row += f"{self.row_average(tr):.4f}".center(widths)
            lines.append(row)
        return "\n".join(lines)

    def to_json_dict(self) -> dict:
        return {
            tr: {
                "cells": {
                    s: {
                        "runs": list(self.cells[(tr, s)].scores),
                        "mean": self.cells[(tr, s)].mean,
                        "sigma": self.cells[(tr, s)].sigma,
                    }
                    for s in self.infer_strategies
                },
                "avg": self.row_average(tr),
            }
            for tr in self.train_strategies
        }


def cross_matrix(
    train_fn: Callable[[str, int], object],
    eval_fn: Callable[[object, str], float],
    seeds: Sequence[int],
    train_strategies: Sequence[str] = ("single", "merged", "context", "union"),
    infer_strategies: Sequence[str] = ("single", "merged", "context"),
) -> CrossMatrix:
    """Train one model per (training strategy, seed) and score it under
    every inference strategy."""
    if not seeds:
        raise ValueError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    cells: dict[tuple[str, str], RunAggregate] = {}
    for tr in train_strategies:
        per_infer: dict[str, list[float]] = {s: [] for s in infer_strategies}
        for seed in seeds:
            model = train_fn(tr, seed)
            for s in infer_strategies:
                per_infer[s].append(eval_fn(model, s))
        for s in infer_strategies:
            cells[(tr, s)] = RunAggregate.from_scores(per_infer[s])
    return CrossMatrix(tuple(train_strategies), tuple(infer_strategies), cells)
