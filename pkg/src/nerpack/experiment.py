"""Wiring between packing, training, prediction, and scoring.

Windows are packed once per strategy and reused across seeds; per run the
seed feeds both the parameter initialization and the training shuffle, so
a (strategy, seed) pair fully determines the resulting model.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Sequence

import numpy as np

from .corpus import Dataset
from .evaluation import CrossMatrix, cross_matrix, dataset_span_tuples, strict_span_f1
from .labels import DEFAULT_MAX_DEPTH, LabelVocabulary, decode_labels
from .model import ModelConfig, init
from .packing import EncodedWindow, PackerConfig, pack_document, strategy_config
from .tagger import TrainConfig, predict_windows, train
from .tokenizer import SubwordVocabulary

__all__ = [
    "evaluate_model",
    "pack_dataset",
    "prediction_span_tuples",
    "run_cross_matrix",
    "train_model",
]


def pack_dataset(
    dataset: Dataset,
    strategy: str,
    config: PackerConfig,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[EncodedWindow]:
    windows: list[EncodedWindow] = []
    cfg = strategy_config(config, strategy)
    for doc in dataset.documents:
        windows.extend(pack_document(doc, cfg, vocab, label_vocab, max_depth))
    return windows


def train_model(
    strategy_windows: Sequence[EncodedWindow],
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int,
) -> dict[str, np.ndarray]:
    mcfg = replace(model_config, seed=seed)
    tcfg = replace(train_config, seed=seed)
    params = init(mcfg)
    params, _ = train(params, strategy_windows, mcfg, tcfg)
    return params


def prediction_span_tuples(
    word_labels: dict[tuple[str, int], dict[int, str]],
    dataset: Dataset,
) -> list[tuple]:
    """Decode per-word label maps into strict-matching span keys."""
    tuples: list[tuple] = []
    for doc, sent in dataset.sentences():
        per_word = word_labels.get((doc.doc_id, sent.sent_index), {})
        sequence = [per_word.get(w, "O") for w in range(len(sent))]
        for ann in decode_labels(sequence):
            tuples.append((doc.doc_id, sent.sent_index, ann.start, ann.end, ann.category))
    return tuples


def evaluate_model(
    params: dict[str, np.ndarray],
    model_config: ModelConfig,
    tune_windows: Sequence[EncodedWindow],
    tune_dataset: Dataset,
    label_vocab: LabelVocabulary,
) -> float:
    word_labels = predict_windows(params, model_config, tune_windows, label_vocab)
    pred = prediction_span_tuples(word_labels, tune_dataset)
    gold = dataset_span_tuples(tune_dataset)
    return strict_span_f1(gold, pred).f1


def run_cross_matrix(
    train_dataset: Dataset,
    tune_dataset: Dataset,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
    packer_config: PackerConfig,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seeds: Sequence[int],
    train_strategies: Sequence[str] = ("single", "merged", "context", "union"),
    infer_strategies: Sequence[str] = ("single", "merged", "context"),
) -> CrossMatrix:
    train_windows = {
        s: pack_dataset(train_dataset, s, packer_config, vocab, label_vocab)
        for s in train_strategies
    }
    tune_windows = {
        s: pack_dataset(tune_dataset, s, packer_config, vocab, label_vocab)
        for s in infer_strategies
    }

    def train_fn(strategy: str, seed: int):
        return train_model(train_windows[strategy], model_config, train_config, seed)

    def eval_fn(params, strategy: str) -> float:
        return evaluate_model(params, model_config, tune_windows[strategy], tune_dataset, label_vocab)

    return cross_matrix(train_fn, eval_fn, seeds, train_strategies, infer_strategies)
