"""Training loop and span prediction for the window tagger.

AdamW with a linear learning-rate decay to zero over the total step count
and no warmup.  Everything is driven by a single seeded generator (epoch
shuffles, then dropout masks, in a fixed order), so a seed pins the whole
run: identical seeds give bit-identical parameters and reports.

The stock desk-scale learning rate is 1e-3; the original large-model
schedule (5e-6, 20 epochs, batch dictated by hardware) remains reachable
through TrainConfig.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import kernels as K
from .corpus import Annotation, Document
from .labels import LabelVocabulary, decode_labels
from .model import Batch, ModelConfig, classifier_logits, forward_hidden, loss_and_grad
from .packing import INFER_STRATEGIES, EncodedWindow, PackerConfig, pack_document, strategy_config
from .tokenizer import SubwordVocabulary

__all__ = [
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "predict_document",
    "predict_windows",
    "train",
]


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be non-negative")


@dataclass(frozen=True)
class TrainReport:
    epoch_losses: tuple[float, ...]
    final_loss: float
    steps: int


_BETA1, _BETA2, _EPS = 0.9, 0.999, 1e-8


def train(
    params: dict[str, np.ndarray],
    windows: Sequence[EncodedWindow],
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> tuple[dict[str, np.ndarray], TrainReport]:
    """Train on packed windows; returns updated copies of the parameters.

    Windows without any classifier-active position carry no signal and are
    skipped up front.
    """
    usable = [w for w in windows if w.classifier_mask.any()]
    if not usable:
        raise ValueError("no windows with classifier-active positions")

    params = {name: t.copy() for name, t in params.items()}
    m_state = {name: np.zeros_like(t) for name, t in params.items()}
    v_state = {name: np.zeros_like(t) for name, t in params.items()}
    rng = np.random.default_rng(train_config.seed)

    n = len(usable)
    bs = train_config.batch_size
    steps_per_epoch = math.ceil(n / bs)
    total_steps = train_config.epochs * steps_per_epoch
    base_lr = train_config.learning_rate

    t = 0
    epoch_losses: list[float] = []
    for _ in range(train_config.epochs):
        order = rng.permutation(n)
        running = 0.0
        batches = 0
        for b0 in range(0, n, bs):
            chunk = [usable[i] for i in order[b0 : b0 + bs]]
            lr = base_lr * (1.0 - t / total_steps)
            loss, grads = loss_and_grad(params, model_config, chunk, dropout_rng=rng)
            if not math.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at step {t}")
            t += 1
            bc1 = 1.0 - _BETA1 ** t
            bc2 = 1.0 - _BETA2 ** t
            for name in params:
                K.adamw_step(
                    params[name].reshape(-1),
                    np.ascontiguousarray(grads[name]).reshape(-1),
                    m_state[name].reshape(-1),
                    v_state[name].reshape(-1),
                    lr, _BETA1, _BETA2, _EPS, train_config.weight_decay, bc1, bc2,
                )
            running += loss
            batches += 1
        epoch_losses.append(running / batches)
    return params, TrainReport(tuple(epoch_losses), epoch_losses[-1], t)


def predict_windows(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    windows: Sequence[EncodedWindow],
    label_vocab: LabelVocabulary,
    batch_size: int = 64,
) -> dict[tuple[str, int], dict[int, str]]:
    """Argmax labels per word, routed back through window provenance.

    Returns {(doc_id, sent_index): {word_index: composite label}}.  When a
    word is classifier-active in several windows (it never is under the
    inference strategies), the last window wins.
    """
    out: dict[tuple[str, int], dict[int, str]] = defaultdict(dict)
    for b0 in range(0, len(windows), batch_size):
        chunk = windows[b0 : b0 + batch_size]
        batch = Batch.from_windows(chunk, expected_len=config.max_len)
        hidden = forward_hidden(params, config, batch)
        rows_b, rows_p = np.nonzero(batch.cls)
        logits = classifier_logits(params, hidden[rows_b, rows_p])
        picks = np.argmax(logits, axis=1)
        cursor = 0
        for w_idx in range(len(chunk)):
            n_active = int(batch.cls[w_idx].sum())
            prov = chunk[w_idx].provenance
            for k in range(n_active):
                doc_id, sent_idx, word_idx = prov[k]
                out[(doc_id, sent_idx)][word_idx] = label_vocab.label(int(picks[cursor + k]))
            cursor += n_active
    return dict(out)


def predict_document(
    params: dict[str, np.ndarray],
    config: ModelConfig,
    document: Document,
    strategy: str,
    packer_config: PackerConfig,
    vocab: SubwordVocabulary,
    label_vocab: LabelVocabulary,
) -> list[set[Annotation]]:
    """Pack, run the model in evaluation mode, and decode spans per sentence.

    Union is a training-time representation only; inference accepts
    single, merged, and context.
    """
    if strategy not in INFER_STRATEGIES:
        raise ValueError(f"inference strategy must be one of {INFER_STRATEGIES}, got {strategy!r}")
    windows = pack_document(document, strategy_config(packer_config, strategy), vocab, label_vocab)
    word_labels = predict_windows(params, config, windows, label_vocab)
    results: list[set[Annotation]] = []
    for sent in document.sentences:
        per_word = word_labels.get((document.doc_id, sent.sent_index), {})
        sequence = [per_word.get(w, "O") for w in range(len(sent))]
        results.append(decode_labels(sequence))
    return results
