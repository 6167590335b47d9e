"""Command-line interface.

Subcommands: stats, pack, train, predict, eval, matrix, synth.  Exit codes:
0 success, 1 experiment assertion failure (coverage violation, training
divergence), 2 usage or I/O error.  Every subcommand is deterministic given
its seed flags and outputs carry no timestamps, so reruns are byte-identical.

Flags override values from an optional JSON config file (--config); the
config keys are the long flag names with dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

from .backend import active_backend
from .corpus import (
    Dataset,
    ParseError,
    corpus_stats,
    from_jsonl,
    merge_datasets,
    parse_conll2003,
    parse_nested_tsv,
    split_dataset,
    to_jsonl,
)
from .evaluation import dataset_span_tuples, strict_span_f1
from .experiment import pack_dataset, run_cross_matrix
from .labels import LabelVocabulary, build_vocabulary
from .model import ModelConfig, init, load_checkpoint, save_checkpoint
from .packing import (
    PackerConfig,
    coverage_check,
    windows_from_jsonl,
    windows_to_jsonl,
)
from .synth import SynthConfig, generate
from .tagger import TrainConfig, TrainingDiverged, predict_document, train
from .tokenizer import build_vocab, load_vocab, vocab_to_text

EXIT_OK = 0
EXIT_EXPERIMENT = 1
EXIT_USAGE = 2


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved settings of a matrix run, written next to its outputs."""

    corpus_path: str
    corpus_format: str
    train_fraction: float
    split_seed: int
    seeds: tuple[int, ...]
    packer: dict
    model: dict
    training: dict
    train_strategies: tuple[str, ...]
    infer_strategies: tuple[str, ...]


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _load_dataset(path: str, fmt: str, layers: int) -> Dataset:
    text = _read_text(path)
    if fmt == "conll":
        return parse_conll2003(text)
    if fmt == "tsv":
        return parse_nested_tsv(text, layers)
    if fmt == "jsonl":
        return from_jsonl(text)
    raise ValueError(f"unknown corpus format {fmt!r}")


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    obj = json.loads(_read_text(path))
    if not isinstance(obj, dict):
        raise ValueError("config file must hold a JSON object")
    return obj


def _get(args, config: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None:
        return value
    return config.get(name, default)


def _parse_seeds(text: str) -> tuple[int, ...]:
    return tuple(int(s) for s in str(text).split(",") if s.strip())


# ---------------------------------------------------------------------------
# Subcommands

def cmd_stats(args) -> int:
    datasets = []
    for path in args.inputs:
        datasets.append(_load_dataset(path, args.format, args.layers))
    if len(datasets) == 1:
        dataset = datasets[0]
    else:
        dataset = merge_datasets(datasets, [Path(p).stem for p in args.inputs])
    stats = corpus_stats(dataset)
    if args.json:
        print(json.dumps(asdict(stats), sort_keys=True))
    else:
        print(f"sentences    {stats.sentence_count}")
        print(f"tokens       {stats.token_count}")
        print(f"annotations  {stats.annotation_count}")
        print(f"categories   {stats.category_count}")
    return EXIT_OK


def cmd_pack(args) -> int:
    config_file = _load_config_file(args.config)
    max_len = _get(args, config_file, "max_len", 256)
    fraction = _get(args, config_file, "context_fraction", 1.0)
    strategy = _get(args, config_file, "strategy", "single")
    dataset = _load_dataset(args.input, args.format, args.layers)
    vocab = load_vocab(_read_text(args.vocab))
    if args.labels:
        label_vocab = LabelVocabulary.from_text(_read_text(args.labels))
    else:
        label_vocab = build_vocabulary(dataset)
        labels_path = Path(args.out).with_suffix(Path(args.out).suffix + ".labels")
        labels_path.write_text(label_vocab.to_text() + "\n", encoding="utf-8")
        print(f"label vocabulary written to {labels_path}", file=sys.stderr)
    packer = PackerConfig(max_len=max_len, context_budget_fraction=fraction, strategy=strategy)
    windows = pack_dataset(dataset, strategy, packer, vocab, label_vocab)
    expected = 3 if strategy == "union" else 1
    for doc in dataset.documents:
        report = coverage_check(windows, doc, expected)
        if not report.ok:
            print(f"coverage violation in {doc.doc_id}: {report.violations[:5]}", file=sys.stderr)
            return EXIT_EXPERIMENT
    Path(args.out).write_text(windows_to_jsonl(windows) + ("\n" if windows else ""), encoding="utf-8")
    print(f"{len(windows)} windows -> {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    config_file = _load_config_file(args.config)
    windows = windows_from_jsonl(_read_text(args.windows))
    if not windows:
        print("window file is empty", file=sys.stderr)
        return EXIT_USAGE
    vocab = load_vocab(_read_text(args.vocab))
    label_vocab = LabelVocabulary.from_text(_read_text(args.labels))
    mcfg = ModelConfig(
        vocab_size=len(vocab),
        label_count=len(label_vocab),
        model_dim=_get(args, config_file, "model_dim", 64),
        heads=_get(args, config_file, "heads", 4),
        layers=_get(args, config_file, "model_layers", 2),
        max_len=len(windows[0]),
        dropout=_get(args, config_file, "dropout", 0.2),
        seed=_get(args, config_file, "seed", 0),
    )
    tcfg = TrainConfig(
        epochs=_get(args, config_file, "epochs", 20),
        batch_size=_get(args, config_file, "batch_size", 32),
        learning_rate=_get(args, config_file, "learning_rate", 1e-3),
        weight_decay=_get(args, config_file, "weight_decay", 0.01),
        seed=_get(args, config_file, "seed", 0),
    )
    params = init(mcfg)
    try:
        params, report = train(params, windows, mcfg, tcfg)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    save_checkpoint(args.out, params, mcfg)
    print(f"backend {active_backend()}; {report.steps} steps")
    for i, loss in enumerate(report.epoch_losses, start=1):
        print(f"epoch {i:3d}  loss {loss:.6f}")
    print(f"checkpoint -> {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    params, mcfg = load_checkpoint(args.ckpt)
    dataset = _load_dataset(args.input, args.format, args.layers)
    vocab = load_vocab(_read_text(args.vocab))
    label_vocab = LabelVocabulary.from_text(_read_text(args.labels))
    packer = PackerConfig(
        max_len=mcfg.max_len,
        context_budget_fraction=args.context_fraction if args.context_fraction is not None else 1.0,
        strategy=args.strategy,
    )
    lines = []
    for doc in dataset.documents:
        per_sentence = predict_document(params, mcfg, doc, args.strategy, packer, vocab, label_vocab)
        for sent, anns in zip(doc.sentences, per_sentence):
            lines.append(json.dumps({
                "doc_id": doc.doc_id,
                "sent_index": sent.sent_index,
                "annotations": [
                    {"category": a.category, "start": a.start, "end": a.end}
                    for a in sorted(anns, key=lambda a: (a.start, a.end, a.category))
                ],
            }, sort_keys=True))
    Path(args.out).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    print(f"predictions -> {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    gold_ds = _load_dataset(args.gold, args.format, args.layers)
    gold = dataset_span_tuples(gold_ds)
    pred = []
    for line in _read_text(args.pred).splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        for a in obj["annotations"]:
            pred.append((obj["doc_id"], obj["sent_index"], a["start"], a["end"], a["category"]))
    report = strict_span_f1(gold, pred)
    payload = {
        "true_positives": report.true_positives,
        "false_positives": report.false_positives,
        "false_negatives": report.false_negatives,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
    }
    if args.json:
        print(json.dumps(payload, sort_keys=True))
    else:
        for key, value in payload.items():
            print(f"{key:16s} {value:.6f}" if isinstance(value, float) else f"{key:16s} {value}")
    return EXIT_OK


def cmd_matrix(args) -> int:
    config_file = _load_config_file(args.config)
    dataset = _load_dataset(args.input, args.format, args.layers)
    fraction = _get(args, config_file, "train_fraction", 0.8)
    split_seed = _get(args, config_file, "split_seed", 13)
    seeds = _parse_seeds(_get(args, config_file, "seeds", "1,2,3,4,5"))
    max_len = _get(args, config_file, "max_len", 256)

    train_ds, tune_ds = split_dataset(dataset, fraction, split_seed)
    if args.vocab:
        vocab = load_vocab(_read_text(args.vocab))
    else:
        words = {w for doc in dataset.documents for s in doc.sentences for w in s.words}
        vocab = build_vocab(sorted(words))
    label_vocab = build_vocabulary(train_ds)
    packer = PackerConfig(
        max_len=max_len,
        context_budget_fraction=_get(args, config_file, "context_fraction", 1.0),
    )
    mcfg = ModelConfig(
        vocab_size=len(vocab),
        label_count=len(label_vocab),
        model_dim=_get(args, config_file, "model_dim", 64),
        heads=_get(args, config_file, "heads", 4),
        layers=_get(args, config_file, "model_layers", 2),
        max_len=max_len,
        dropout=_get(args, config_file, "dropout", 0.1),
    )
    tcfg = TrainConfig(
        epochs=_get(args, config_file, "epochs", 12),
        batch_size=_get(args, config_file, "batch_size", 32),
        learning_rate=_get(args, config_file, "learning_rate", 1e-3),
        weight_decay=_get(args, config_file, "weight_decay", 0.01),
    )
    record = ExperimentConfig(
        corpus_path=args.input,
        corpus_format=args.format,
        train_fraction=fraction,
        split_seed=split_seed,
        seeds=seeds,
        packer=asdict(packer),
        model=asdict(mcfg),
        training=asdict(tcfg),
        train_strategies=("single", "merged", "context", "union"),
        infer_strategies=("single", "merged", "context"),
    )
    try:
        matrix = run_cross_matrix(
            train_ds, tune_ds, vocab, label_vocab, packer, mcfg, tcfg, seeds,
            record.train_strategies, record.infer_strategies,
        )
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "matrix.csv").write_text(matrix.to_csv() + "\n", encoding="utf-8")
    (outdir / "matrix.txt").write_text(matrix.to_text() + "\n", encoding="utf-8")
    (outdir / "matrix.json").write_text(
        json.dumps(matrix.to_json_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (outdir / "experiment.json").write_text(
        json.dumps(asdict(record), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(matrix.to_text())
    print(f"outputs -> {outdir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    config_file = _load_config_file(args.config)
    cfg = SynthConfig(
        n_docs=_get(args, config_file, "docs", 200),
        sentences_per_doc=_get(args, config_file, "sentences_per_doc", 8),
        vocab_size=_get(args, config_file, "vocab_size", 100),
        ambiguous_entity_count=_get(args, config_file, "ambiguous_forms", 6),
        cue_distance=_get(args, config_file, "cue_distance", 3),
        context_dependence_rate=_get(args, config_file, "rate", 0.7),
        seed=_get(args, config_file, "seed", 0),
        cue_side=_get(args, config_file, "cue_side", "left"),
    )
    corpus = generate(cfg)
    Path(args.out).write_text(to_jsonl(corpus.dataset) + "\n", encoding="utf-8")
    print(f"{len(corpus.dataset.documents)} documents, {len(corpus.mentions)} mentions -> {args.out}")
    if args.vocab_out:
        vocab = build_vocab(corpus.word_types())
        Path(args.vocab_out).write_text(vocab_to_text(vocab) + "\n", encoding="utf-8")
        print(f"vocabulary ({len(vocab)} pieces) -> {args.vocab_out}")
    if args.mentions_out:
        lines = [json.dumps(asdict(m), sort_keys=True) for m in corpus.mentions]
        Path(args.mentions_out).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"mention metadata -> {args.mentions_out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser

def _add_corpus_args(p, multiple=False):
    if multiple:
        p.add_argument("inputs", nargs="+", help="corpus file(s)")
    else:
        p.add_argument("--input", required=True, help="corpus file")
    p.add_argument("--format", choices=("conll", "tsv", "jsonl"), default="jsonl")
    p.add_argument("--layers", type=int, default=2, help="IOB2 layer count for tsv input")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nerpack",
        description="Window-packing strategies for NER sequence labeling.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics")
    _add_corpus_args(p, multiple=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pack", help="pack a corpus into windows")
    _add_corpus_args(p)
    p.add_argument("--vocab", required=True)
    p.add_argument("--labels", help="label vocabulary file; built from the corpus when omitted")
    p.add_argument("--strategy", choices=("single", "merged", "context", "union"), default=None)
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--context-fraction", dest="context_fraction", type=float, default=None)
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pack)

    p = sub.add_parser("train", help="train the tagger on packed windows")
    p.add_argument("--windows", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model-dim", dest="model_dim", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--model-layers", dest="model_layers", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict annotations for a corpus")
    _add_corpus_args(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--strategy", choices=("single", "merged", "context"), default="single")
    p.add_argument("--context-fraction", dest="context_fraction", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="strict span F1 of predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--format", choices=("conll", "tsv", "jsonl"), default="jsonl")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--pred", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("matrix", help="train/inference strategy cross matrix")
    _add_corpus_args(p)
    p.add_argument("--vocab", help="vocabulary file; built from the corpus when omitted")
    p.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    p.add_argument("--split-seed", dest="split_seed", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated run seeds")
    p.add_argument("--max-len", dest="max_len", type=int, default=None)
    p.add_argument("--context-fraction", dest="context_fraction", type=float, default=None)
    p.add_argument("--model-dim", dest="model_dim", type=int, default=None)
    p.add_argument("--heads", type=int, default=None)
    p.add_argument("--model-layers", dest="model_layers", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--weight-decay", dest="weight_decay", type=float, default=None)
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("synth", help="generate a synthetic context-dependent corpus")
    p.add_argument("--docs", type=int, default=None)
    p.add_argument("--sentences-per-doc", dest="sentences_per_doc", type=int, default=None)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=None)
    p.add_argument("--ambiguous-forms", dest="ambiguous_forms", type=int, default=None)
    p.add_argument("--rate", type=float, default=None, help="context dependence rate")
    p.add_argument("--cue-distance", dest="cue_distance", type=int, default=None)
    p.add_argument("--cue-side", dest="cue_side", choices=("left", "right"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", required=True)
    p.add_argument("--vocab-out", dest="vocab_out")
    p.add_argument("--mentions-out", dest="mentions_out")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ParseError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
