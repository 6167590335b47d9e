"""nerpack: window-packing strategies for NER sequence labeling.

The library covers the full desk-scale pipeline: corpus parsing, subword
tokenization, nested IOB2 label coding, window packing under the four data
representation strategies (single, merged, context, union), a small
self-attention tagger with classifier masking, strict span-level F1
evaluation, and a synthetic corpus generator for controlled experiments
on cross-sentence context.
"""

__version__ = "0.1.0"

from .corpus import (
    Annotation,
    CorpusStats,
    Dataset,
    Document,
    ParseError,
    Sentence,
    Token,
    corpus_stats,
    parse_conll2003,
    parse_nested_tsv,
    split_dataset,
)
from .evaluation import EvalReport, RunAggregate, aggregate_runs, strict_span_f1
from .labels import LabelVocabulary, build_vocabulary, decode_labels, encode_sentence
from .packing import EncodedWindow, PackerConfig, coverage_check, pack_document
from .tokenizer import SubwordVocabulary, load_vocab, tokenize_sentence, tokenize_word

__all__ = [
    "Annotation",
    "CorpusStats",
    "Dataset",
    "Document",
    "EncodedWindow",
    "EvalReport",
    "LabelVocabulary",
    "PackerConfig",
    "ParseError",
    "RunAggregate",
    "Sentence",
    "SubwordVocabulary",
    "Token",
    "aggregate_runs",
    "build_vocabulary",
    "corpus_stats",
    "coverage_check",
    "decode_labels",
    "encode_sentence",
    "load_vocab",
    "pack_document",
    "parse_conll2003",
    "parse_nested_tsv",
    "split_dataset",
    "strict_span_f1",
    "tokenize_sentence",
    "tokenize_word",
]
