"""Deterministic vocabulary-driven subword tokenization.

Greedy longest-match from the left (WordPiece style): non-initial pieces
are matched with a continuation marker, and a word with no match at some
offset maps entirely to the unknown token, which keeps word alignment
trivial.  No lowercasing or normalization is applied; capitalization is a
useful entity cue and corpora are used verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Sentence

__all__ = [
    "BOS_TOKEN",
    "EOS_TOKEN",
    "PAD_TOKEN",
    "SPECIAL_TOKENS",
    "UNK_TOKEN",
    "SubwordVocabulary",
    "TokenizedSentence",
    "build_vocab",
    "load_vocab",
    "tokenize_sentence",
    "tokenize_word",
    "vocab_to_text",
]

PAD_TOKEN = "[PAD]"
UNK_TOKEN = "[UNK]"
BOS_TOKEN = "[BOS]"
EOS_TOKEN = "[EOS]"
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)


class VocabularyError(ValueError):
    pass


class SubwordVocabulary:
    """Immutable piece -> id map with PAD/UNK/BOS/EOS special ids."""

    def __init__(self, pieces: Iterable[str], continuation_marker: str = "##"):
        self.pieces = tuple(pieces)
        self.continuation_marker = continuation_marker
        self.piece_to_id: dict[str, int] = {}
        for i, piece in enumerate(self.pieces):
            if not piece:
                raise VocabularyError(f"empty piece at id {i}")
            if piece in self.piece_to_id:
                raise VocabularyError(f"duplicate piece {piece!r}")
            self.piece_to_id[piece] = i
        missing = [t for t in SPECIAL_TOKENS if t not in self.piece_to_id]
        if missing:
            raise VocabularyError(f"missing special tokens: {missing}")
        self.pad_id = self.piece_to_id[PAD_TOKEN]
        self.unk_id = self.piece_to_id[UNK_TOKEN]
        self.bos_id = self.piece_to_id[BOS_TOKEN]
        self.eos_id = self.piece_to_id[EOS_TOKEN]
        self._max_piece_len = max(len(p) for p in self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)

    def __contains__(self, piece: str) -> bool:
        return piece in self.piece_to_id

    def piece(self, idx: int) -> str:
        return self.pieces[idx]


def load_vocab(text: str | bytes, continuation_marker: str = "##") -> SubwordVocabulary:
    """Load a plain-text vocabulary, one piece per line; id = line number."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    lines = text.splitlines()
    if not lines:
        raise VocabularyError("empty vocabulary file")
    return SubwordVocabulary(lines, continuation_marker)


def vocab_to_text(vocab: SubwordVocabulary) -> str:
    return "\n".join(vocab.pieces)


def build_vocab(
    words: Iterable[str],
    continuation_marker: str = "##",
    include_words: bool = True,
) -> SubwordVocabulary:
    """Build a vocabulary covering the given words.

    Always includes the specials plus every character (both bare and with
    the continuation marker) so any word tokenizes without UNK; whole-word
    pieces are added too unless disabled, keeping common sequences short.
    """
    chars: set[str] = set()
    word_set: set[str] = set()
    for w in words:
        chars.update(w)
        word_set.add(w)
    pieces = list(SPECIAL_TOKENS)
    pieces.extend(sorted(chars))
    pieces.extend(continuation_marker + c for c in sorted(chars))
    if include_words:
        pieces.extend(w for w in sorted(word_set) if w not in set(pieces))
    return SubwordVocabulary(pieces, continuation_marker)


def tokenize_word(vocab: SubwordVocabulary, word: str) -> list[int]:
    """Greedy longest-match tokenization of a single word.

    Falls back to ``[UNK]`` for the whole word on the first unmatchable
    offset.
    """
    if not word:
        raise ValueError("word must be non-empty")
    marker = vocab.continuation_marker
    table = vocab.piece_to_id
    ids: list[int] = []
    pos = 0
    n = len(word)
    while pos < n:
        limit = vocab._max_piece_len if pos == 0 else vocab._max_piece_len - len(marker)
        end = min(n, pos + max(limit, 0))
        found = -1
        while end > pos:
            cand = word[pos:end] if pos == 0 else marker + word[pos:end]
            piece_id = table.get(cand, -1)
            if piece_id >= 0:
                found = piece_id
                break
            end -= 1
        if found < 0:
            return [vocab.unk_id]
        ids.append(found)
        pos = end
    return ids


@dataclass(frozen=True)
class TokenizedSentence:
    subtoken_ids: tuple[int, ...]
    word_of_subtoken: tuple[int, ...]
    is_first_subtoken: tuple[bool, ...]

    def __post_init__(self):
        if not (len(self.subtoken_ids) == len(self.word_of_subtoken) == len(self.is_first_subtoken)):
            raise ValueError("alignment lists must have equal length")


def tokenize_words(vocab: SubwordVocabulary, words: Sequence[str]) -> TokenizedSentence:
    ids: list[int] = []
    word_of: list[int] = []
    first: list[bool] = []
    for w_idx, word in enumerate(words):
        pieces = tokenize_word(vocab, word)
        for k, pid in enumerate(pieces):
            ids.append(pid)
            word_of.append(w_idx)
            first.append(k == 0)
    return TokenizedSentence(tuple(ids), tuple(word_of), tuple(first))


def tokenize_sentence(vocab: SubwordVocabulary, sentence: Sentence) -> TokenizedSentence:
    """Tokenize a sentence; no BOS/EOS are added here (the packer adds them)."""
    return tokenize_words(vocab, sentence.words)
