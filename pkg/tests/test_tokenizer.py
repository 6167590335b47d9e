import random

import pytest

from nerpack.corpus import sentence_from_words
from nerpack.tokenizer import (
    SPECIAL_TOKENS,
    SubwordVocabulary,
    VocabularyError,
    build_vocab,
    load_vocab,
    tokenize_sentence,
    tokenize_word,
    vocab_to_text,
)


def make_vocab(*pieces):
    return SubwordVocabulary(SPECIAL_TOKENS + pieces)


class TestLoadVocab:
    def test_specials_only(self):
        v = load_vocab("\n".join(SPECIAL_TOKENS))
        assert len(v) == 4

    def test_ids_follow_line_order(self):
        pieces = list(SPECIAL_TOKENS) + [f"p{i}" for i in range(1000)]
        v = load_vocab("\n".join(pieces))
        assert len(v) == 1004
        assert all(v.piece_to_id[p] == i for i, p in enumerate(pieces))

    def test_duplicate_rejected(self):
        with pytest.raises(VocabularyError):
            load_vocab("\n".join(SPECIAL_TOKENS + ("dup", "dup")))

    def test_empty_file_rejected(self):
        with pytest.raises(VocabularyError):
            load_vocab("")

    def test_missing_special_rejected(self):
        with pytest.raises(VocabularyError):
            load_vocab("[PAD]\n[UNK]\n[BOS]")

    def test_text_round_trip(self):
        v = make_vocab("a", "##a", "ab")
        assert load_vocab(vocab_to_text(v)).pieces == v.pieces


class TestTokenizeWord:
    def test_multi_piece_word(self):
        v = make_vocab("E", "##iff", "##el")
        ids = tokenize_word(v, "Eiffel")
        assert [v.piece(i) for i in ids] == ["E", "##iff", "##el"]

    def test_whole_word_piece(self):
        v = make_vocab("Eiffel", "E", "##iff", "##el")
        assert tokenize_word(v, "Eiffel") == [v.piece_to_id["Eiffel"]]

    def test_unknown_word(self):
        v = make_vocab("a", "##b")
        assert tokenize_word(v, "qz") == [v.unk_id]

    def test_midword_failure_maps_whole_word_to_unk(self):
        v = make_vocab("q")  # 'q' matches but '##z' does not
        assert tokenize_word(v, "qz") == [v.unk_id]

    def test_empty_word_rejected(self):
        v = make_vocab("a")
        with pytest.raises(ValueError):
            tokenize_word(v, "")

    def test_greedy_longest_match_property(self):
        rng = random.Random(3)
        alphabet = "abcd"
        pieces = {"".join(rng.choice(alphabet) for _ in range(rng.randint(1, 4)))
                  for _ in range(30)}
        vocab_pieces = set(alphabet) | pieces
        v = SubwordVocabulary(
            SPECIAL_TOKENS + tuple(sorted(vocab_pieces)) + tuple("##" + p for p in sorted(vocab_pieces))
        )
        for _ in range(200):
            word = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
            ids = tokenize_word(v, word)
            assert ids != [v.unk_id]
            # brute force: at each produced offset no longer piece matches
            pos = 0
            for pid in ids:
                piece = v.piece(pid)
                raw = piece[2:] if pos > 0 else piece
                assert word[pos:pos + len(raw)] == raw
                for longer in range(len(raw) + 1, len(word) - pos + 1):
                    cand = word[pos:pos + longer]
                    if pos > 0:
                        cand = "##" + cand
                    assert cand not in v.piece_to_id
                pos += len(raw)
            assert pos == len(word)


class TestTokenizeSentence:
    def test_single_piece_words(self):
        v = make_vocab("the", "cat", "sat")
        ts = tokenize_sentence(v, sentence_from_words(["the", "cat", "sat"]))
        assert len(ts.subtoken_ids) == 3
        assert ts.is_first_subtoken == (True, True, True)
        assert ts.word_of_subtoken == (0, 1, 2)

    def test_multi_piece_alignment(self):
        v = make_vocab("E", "##iff", "##el", "tower")
        ts = tokenize_sentence(v, sentence_from_words(["Eiffel", "tower"]))
        assert ts.word_of_subtoken == (0, 0, 0, 1)
        assert ts.is_first_subtoken == (True, False, False, True)

    def test_empty_sentence(self):
        v = make_vocab("a")
        ts = tokenize_sentence(v, sentence_from_words([]))
        assert ts.subtoken_ids == ()

    def test_alignment_completeness_random(self):
        rng = random.Random(4)
        words = [f"w{i}" for i in range(40)] + ["Eiffel", "zzz"]
        v = build_vocab(words)
        for _ in range(100):
            chosen = [rng.choice(words) for _ in range(rng.randint(1, 10))]
            ts = tokenize_sentence(v, sentence_from_words(chosen))
            covered = set(ts.word_of_subtoken)
            assert covered == set(range(len(chosen)))
            firsts = [w for w, f in zip(ts.word_of_subtoken, ts.is_first_subtoken) if f]
            assert firsts == sorted(set(firsts)) == list(range(len(chosen)))
            assert list(ts.word_of_subtoken) == sorted(ts.word_of_subtoken)

    def test_determinism(self):
        v = build_vocab(["alpha", "beta"])
        s = sentence_from_words(["alpha", "beta", "alpha"])
        assert tokenize_sentence(v, s) == tokenize_sentence(v, s)


class TestBuildVocab:
    def test_covers_all_words(self):
        words = ["Mark", "works", "in", "Xax"]
        v = build_vocab(words)
        for w in words:
            assert tokenize_word(v, w) != [v.unk_id]

    def test_char_fallback_without_words(self):
        v = build_vocab(["abc"], include_words=False)
        ids = tokenize_word(v, "cab")
        assert [v.piece(i) for i in ids] == ["c", "##a", "##b"]
