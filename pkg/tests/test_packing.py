import random

import numpy as np
import pytest

from nerpack.corpus import Annotation, Dataset, Document, sentence_from_words
from nerpack.labels import build_vocabulary, encode_sentence
from nerpack.packing import (
    IGNORE_LABEL,
    EncodedWindow,
    PackerConfig,
    coverage_check,
    pack_context,
    pack_document,
    pack_merged,
    pack_single,
    pack_union,
    strategy_config,
    windows_from_jsonl,
    windows_to_jsonl,
)
from nerpack.tokenizer import build_vocab

from conftest import make_doc, random_document


def build_env(doc):
    words = sorted({w for s in doc.sentences for w in s.words})
    vocab = build_vocab(words)
    label_vocab = build_vocabulary(Dataset((doc,)))
    return vocab, label_vocab


def single_piece_doc(sentence_sizes, doc_id="d0"):
    """Each word is one subtoken (distinct single-piece words)."""
    specs = []
    n = 0
    for size in sentence_sizes:
        specs.append(([f"t{n + i}" for i in range(size)], []))
        n += size
    return make_doc(doc_id, specs)


class TestSingle:
    def test_one_window_per_sentence(self, tiny_doc):
        vocab, lv = build_env(tiny_doc)
        windows = pack_single(tiny_doc, PackerConfig(max_len=32), vocab, lv)
        assert len(windows) == 3
        assert all(w.strategy_tag == "single" for w in windows)

    def test_oversized_sentence_chunks(self):
        doc = single_piece_doc([600])
        vocab, lv = build_env(doc)
        windows = pack_single(doc, PackerConfig(max_len=256), vocab, lv)
        assert len(windows) == 3  # ceil(600 / 254)

    def test_empty_document(self):
        doc = Document("d0", ())
        vocab = build_vocab(["x"])
        lv = build_vocabulary(Dataset((doc,)))
        assert pack_single(doc, PackerConfig(max_len=16), vocab, lv) == []

    def test_word_never_straddles_chunk(self):
        # 4 words of 3 pieces each, capacity 7 -> 2 chunks of 2 words
        doc = make_doc("d0", [(["abc", "abd", "abe", "abf"], [])])
        vocab = build_vocab(["abc", "abd", "abe", "abf"], include_words=False)
        lv = build_vocabulary(Dataset((doc,)))
        windows = pack_single(doc, PackerConfig(max_len=9), vocab, lv)
        assert len(windows) == 2
        assert [w.content_length for w in windows] == [8, 8]  # 6 pieces + BOS/EOS

    def test_oversized_word_splits_midword_first_chunk_active(self):
        doc = make_doc("d0", [(["abcdefghij"], [])])  # 10 chars, capacity 7
        vocab = build_vocab(["abcdefghij"], include_words=False)
        lv = build_vocabulary(Dataset((doc,)))
        windows = pack_single(doc, PackerConfig(max_len=9), vocab, lv)
        assert len(windows) == 2
        assert windows[0].classifier_mask.sum() == 1
        assert windows[1].classifier_mask.sum() == 0
        assert windows[0].provenance == (("d0", 0, 0),)


class TestMerged:
    def test_greedy_fill(self):
        doc = single_piece_doc([100, 100, 100])
        vocab, lv = build_env(doc)
        windows = pack_merged(doc, PackerConfig(max_len=256), vocab, lv)
        assert len(windows) == 2
        assert [w.content_length for w in windows] == [202, 102]

    def test_single_short_sentence_matches_pack_single(self, tiny_doc):
        doc = make_doc("d0", [(list(tiny_doc.sentences[0].words),
                               list(tiny_doc.sentences[0].annotations))])
        vocab, lv = build_env(doc)
        cfg = PackerConfig(max_len=32)
        merged = pack_merged(doc, cfg, vocab, lv)
        single = pack_single(doc, cfg, vocab, lv)
        assert len(merged) == len(single) == 1
        assert np.array_equal(merged[0].subtoken_ids, single[0].subtoken_ids)
        assert np.array_equal(merged[0].classifier_mask, single[0].classifier_mask)
        assert np.array_equal(merged[0].label_ids, single[0].label_ids)

    def test_window_count_never_exceeds_single(self):
        rng = random.Random(5)
        for _ in range(30):
            doc = random_document(rng, "d0")
            vocab, lv = build_env(doc)
            cfg = PackerConfig(max_len=16)
            assert len(pack_merged(doc, cfg, vocab, lv)) <= len(pack_single(doc, cfg, vocab, lv))


class TestContext:
    def test_middle_sentence_sees_whole_document(self):
        doc = single_piece_doc([3, 4, 3])
        vocab, lv = build_env(doc)
        windows = pack_context(doc, PackerConfig(max_len=32), vocab, lv)
        assert len(windows) == 3
        middle = windows[1]
        assert middle.content_length == 12  # 10 pieces + BOS + EOS
        assert middle.classifier_mask.sum() == 4
        assert all(p[1] == 1 for p in middle.provenance)

    def test_single_sentence_document_equals_pack_single(self):
        doc = single_piece_doc([5])
        vocab, lv = build_env(doc)
        cfg = PackerConfig(max_len=16)
        ctx = pack_context(doc, cfg, vocab, lv)
        single = pack_single(doc, cfg, vocab, lv)
        assert len(ctx) == 1
        assert np.array_equal(ctx[0].subtoken_ids, single[0].subtoken_ids)
        assert np.array_equal(ctx[0].attention_mask, single[0].attention_mask)

    def test_first_sentence_budget_transfers_right(self):
        # capacity 14, target 4 -> budgets 5 left / 5 right; no left material,
        # so the right side gets the full remainder of 10
        doc = single_piece_doc([4, 20])
        vocab, lv = build_env(doc)
        windows = pack_context(doc, PackerConfig(max_len=16), vocab, lv)
        first = windows[0]
        assert first.content_length == 16  # BOS + 4 + 10 context + EOS
        assert first.classifier_mask.sum() == 4

    def test_context_positions_attention_only(self):
        doc = single_piece_doc([3, 3, 3])
        vocab, lv = build_env(doc)
        windows = pack_context(doc, PackerConfig(max_len=32), vocab, lv)
        w = windows[0]
        ctx_positions = w.attention_mask & ~w.classifier_mask
        # BOS, EOS plus six context pieces from the two other sentences
        assert int(ctx_positions.sum()) == 8
        assert (w.label_ids[~w.classifier_mask] == IGNORE_LABEL).all()

    def test_fraction_zero_degenerates_to_single_labels(self):
        rng = random.Random(6)
        for _ in range(20):
            doc = random_document(rng, "d0")
            vocab, lv = build_env(doc)
            base = PackerConfig(max_len=16, context_budget_fraction=0.0)
            ctx = pack_context(doc, base, vocab, lv)
            single = pack_single(doc, PackerConfig(max_len=16), vocab, lv)

            def active_stream(windows):
                out = []
                for w in windows:
                    ids = w.label_ids[w.classifier_mask]
                    out.extend(zip(w.provenance, ids.tolist()))
                return out

            assert active_stream(ctx) == active_stream(single)

    def test_fraction_scales_budgets(self):
        # capacity 30, target 10 -> r=20, base 10/10; fraction 0.5 -> 5/5
        doc = single_piece_doc([20, 10, 20])
        vocab, lv = build_env(doc)
        windows = pack_context(
            doc, PackerConfig(max_len=32, context_budget_fraction=0.5), vocab, lv
        )
        middle = windows[1]
        assert middle.content_length == 2 + 10 + 5 + 5

    def test_oversized_sentence_chunks_at_half_capacity(self):
        doc = single_piece_doc([300])
        vocab, lv = build_env(doc)
        windows = pack_context(doc, PackerConfig(max_len=256), vocab, lv)
        assert len(windows) == 3  # ceil(300 / 127)
        # chunks still receive context from the rest of the sentence
        assert windows[0].content_length == 256


class TestUnion:
    def test_strategy_order_and_tags(self, tiny_doc):
        vocab, lv = build_env(tiny_doc)
        cfg = PackerConfig(max_len=32)
        windows = pack_union(tiny_doc, cfg, vocab, lv)
        tags = [w.strategy_tag for w in windows]
        assert tags == ["single"] * 3 + ["merged"] * 1 + ["context"] * 3

    def test_five_three_six_shape_makes_fourteen(self):
        # 3 sentences of 80 + one of 300 with max_len 256:
        # single 3 + 2 = 5, merged 1 + 2 = 3, context 3 + 3 = 6 -> union 14
        doc = single_piece_doc([80, 80, 80, 300])
        vocab, lv = build_env(doc)
        cfg = PackerConfig(max_len=256)
        assert len(pack_single(doc, cfg, vocab, lv)) == 5
        assert len(pack_merged(doc, cfg, vocab, lv)) == 3
        assert len(pack_context(doc, cfg, vocab, lv)) == 6
        assert len(pack_union(doc, cfg, vocab, lv)) == 14

    def test_empty_document(self):
        doc = Document("d0", ())
        vocab = build_vocab(["x"])
        lv = build_vocabulary(Dataset((doc,)))
        assert pack_union(doc, PackerConfig(max_len=16), vocab, lv) == []

    def test_each_word_active_three_times(self):
        rng = random.Random(7)
        for _ in range(10):
            doc = random_document(rng, "d0")
            vocab, lv = build_env(doc)
            windows = pack_union(doc, PackerConfig(max_len=16), vocab, lv)
            assert coverage_check(windows, doc, 3).ok


class TestCoverage:
    def test_single_multiplicity_one(self, tiny_doc):
        vocab, lv = build_env(tiny_doc)
        windows = pack_single(tiny_doc, PackerConfig(max_len=32), vocab, lv)
        assert coverage_check(windows, tiny_doc, 1).ok

    def test_dropped_window_reports_exactly_missing_words(self, tiny_doc):
        vocab, lv = build_env(tiny_doc)
        windows = pack_single(tiny_doc, PackerConfig(max_len=32), vocab, lv)
        dropped = windows[1]
        report = coverage_check(windows[:1] + windows[2:], tiny_doc, 1)
        assert not report.ok
        missing = {key for key, count in report.violations if count == 0}
        assert missing == set(dropped.provenance)

    def test_wrong_multiplicity_detected(self, tiny_doc):
        vocab, lv = build_env(tiny_doc)
        windows = pack_single(tiny_doc, PackerConfig(max_len=32), vocab, lv)
        assert not coverage_check(windows + windows[:1], tiny_doc, 1).ok


class TestWindowInvariants:
    @pytest.mark.parametrize("strategy", ["single", "merged", "context", "union"])
    def test_structure_on_random_documents(self, strategy):
        rng = random.Random(hash(strategy) % 1000)
        for _ in range(15):
            doc = random_document(rng, "d0")
            vocab, lv = build_env(doc)
            cfg = strategy_config(PackerConfig(max_len=16), strategy)
            for w in pack_document(doc, cfg, vocab, lv):
                att, cls = w.attention_mask, w.classifier_mask
                # classifier mask implies attention mask
                assert not (cls & ~att).any()
                # BOS at 0, attention is one contiguous prefix, EOS at its end
                assert att[0]
                n = int(att.sum())
                assert att[:n].all() and not att[n:].any()
                assert w.subtoken_ids[0] == vocab.bos_id
                assert w.subtoken_ids[n - 1] == vocab.eos_id
                # PAD positions are attention-false
                assert (w.subtoken_ids[~att] == vocab.pad_id).all()
                # labels defined exactly on the classifier mask
                assert (w.label_ids[cls] != IGNORE_LABEL).all()
                assert (w.label_ids[~cls] == IGNORE_LABEL).all()
                assert len(w.provenance) == int(cls.sum())

    def test_labels_match_codec_via_provenance(self):
        rng = random.Random(8)
        for _ in range(15):
            doc = random_document(rng, "d0", nested=True)
            vocab, lv = build_env(doc)
            encoded = {
                s.sent_index: encode_sentence(s.annotations, len(s)) for s in doc.sentences
            }
            for strategy in ("single", "merged", "context", "union"):
                cfg = strategy_config(PackerConfig(max_len=24), strategy)
                for w in pack_document(doc, cfg, vocab, lv):
                    ids = w.label_ids[w.classifier_mask]
                    for (doc_id, sent_idx, word_idx), label_id in zip(w.provenance, ids.tolist()):
                        assert doc_id == "d0"
                        assert lv.label(label_id) == encoded[sent_idx][word_idx]


class TestWindowIO:
    def test_jsonl_round_trip(self, tiny_doc):
        vocab, lv = build_env(tiny_doc)
        windows = pack_union(tiny_doc, PackerConfig(max_len=32), vocab, lv)
        back = windows_from_jsonl(windows_to_jsonl(windows))
        assert len(back) == len(windows)
        for a, b in zip(windows, back):
            assert np.array_equal(a.subtoken_ids, b.subtoken_ids)
            assert np.array_equal(a.attention_mask, b.attention_mask)
            assert np.array_equal(a.classifier_mask, b.classifier_mask)
            assert np.array_equal(a.label_ids, b.label_ids)
            assert a.provenance == b.provenance
            assert a.strategy_tag == b.strategy_tag

    def test_serialization_deterministic(self, tiny_doc):
        vocab, lv = build_env(tiny_doc)
        cfg = PackerConfig(max_len=32)
        a = windows_to_jsonl(pack_union(tiny_doc, cfg, vocab, lv))
        b = windows_to_jsonl(pack_union(tiny_doc, cfg, vocab, lv))
        assert a == b


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            PackerConfig(max_len=4)
        with pytest.raises(ValueError):
            PackerConfig(context_budget_fraction=1.5)
        with pytest.raises(ValueError):
            PackerConfig(strategy="bogus")

    def test_capacity(self):
        assert PackerConfig(max_len=256).capacity == 254
