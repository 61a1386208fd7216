"""Tokenizer, vocabulary construction, and batch encoding."""

import numpy as np
import pytest

from atcsri.text import (
    PAD_ID,
    UNK_ID,
    EmptyTranscript,
    Vocabulary,
    build_vocab,
    encode_batch,
    lengths_to_mask,
    tokenize,
)


class TestTokenize:
    def test_english_callsign_instruction(self):
        toks = tokenize("Air China four two three seven, climb to eight thousand one meters")
        assert toks == ["air", "china", "four", "two", "three", "seven",
                        "climb", "to", "eight", "thousand", "one", "meters"]
        assert len(toks) == 12

    def test_english_with_waypoint(self):
        toks = tokenize("Hainan seven four five two, direct to akube")
        assert len(toks) == 8
        assert toks[-1] == "akube"

    def test_chinese_split_per_character(self):
        assert tokenize("国航四二三七") == ["国", "航", "四", "二", "三", "七"]

    def test_mixed_scripts_preserve_order(self):
        assert tokenize("hello 世界 ok") == ["hello", "世", "界", "ok"]
        assert tokenize("上to下") == ["上", "to", "下"]

    def test_fullwidth_punctuation_stripped(self):
        assert tokenize("东方三拐四六，下降。") == ["东", "方", "三", "拐", "四", "六", "下", "降"]

    def test_empty_raises(self):
        with pytest.raises(EmptyTranscript):
            tokenize("")
        with pytest.raises(EmptyTranscript):
            tokenize("   ")
        with pytest.raises(EmptyTranscript):
            tokenize(" ,. ")


class TestVocabulary:
    def test_hand_counted_example(self):
        v = build_vocab(["a b", "a"], min_count=1)
        assert v.id("a") == 2 and v.id("b") == 3
        assert len(v) == 4

    def test_threshold_above_all_leaves_reserved_only(self):
        v = build_vocab(["a b", "a"], min_count=5)
        assert len(v) == 2
        assert v.id("a") == UNK_ID

    def test_rebuild_is_deterministic(self):
        corpus = ["delta echo", "echo foxtrot delta", "delta"]
        a = build_vocab(corpus, 1)
        b = build_vocab(corpus, 1)
        assert a.id_to_token == b.id_to_token

    def test_frequency_then_lexicographic_order(self):
        v = build_vocab(["b a c", "b a", "b"], min_count=1)
        # b:3, a:2, c:1
        assert [v.token(i) for i in (2, 3, 4)] == ["b", "a", "c"]
        v2 = build_vocab(["x y", "y x"], min_count=1)  # tie -> lexicographic
        assert v2.id("x") == 2 and v2.id("y") == 3

    def test_unknown_lookup_never_fails(self):
        v = build_vocab(["a"], 1)
        assert v.id("zzz") == UNK_ID

    def test_save_load_round_trip(self, tmp_path):
        v = build_vocab(["四 川 one two", "one 四"], 1)
        p = tmp_path / "vocab.txt"
        v.save(p)
        v2 = Vocabulary.load(p)
        assert v2.id_to_token == v.id_to_token

    def test_decode_encode_round_trip(self):
        v = build_vocab(["climb to eight thousand"], 1)
        toks = tokenize("climb to eight thousand")
        assert v.decode(v.encode(toks)) == toks


class TestEncodeBatch:
    def test_hand_built_batch(self):
        v = build_vocab(["a b", "a"], 1)
        ids, lengths = encode_batch(["a", "a b"], v)
        np.testing.assert_array_equal(ids, [[2, PAD_ID], [2, 3]])
        np.testing.assert_array_equal(lengths, [1, 2])

    def test_unseen_token_becomes_unk(self):
        v = build_vocab(["a"], 1)
        ids, _ = encode_batch(["a zzz"], v)
        np.testing.assert_array_equal(ids, [[2, UNK_ID]])

    def test_truncation_keeps_prefix(self):
        v = build_vocab(["a b"], 1)
        ids, lengths = encode_batch(["a b"], v, max_len=1)
        np.testing.assert_array_equal(ids, [[2]])
        np.testing.assert_array_equal(lengths, [1])

    def test_empty_transcript_reports_index(self):
        v = build_vocab(["a"], 1)
        with pytest.raises(EmptyTranscript, match="transcript 1"):
            encode_batch(["a", "  "], v)

    def test_no_pad_inside_length(self):
        v = build_vocab(["a b c", "a"], 1)
        ids, lengths = encode_batch(["a c", "a b c", "b"], v)
        for row, n in zip(ids, lengths):
            assert (row[:n] != PAD_ID).all()
            assert (row[n:] == PAD_ID).all()


def test_lengths_to_mask():
    m = lengths_to_mask(np.array([1, 3, 2]), 4)
    np.testing.assert_array_equal(
        m, [[1, 0, 0, 0], [1, 1, 1, 0], [1, 1, 0, 0]])
