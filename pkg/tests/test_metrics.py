import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from earlyexit.metrics import corpus_wer, ctc_greedy_decode, levenshtein, macro_wer, word_errors, utterance_wer

from .conftest import TOKENS, one_hot_path


def naive_lev(a, b):
    """Textbook recursion, no memoization."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    if a[0] == b[0]:
        return naive_lev(a[1:], b[1:])
    return 1 + min(naive_lev(a[1:], b), naive_lev(a, b[1:]), naive_lev(a[1:], b[1:]))


def frames(symbols):
    out = np.zeros((len(symbols), TOKENS.size))
    for t, s in enumerate(symbols):
        out[t, TOKENS.index(s)] = 1.0
    return out


class TestCTCDecode:
    def test_collapse_and_blank_removal(self):
        assert ctc_greedy_decode(frames(["<blank>", "a", "a", "<blank>", "b"]), TOKENS) == "ab"

    def test_blank_separates_repeats(self):
        assert ctc_greedy_decode(frames(["a", "<blank>", "a"]), TOKENS) == "aa"

    def test_one_hot_words(self):
        p = frames(["h", "i", "|", "y", "o", "u"])
        assert ctc_greedy_decode(p, TOKENS) == "hi you"

    def test_delimiters_trimmed_and_merged(self):
        p = frames(["|", "a", "|", "<blank>", "|", "b", "|"])
        assert ctc_greedy_decode(p, TOKENS) == "a b"

    def test_canonical_path_round_trip(self):
        assert ctc_greedy_decode(one_hot_path("hello  world"), TOKENS) == "hello world"

    @given(st.lists(st.integers(0, TOKENS.size - 1), min_size=1, max_size=40))
    def test_no_blank_no_double_space(self, path):
        p = np.zeros((len(path), TOKENS.size))
        p[np.arange(len(path)), path] = 1.0
        out = ctc_greedy_decode(p, TOKENS)
        assert "<blank>" not in out
        assert "  " not in out
        assert out == out.strip()


class TestLevenshtein:
    def test_identity(self):
        assert levenshtein("kitten", "kitten") == 0

    def test_empty(self):
        assert levenshtein("", "abc") == 3
        assert levenshtein([], ["x", "y"]) == 2

    def test_classic(self):
        assert levenshtein("kitten", "sitting") == 3

    def test_matches_naive_recursion(self):
        rng = random.Random(3)
        for _ in range(300):
            a = "".join(rng.choice("abc") for _ in range(rng.randint(0, 6)))
            b = "".join(rng.choice("abc") for _ in range(rng.randint(0, 6)))
            assert levenshtein(a, b) == naive_lev(a, b), (a, b)

    @settings(max_examples=200)
    @given(
        st.lists(st.sampled_from("abcd"), max_size=12),
        st.lists(st.sampled_from("abcd"), max_size=12),
        st.lists(st.sampled_from("abcd"), max_size=12),
    )
    def test_metric_axioms(self, a, b, c):
        assert levenshtein(a, a) == 0
        assert levenshtein(a, b) == levenshtein(b, a)
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


class TestWordErrors:
    def test_exact(self):
        assert word_errors("he left everything behind", "he left everything behind") == (0, 4)

    def test_one_misspelling(self):
        assert word_errors("he left everthing behind", "he left everything behind") == (1, 4)

    def test_all_deletions(self):
        assert word_errors("", "a b c") == (3, 3)

    def test_empty_reference(self):
        assert utterance_wer("", "") == 0.0
        assert utterance_wer("a b", "") == 2.0

    @given(
        st.lists(st.sampled_from(["a", "b", "c"]), max_size=10),
        st.lists(st.sampled_from(["a", "b", "c"]), max_size=10),
    )
    def test_errors_bounded_by_longer(self, h, r):
        errors, _ = word_errors(" ".join(h), " ".join(r))
        assert errors <= max(len(h), len(r))


class TestCorpusWER:
    def test_exact(self):
        assert corpus_wer([("a b", "a b"), ("c", "c")]) == 0.0

    def test_single(self):
        assert corpus_wer([("he left everthing behind", "he left everything behind")]) == 0.25

    def test_micro_average(self):
        # (1 error / 4 words) and (3 errors / 6 words) -> 4 / 10
        pairs = [("a b c x", "a b c d"), ("a b c", "a b c d e f")]
        assert [word_errors(h, r) for h, r in pairs] == [(1, 4), (3, 6)]
        assert corpus_wer(pairs) == pytest.approx(0.4, abs=1e-12)
        assert macro_wer(pairs) == pytest.approx((0.25 + 0.5) / 2)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            corpus_wer([])

    @given(st.permutations([("a b", "a c"), ("x", "x y z"), ("", "q"), ("m n o", "m n o")]))
    def test_order_invariant(self, pairs):
        assert corpus_wer(pairs) == corpus_wer(sorted(pairs))
