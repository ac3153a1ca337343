"""Greedy CTC decoding, Levenshtein distance and word error rate."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .core import TokenTable, words


def ctc_greedy_decode(posteriors: np.ndarray, tokens: TokenTable) -> str:
    """Best-path decode: per-frame argmax, merge repeats, drop blanks.

    Delimiter tokens become spaces; runs of delimiters collapse to one space
    and the result is trimmed.
    """
    best = np.argmax(posteriors, axis=1)
    if best.size == 0:
        return ""
    keep = np.ones(best.size, dtype=bool)
    keep[1:] = best[1:] != best[:-1]
    collapsed = best[keep]
    collapsed = collapsed[collapsed != tokens.blank_index]
    symbols = tokens.symbols
    delim = tokens.delimiter_index
    text = "".join(" " if k == delim else symbols[k] for k in collapsed.tolist())
    return " ".join(w for w in text.split(" ") if w)


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance (insert, delete, substitute) between two sequences."""
    # Shared prefix and suffix never contribute to the distance.
    start = 0
    stop_a, stop_b = len(a), len(b)
    while start < stop_a and start < stop_b and a[start] == b[start]:
        start += 1
    while stop_a > start and stop_b > start and a[stop_a - 1] == b[stop_b - 1]:
        stop_a -= 1
        stop_b -= 1
    a = a[start:stop_a]
    b = b[start:stop_b]
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)

    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def word_errors(hyp: str, ref: str) -> tuple[int, int]:
    """Return ``(word edit errors, reference word count)``."""
    h, r = words(hyp), words(ref)
    return levenshtein(h, r), len(r)


def utterance_wer(hyp: str, ref: str) -> float:
    errors, ref_len = word_errors(hyp, ref)
    return errors / max(ref_len, 1)


def corpus_wer(pairs: Iterable[tuple[str, str]]) -> float:
    """Micro-averaged WER: total word edits over total reference words."""
    total_errors = total_words = 0
    n = 0
    for hyp, ref in pairs:
        e, r = word_errors(hyp, ref)
        total_errors += e
        total_words += r
        n += 1
    if n == 0:
        raise ValueError("corpus_wer: no (hypothesis, reference) pairs")
    return total_errors / max(total_words, 1)


def macro_wer(pairs: Iterable[tuple[str, str]]) -> float:
    """Mean of per-utterance WERs."""
    rates = [utterance_wer(h, r) for h, r in pairs]
    if not rates:
        raise ValueError("macro_wer: no (hypothesis, reference) pairs")
    return float(np.mean(rates))
