from __future__ import annotations

import numpy as np
import pytest

from earlyexit.core import Corpus, LayerOutput, TokenTable, UtteranceTrace, Vocabulary
from earlyexit.synth import SynthParams, generate_corpus

TOKENS = TokenTable.characters()

_acceptance_lines: list[tuple[str, bool, str]] = []


def one_hot_path(text: str, tokens: TokenTable = TOKENS, n_frames: int | None = None) -> np.ndarray:
    """One-hot posteriors spelling ``text`` as char, blank, char, blank, ..."""
    path = []
    for ch in text:
        path.append(tokens.delimiter_index if ch == " " else tokens.index(ch))
        path.append(tokens.blank_index)
    path = path or [tokens.blank_index]
    n_frames = n_frames or len(path)
    path += [tokens.blank_index] * (n_frames - len(path))
    out = np.zeros((n_frames, tokens.size))
    out[np.arange(n_frames), path] = 1.0
    return out


def make_trace(
    hyps,
    reference: str = "he left everything behind",
    i_min: int = 10,
    utt_id: str = "u0",
    posteriors=None,
) -> UtteranceTrace:
    """Trace whose layers ``i_min, i_min+1, ...`` output ``hyps``."""
    n = i_min + len(hyps) - 1
    posts = posteriors if posteriors is not None else [None] * len(hyps)
    layers = tuple(LayerOutput(i_min + k, p, h) for k, (h, p) in enumerate(zip(hyps, posts)))
    return UtteranceTrace(utt_id, reference, TOKENS, layers, n_layers=n, i_min=i_min)


def make_posterior_trace(matrices, reference: str = "ab", i_min: int = 10, utt_id: str = "u0") -> UtteranceTrace:
    n = i_min + len(matrices) - 1
    layers = tuple(LayerOutput(i_min + k, m, None) for k, m in enumerate(matrices))
    return UtteranceTrace(utt_id, reference, TOKENS, layers, n_layers=n, i_min=i_min)


@pytest.fixture(scope="session")
def small_corpus() -> Corpus:
    return generate_corpus(SynthParams(seed=7, n_utterances=40, ref_len_range=(3, 8), degrade_after=20))


@pytest.fixture(scope="session")
def text_corpus() -> Corpus:
    """Hypothesis-only corpus, quick to build at larger sizes."""
    return generate_corpus(
        SynthParams(seed=11, n_utterances=300, ref_len_range=(4, 14), degrade_after=20, emit_posteriors=False)
    )


@pytest.fixture(scope="session")
def vocab() -> Vocabulary:
    return SynthParams().vocab


@pytest.fixture
def criterion():
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def record(name: str, passed: bool, detail: str = "") -> None:
        _acceptance_lines.append((name, bool(passed), detail))
        assert passed, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _acceptance_lines:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
