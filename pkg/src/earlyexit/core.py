"""Trace data model: token tables, per-layer outputs, utterance traces, corpora.

Everything here is immutable after construction. Posterior matrices are plain
``numpy`` arrays of shape ``(T, C)`` flagged read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

DEFAULT_N_LAYERS = 24
DEFAULT_I_MIN = 10
ROW_SUM_TOL = 1e-4


def normalize_text(text: Optional[str]) -> str:
    """Lowercase, strip, and collapse runs of whitespace to single spaces."""
    if not text:
        return ""
    return " ".join(text.lower().split())


def words(text: str) -> list[str]:
    return normalize_text(text).split()


def as_posteriors(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"posteriors must be 2-D (T x C), got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TokenTable:
    symbols: tuple[str, ...]
    blank_index: int = 0
    delimiter_index: int = 1

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(self.symbols))

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def blank(self) -> str:
        return self.symbols[self.blank_index]

    @property
    def delimiter(self) -> str:
        return self.symbols[self.delimiter_index]

    def index(self, symbol: str) -> int:
        return self.symbols.index(symbol)

    def violations(self) -> list[str]:
        out = []
        n = len(self.symbols)
        if n < 2:
            out.append(f"tokens.symbols: need at least 2 symbols, got {n}")
        if len(set(self.symbols)) != n:
            out.append("tokens.symbols: symbols are not unique")
        for name, idx in (("blank", self.blank_index), ("delimiter", self.delimiter_index)):
            if not 0 <= idx < n:
                out.append(f"tokens.{name}: index {idx} out of range [0, {n})")
        if self.blank_index == self.delimiter_index:
            out.append("tokens: blank and delimiter share index %d" % self.blank_index)
        return out

    @classmethod
    def characters(cls, alphabet: str = "abcdefghijklmnopqrstuvwxyz'") -> "TokenTable":
        """Blank at 0, word delimiter ``|`` at 1, then one token per character."""
        return cls(("<blank>", "|", *alphabet), 0, 1)


@dataclass(frozen=True, eq=False)
class LayerOutput:
    index: int
    posteriors: Optional[np.ndarray] = None
    hypothesis: Optional[str] = None

    def __post_init__(self):
        if self.posteriors is not None and not (
            isinstance(self.posteriors, np.ndarray) and not self.posteriors.flags.writeable
        ):
            object.__setattr__(self, "posteriors", as_posteriors(self.posteriors))
        if self.hypothesis is not None:
            object.__setattr__(self, "hypothesis", normalize_text(self.hypothesis))

    def __eq__(self, other):
        if not isinstance(other, LayerOutput):
            return NotImplemented
        if self.index != other.index or self.hypothesis != other.hypothesis:
            return False
        if (self.posteriors is None) != (other.posteriors is None):
            return False
        return self.posteriors is None or np.array_equal(self.posteriors, other.posteriors)

    __hash__ = None


@dataclass(frozen=True)
class UtteranceTrace:
    id: str
    reference: str
    tokens: TokenTable
    layers: tuple[LayerOutput, ...]
    n_layers: int = DEFAULT_N_LAYERS
    i_min: int = DEFAULT_I_MIN

    def __post_init__(self):
        object.__setattr__(self, "reference", normalize_text(self.reference))
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def layer_indices(self) -> range:
        return range(self.i_min, self.n_layers + 1)

    def layer(self, i: int) -> LayerOutput:
        pos = i - self.i_min
        if 0 <= pos < len(self.layers) and self.layers[pos].index == i:
            return self.layers[pos]
        for lo in self.layers:
            if lo.index == i:
                return lo
        raise KeyError(f"{self.id}: no layer {i}")

    def hypothesis(self, i: int) -> str:
        """Text output of layer ``i``, decoding the posteriors if no hypothesis is stored."""
        lo = self.layer(i)
        if lo.hypothesis is not None:
            return lo.hypothesis
        if lo.posteriors is None:
            raise ValueError(f"{self.id}: layer {i} has neither hypothesis nor posteriors")
        from .metrics import ctc_greedy_decode

        return ctc_greedy_decode(lo.posteriors, self.tokens)

    @property
    def ref_len(self) -> int:
        return len(self.reference.split())


class Vocabulary:
    """Case-insensitive word set."""

    def __init__(self, words: Iterable[str]):
        normalized = frozenset(w.strip().lower() for w in words if w and w.strip())
        if not normalized:
            raise ValueError("vocabulary is empty")
        self._words = normalized

    @property
    def words(self) -> frozenset[str]:
        return self._words

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._words

    def __len__(self) -> int:
        return len(self._words)

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._words))

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._words == other._words

    def __hash__(self):
        return hash(self._words)

    def __repr__(self):
        return f"Vocabulary({len(self._words)} words)"


@dataclass(frozen=True)
class Corpus:
    traces: tuple[UtteranceTrace, ...]
    n_layers: int = DEFAULT_N_LAYERS
    i_min: int = DEFAULT_I_MIN
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        traces = tuple(self.traces)
        object.__setattr__(self, "traces", traces)
        by_id = {}
        for tr in traces:
            if (tr.n_layers, tr.i_min) != (self.n_layers, self.i_min):
                raise ValueError(
                    f"trace {tr.id!r} has (n_layers, i_min) = ({tr.n_layers}, {tr.i_min}),"
                    f" corpus expects ({self.n_layers}, {self.i_min})"
                )
            if tr.id in by_id:
                raise ValueError(f"duplicate utterance id {tr.id!r}")
            by_id[tr.id] = tr
        object.__setattr__(self, "_by_id", by_id)

    @classmethod
    def from_traces(cls, traces: Sequence[UtteranceTrace]) -> "Corpus":
        if not traces:
            raise ValueError("cannot infer geometry of an empty corpus")
        return cls(tuple(traces), traces[0].n_layers, traces[0].i_min)

    def __len__(self) -> int:
        return len(self.traces)

    def __iter__(self) -> Iterator[UtteranceTrace]:
        return iter(self.traces)

    def __getitem__(self, utt_id: str) -> UtteranceTrace:
        return self._by_id[utt_id]

    def ids(self) -> list[str]:
        return [t.id for t in self.traces]

    def filter_length(self, min_words_exclusive: int) -> "Corpus":
        """Keep utterances whose reference has strictly more than ``min_words_exclusive`` words."""
        kept = tuple(t for t in self.traces if t.ref_len > min_words_exclusive)
        return Corpus(kept, self.n_layers, self.i_min)


def validate_trace(trace: UtteranceTrace, check_decode: bool = True) -> list[str]:
    """List every broken invariant of ``trace``; an empty list means valid.

    With ``check_decode`` set, layers carrying both posteriors and a hypothesis
    must agree under greedy CTC decoding.
    """
    from .metrics import ctc_greedy_decode

    out = [f"{trace.id}: {v}" for v in trace.tokens.violations()]
    tokens_ok = not out
    n, i_min = trace.n_layers, trace.i_min
    if not 1 <= i_min <= n:
        out.append(f"{trace.id}: i_min={i_min} must satisfy 1 <= i_min <= n_layers={n}")
    got = [lo.index for lo in trace.layers]
    if got != list(range(i_min, n + 1)):
        out.append(
            f"{trace.id}: layers must be contiguous and sorted {i_min}..{n}, got {_span(got)}"
        )

    shape = None
    for lo in trace.layers:
        where = f"{trace.id}: layer {lo.index}"
        if lo.posteriors is None and lo.hypothesis is None:
            out.append(f"{where}: needs posteriors or hypothesis")
            continue
        if lo.posteriors is None:
            continue
        p = lo.posteriors
        if p.ndim != 2 or p.shape[0] < 1:
            out.append(f"{where}: posteriors must be T x C with T >= 1, got shape {p.shape}")
            continue
        if p.shape[1] != trace.tokens.size:
            out.append(f"{where}: posteriors have {p.shape[1]} columns, token table has {trace.tokens.size}")
        if shape is None:
            shape = p.shape
        elif p.shape != shape:
            out.append(f"{where}: posteriors shape {p.shape} differs from {shape} in an earlier layer")
        if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
            out.append(f"{where}: posterior entries must lie in [0, 1]")
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            out.append(
                f"{where}: row normalization failed at frame {int(bad[0])} "
                f"(sum {sums[bad[0]]:.6g}, {bad.size} bad rows)"
            )
        if (
            check_decode
            and tokens_ok
            and lo.hypothesis is not None
            and p.shape[1] == trace.tokens.size
        ):
            decoded = ctc_greedy_decode(p, trace.tokens)
            if decoded != lo.hypothesis:
                out.append(f"{where}: hypothesis {lo.hypothesis!r} != greedy decode {decoded!r}")
    return out


def _span(indices: list[int]) -> str:
    if len(indices) > 8:
        return f"[{', '.join(map(str, indices[:8]))}, ...]"
    return str(indices)
