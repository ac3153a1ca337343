"""Overthinking analytics and the optimal early-exit trade-off bound.

The bound answers: if every utterance could pick its exit layer knowing the
errors of all layers, what is the fewest total word errors reachable for each
total number of skipped layers? Each utterance contributes one choice of
``(N - l, errors at l)``, which makes this a multiple-choice knapsack solved
exactly over the integer skipped-layer axis.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import Corpus, UtteranceTrace
from .criteria import ExitDecision
from .metrics import corpus_wer, word_errors

DEFAULT_LENGTH_FILTER = 10
PLATEAU_TOL = 1e-6


@dataclass(frozen=True)
class LayerErrorProfile:
    utterance_id: str
    ref_len: int
    errors: tuple[int, ...]
    i_min: int
    n_layers: int

    def __post_init__(self):
        object.__setattr__(self, "errors", tuple(int(e) for e in self.errors))
        if len(self.errors) != self.n_layers - self.i_min + 1:
            raise ValueError(
                f"{self.utterance_id}: {len(self.errors)} error counts for layers "
                f"{self.i_min}..{self.n_layers}"
            )
        if any(e < 0 for e in self.errors):
            raise ValueError(f"{self.utterance_id}: negative error count")

    def __getitem__(self, layer: int) -> int:
        if not self.i_min <= layer <= self.n_layers:
            raise KeyError(layer)
        return self.errors[layer - self.i_min]

    @property
    def errors_per_layer(self) -> dict[int, int]:
        return {self.i_min + k: e for k, e in enumerate(self.errors)}

    @property
    def last(self) -> int:
        return self.errors[-1]


Profiles = Union[Corpus, Sequence[LayerErrorProfile]]


def profile(trace: UtteranceTrace) -> LayerErrorProfile:
    errs = [word_errors(trace.hypothesis(i), trace.reference)[0] for i in trace.layer_indices]
    return LayerErrorProfile(trace.id, trace.ref_len, tuple(errs), trace.i_min, trace.n_layers)


def profiles_of(data: Profiles, length_filter: int = 0) -> list[LayerErrorProfile]:
    """Profiles for a corpus (or pass-through), keeping references longer than ``length_filter`` words."""
    if isinstance(data, Corpus):
        profs = [profile(t) for t in data]
    else:
        profs = list(data)
    if length_filter > 0:
        profs = [p for p in profs if p.ref_len > length_filter]
    return profs


def overthinks(p: LayerErrorProfile) -> bool:
    return any(e <= p.last for e in p.errors[:-1])


def first_best_layer(p: LayerErrorProfile) -> int:
    return p.i_min + int(np.argmin(p.errors))


def overthinking_fraction(data: Profiles) -> float:
    profs = profiles_of(data)
    if not profs:
        raise ValueError("no utterances")
    return sum(overthinks(p) for p in profs) / len(profs)


def first_best_histogram(data: Profiles) -> dict[int, float]:
    """Share of utterances whose best prediction is first reached at each layer."""
    profs = profiles_of(data)
    if not profs:
        raise ValueError("no utterances")
    counts = Counter(first_best_layer(p) for p in profs)
    p0 = profs[0]
    return {i: counts.get(i, 0) / len(profs) for i in range(p0.i_min, p0.n_layers + 1)}


def degradation_rate(data: Profiles) -> Optional[float]:
    """Among utterances whose best layer comes before the last one, the share where
    the last layer is strictly worse than the best. ``None`` when no utterance qualifies.
    """
    early = [p for p in profiles_of(data) if first_best_layer(p) < p.n_layers]
    if not early:
        return None
    return sum(p.last > min(p.errors) for p in early) / len(early)


@dataclass(frozen=True)
class OraclePoint:
    budget: int
    min_total_errors: int
    wer: float
    saved_fraction: float


@dataclass(frozen=True)
class OracleCurve:
    """Exact-budget optimum: one point per total number of skipped layers."""

    points: tuple[OraclePoint, ...]
    n_utterances: int
    n_layers: int
    total_ref_words: int

    def __len__(self) -> int:
        return len(self.points)

    def at_budget(self, budget: int) -> OraclePoint:
        """Point at the largest budget not exceeding ``budget``."""
        budgets = [p.budget for p in self.points]
        k = int(np.searchsorted(budgets, budget, side="right")) - 1
        if k < 0:
            raise ValueError(f"budget {budget} below the curve's range")
        return self.points[k]

    def pareto(self) -> "OracleCurve":
        """Fewest errors achievable with *at least* each budget skipped (monotone frontier)."""
        out = []
        best = None
        for p in reversed(self.points):
            if best is None or p.min_total_errors < best.min_total_errors:
                best = p
            out.append(OraclePoint(p.budget, best.min_total_errors, best.wer, p.saved_fraction))
        return OracleCurve(tuple(reversed(out)), self.n_utterances, self.n_layers, self.total_ref_words)

    def phases(self) -> dict[str, tuple[int, int] | None]:
        """Budget ranges of the decreasing, plateau and increasing parts of the curve.

        The exact-budget curve is step-shaped, so the parts are read off the
        minimum: (a) runs from budget 0 to the first budget reaching the lowest
        WER, (b) from there to the last budget within ``PLATEAU_TOL`` of it,
        (c) is the rest. A part that does not occur is ``None``.
        """
        wer = np.array([p.wer for p in self.points])
        budgets = [p.budget for p in self.points]
        near = np.flatnonzero(wer - wer.min() <= PLATEAU_TOL)
        first, last = int(near[0]), int(near[-1])
        return {
            "decreasing": (budgets[0], budgets[first]) if first > 0 else None,
            "plateau": (budgets[first], budgets[last]) if last > first else None,
            "increasing": (budgets[last], budgets[-1]) if last < len(wer) - 1 else None,
        }


def dp_optimal_bound(data: Profiles, length_filter: int = DEFAULT_LENGTH_FILTER) -> OracleCurve:
    profs = profiles_of(data, length_filter)
    if not profs:
        raise ValueError(f"no utterances with more than {length_filter} reference words")
    n, i_min = profs[0].n_layers, profs[0].i_min
    span = n - i_min
    max_budget = span * len(profs)
    inf = np.iinfo(np.int64).max // 4
    best = np.full(max_budget + 1, inf, dtype=np.int64)
    best[0] = 0
    reach = 0
    for p in profs:
        nxt = np.full_like(best, inf)
        for k, e in enumerate(p.errors):
            skipped = span - k
            cand = best[: reach + 1] + e
            window = nxt[skipped : skipped + reach + 1]
            np.minimum(window, cand, out=window)
        best = nxt
        reach += span

    total_words = sum(p.ref_len for p in profs)
    denom = len(profs) * n
    points = tuple(
        OraclePoint(s, int(best[s]), int(best[s]) / max(total_words, 1), s / denom)
        for s in range(max_budget + 1)
        if best[s] < inf
    )
    return OracleCurve(points, len(profs), n, total_words)


def _decision_map(decisions: Iterable[ExitDecision]) -> dict[str, ExitDecision]:
    return {d.utterance_id: d for d in decisions}


def strategy_overthinking_rate(data: Profiles, decisions: Iterable[ExitDecision]) -> float:
    """Share of utterances where some layer before the chosen exit was at least as good."""
    profs = profiles_of(data)
    if not profs:
        raise ValueError("no utterances")
    by_id = _decision_map(decisions)
    hits = 0
    for p in profs:
        if p.utterance_id not in by_id:
            raise KeyError(f"no exit decision for utterance {p.utterance_id!r}")
        layer = by_id[p.utterance_id].exit_layer
        chosen = p[layer]
        hits += any(e <= chosen for e in p.errors[: layer - p.i_min])
    return hits / len(profs)


def tradeoff_point(
    corpus: Corpus,
    decisions: Iterable[ExitDecision],
    length_filter: int = DEFAULT_LENGTH_FILTER,
) -> tuple[float, float]:
    """``(mean saved fraction, corpus WER)`` of a decision set over the filtered corpus."""
    kept = corpus.filter_length(length_filter) if length_filter > 0 else corpus
    if not len(kept):
        raise ValueError(f"no utterances with more than {length_filter} reference words")
    by_id = _decision_map(decisions)
    missing = [t.id for t in kept if t.id not in by_id]
    if missing:
        raise KeyError(f"no exit decision for utterances {missing[:5]}")
    skipped = sum(kept.n_layers - by_id[t.id].exit_layer for t in kept)
    saved = skipped / (len(kept) * kept.n_layers)
    wer = corpus_wer((by_id[t.id].hypothesis, t.reference) for t in kept)
    return saved, wer
