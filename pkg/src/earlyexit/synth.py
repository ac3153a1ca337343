"""Deterministic synthetic traces.

Each utterance draws a reference from the vocabulary. Every letter gets one
uniform draw ``u`` and a fixed corruption (substitute, delete or insert); layer
``i`` applies it when ``u < base_error_rate * (1 - improvement_rate) ** (i - i_min)``,
so errors shrink in a nested way as depth grows. Past ``degrade_after`` a
second, independent set of corruptions kicks in at ``degrade_rate``.

Posteriors follow a canonical CTC path (token, blank, token, blank, ...) padded
with blanks. The off-path mass of a frame is ``exp(-sharpness)`` for clean
frames and ``exp(-sharpness * uncertain_scale)`` for corrupted characters,
spread over the other tokens with a sparse Dirichlet draw.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources
from typing import Optional

import numpy as np

from .core import (
    DEFAULT_I_MIN,
    DEFAULT_N_LAYERS,
    Corpus,
    LayerOutput,
    TokenTable,
    UtteranceTrace,
    Vocabulary,
    as_posteriors,
)

SUB, DEL, INS = 0, 1, 2
MAX_OFF_PATH_MASS = 0.45
DIRICHLET_ALPHA = 0.3


def default_vocabulary() -> Vocabulary:
    text = resources.files("earlyexit").joinpath("data/words.txt").read_text(encoding="utf-8")
    return Vocabulary(text.split())


def linear_schedule(start: float, stop: float, n: int) -> tuple[float, ...]:
    return tuple(float(x) for x in np.round(np.linspace(start, stop, n), 10))


@dataclass(frozen=True)
class SynthParams:
    seed: int = 0
    n_utterances: int = 100
    n_layers: int = DEFAULT_N_LAYERS
    i_min: int = DEFAULT_I_MIN
    vocab: Optional[Vocabulary] = None
    ref_len_range: tuple[int, int] = (11, 16)
    base_error_rate: float = 0.3
    improvement_rate: float = 0.2
    degrade_after: Optional[int] = None
    degrade_rate: float = 0.05
    # Per-layer sharpness (inverse temperature) for layers i_min..N; None means linear 3 -> 6.
    posterior_temperature_schedule: Optional[tuple[float, ...]] = None
    uncertain_scale: float = 0.3
    jitter: float = 0.3
    decimals: int = 5
    emit_posteriors: bool = True
    _vocab_words: tuple[str, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.vocab is None:
            object.__setattr__(self, "vocab", default_vocabulary())
        object.__setattr__(self, "ref_len_range", tuple(self.ref_len_range))
        n_sched = self.n_layers - self.i_min + 1
        if self.posterior_temperature_schedule is None:
            sched = linear_schedule(3.0, 6.0, max(n_sched, 1))
        else:
            sched = tuple(float(s) for s in self.posterior_temperature_schedule)
        object.__setattr__(self, "posterior_temperature_schedule", sched)
        object.__setattr__(self, "_vocab_words", tuple(sorted(self.vocab.words)))
        problems = self.violations()
        if problems:
            raise ValueError("invalid synth parameters: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.n_utterances < 1:
            out.append("n_utterances must be >= 1")
        if not 1 <= self.i_min <= self.n_layers:
            out.append(f"need 1 <= i_min <= n_layers, got i_min={self.i_min}, n_layers={self.n_layers}")
        for name in ("base_error_rate", "improvement_rate", "degrade_rate", "uncertain_scale"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                out.append(f"{name} must lie in [0, 1]")
        lo, hi = self.ref_len_range
        if not 1 <= lo <= hi:
            out.append(f"ref_len_range must satisfy 1 <= min <= max, got {self.ref_len_range}")
        if len(self.posterior_temperature_schedule) != self.n_layers - self.i_min + 1:
            out.append(
                f"posterior_temperature_schedule needs {self.n_layers - self.i_min + 1} values "
                f"(layers {self.i_min}..{self.n_layers})"
            )
        if any(s < 0 for s in self.posterior_temperature_schedule):
            out.append("sharpness values must be non-negative")
        if self.degrade_after is not None and not self.i_min <= self.degrade_after <= self.n_layers:
            out.append(f"degrade_after must lie in [{self.i_min}, {self.n_layers}]")
        if self.jitter < 0:
            out.append("jitter must be >= 0")
        if not 1 <= self.decimals <= 12:
            out.append("decimals must lie in [1, 12]")
        letters = set(TokenTable.characters().symbols[2:])
        bad = sorted(w for w in self.vocab.words if not set(w) <= letters)
        if bad:
            out.append(f"vocabulary words outside the character set: {bad[:5]}")
        return out

    @classmethod
    def from_dict(cls, d: dict, vocab: Optional[Vocabulary] = None) -> "SynthParams":
        d = dict(d)
        d.pop("vocab_path", None)
        sched = d.get("posterior_temperature_schedule")
        if isinstance(sched, dict):
            n = d.get("n_layers", DEFAULT_N_LAYERS) - d.get("i_min", DEFAULT_I_MIN) + 1
            d["posterior_temperature_schedule"] = linear_schedule(sched["start"], sched["stop"], n)
        known = {f.name for f in fields(cls) if f.init} - {"vocab"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth parameters: {sorted(unknown)}")
        return cls(vocab=vocab, **d)


def _layer_tokens(ref: str, plan: dict, use1: np.ndarray, use2: np.ndarray) -> list[tuple[str, bool]]:
    """Corrupted character sequence as ``(symbol, uncertain)`` pairs; ``" "`` marks a word break."""
    out: list[tuple[str, bool]] = []
    for k, ch in enumerate(ref):
        if ch == " ":
            out.append((" ", False))
            continue
        if use2[k]:
            op, repl = plan["op2"][k], plan["repl2"][k]
        elif use1[k]:
            op, repl = plan["op1"][k], plan["repl1"][k]
        else:
            out.append((ch, False))
            continue
        if op == SUB:
            out.append((repl, True))
        elif op == INS:
            out.append((ch, False))
            out.append((repl, True))
    # Drop empty words left by deletions.
    cleaned: list[tuple[str, bool]] = []
    for sym, unc in out:
        if sym == " " and (not cleaned or cleaned[-1][0] == " "):
            continue
        cleaned.append((sym, unc))
    while cleaned and cleaned[-1][0] == " ":
        cleaned.pop()
    return cleaned


def _posteriors(
    seq: list[tuple[str, bool]],
    n_frames: int,
    sharpness: float,
    params: SynthParams,
    tokens: TokenTable,
    rng: np.random.Generator,
) -> np.ndarray:
    c = tokens.size
    path = np.full(n_frames, tokens.blank_index, dtype=np.int64)
    uncertain = np.zeros(n_frames, dtype=bool)
    for k, (sym, unc) in enumerate(seq):
        path[2 * k] = tokens.delimiter_index if sym == " " else tokens.index(sym)
        uncertain[2 * k] = unc
    mass = np.exp(-sharpness * np.where(uncertain, params.uncertain_scale, 1.0))
    if params.jitter > 0:
        mass = mass * rng.lognormal(0.0, params.jitter, size=n_frames)
    mass = np.clip(mass, 0.0, MAX_OFF_PATH_MASS)
    spread = rng.dirichlet(np.full(c - 1, DIRICHLET_ALPHA), size=n_frames) * mass[:, None]

    frames = np.zeros((n_frames, c))
    off = np.ones((n_frames, c), dtype=bool)
    off[np.arange(n_frames), path] = False
    frames[off] = np.round(spread, params.decimals).ravel()
    frames[np.arange(n_frames), path] = np.round(1.0 - frames.sum(axis=1), params.decimals)
    return frames


def generate_trace(params: SynthParams, index: int, tokens: Optional[TokenTable] = None) -> UtteranceTrace:
    """Utterance ``index`` of the corpus; depends only on ``(params, index)``."""
    tokens = tokens or TokenTable.characters()
    rng = np.random.default_rng([params.seed, index])
    lo, hi = params.ref_len_range
    n_words = int(rng.integers(lo, hi + 1))
    picks = rng.integers(0, len(params._vocab_words), size=n_words)
    ref = " ".join(params._vocab_words[k] for k in picks)

    letters = tokens.symbols[2:]
    letters = [s for s in letters if s != "'"]
    n = len(ref)
    plan = {
        "u1": rng.random(n),
        "op1": rng.integers(0, 3, size=n),
        "repl1": [letters[k] for k in rng.integers(0, len(letters), size=n)],
        "u2": rng.random(n),
        "op2": rng.integers(0, 3, size=n),
        "repl2": [letters[k] for k in rng.integers(0, len(letters), size=n)],
    }
    # A substitution must change the character.
    for key, opkey in (("repl1", "op1"), ("repl2", "op2")):
        for k, ch in enumerate(ref):
            if plan[key][k] == ch and plan[opkey][k] == SUB:
                plan[key][k] = letters[(letters.index(ch) + 1) % len(letters)]

    seqs = []
    none = np.zeros(n, dtype=bool)
    for i in range(params.i_min, params.n_layers + 1):
        p_i = params.base_error_rate * (1.0 - params.improvement_rate) ** (i - params.i_min)
        use1 = plan["u1"] < p_i
        if params.degrade_after is not None and i > params.degrade_after:
            use2 = plan["u2"] < params.degrade_rate
        else:
            use2 = none
        seqs.append(_layer_tokens(ref, plan, use1, use2))

    n_frames = max(1, max(2 * len(s) for s in seqs))
    layers = []
    for i, seq in zip(range(params.i_min, params.n_layers + 1), seqs):
        hyp = "".join(sym for sym, _ in seq)
        post = None
        if params.emit_posteriors:
            sharp = params.posterior_temperature_schedule[i - params.i_min]
            post = as_posteriors(_posteriors(seq, n_frames, sharp, params, tokens, rng))
        layers.append(LayerOutput(i, post, hyp))
    return UtteranceTrace(
        id=f"synth-{index:05d}",
        reference=ref,
        tokens=tokens,
        layers=tuple(layers),
        n_layers=params.n_layers,
        i_min=params.i_min,
    )


def generate_corpus(params: SynthParams) -> Corpus:
    tokens = TokenTable.characters()
    traces = tuple(generate_trace(params, k, tokens) for k in range(params.n_utterances))
    return Corpus(traces, params.n_layers, params.i_min)
