"""Hyperparameter sweeps over exit strategies and CSV reporting."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import Corpus, Vocabulary
from .criteria import KINDS, StrategyConfig, TraceFeatures, exit_layer
from .oracle import DEFAULT_LENGTH_FILTER, OracleCurve, profile

TRADEOFF_HEADER = ("strategy", "tau", "rho", "saved_fraction", "wer", "mean_exit_layer", "overthinking_rate")
ORACLE_HEADER = ("budget", "saved_fraction", "total_errors", "wer")
TRADEOFF_FILE = "tradeoffs.csv"
ORACLE_FILE = "oracle.csv"


def value_range(start: float, stop: float, step: float) -> tuple[float, ...]:
    """Inclusive arithmetic range with values rounded to 10 decimals."""
    n = int(round((stop - start) / step)) + 1
    return tuple(round(start + k * step, 10) for k in range(n))


@dataclass(frozen=True)
class StrategyGrid:
    """One strategy kind crossed with its τ and ρ grids.

    ``extra`` holds fixed fields passed to every config (``ce_target``,
    ``children`` for combined strategies, ``fixed_layer``).
    """

    kind: str
    taus: tuple[float, ...] = ()
    rhos: tuple[int, ...] = ()
    extra: dict = field(default_factory=dict)

    def configs(self) -> list[StrategyConfig]:
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}")
        if self.kind in ("combined_max", "fixed_layer") and not self.taus:
            return [StrategyConfig(self.kind, **self.extra)]
        if not self.taus:
            raise ValueError(f"{self.kind}: empty tau grid")
        needs_rho = self.kind.startswith("patience") or self.kind == "overlang"
        if needs_rho and not self.rhos:
            raise ValueError(f"{self.kind}: empty rho grid")
        rhos = self.rhos if needs_rho else (None,)
        return [StrategyConfig(self.kind, tau=t, rho=r, **self.extra) for t in self.taus for r in rhos]

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyGrid":
        d = dict(d)
        kind = d.pop("kind")
        taus = _grid_values(d.pop("tau", ()))
        rhos = tuple(int(r) for r in _grid_values(d.pop("rho", ())))
        extra = {}
        if "children" in d:
            extra["children"] = tuple(StrategyConfig.from_dict(c) for c in d.pop("children"))
        if "layer" in d or "fixed_layer" in d:
            extra["fixed_layer"] = int(d.pop("layer", d.pop("fixed_layer", None)))
        if "ce_target" in d:
            extra["ce_target"] = d.pop("ce_target")
        if d:
            raise ValueError(f"unknown fields in {kind} grid: {sorted(d)}")
        return cls(kind, taus, rhos, extra)


def _grid_values(spec) -> tuple[float, ...]:
    if isinstance(spec, dict):
        return value_range(spec["start"], spec["stop"], spec["step"])
    if isinstance(spec, (int, float)):
        return (spec,)
    return tuple(spec)


def default_grids() -> tuple[StrategyGrid, ...]:
    ranks = (1, 2, 3, 4, 5)
    return (
        StrategyGrid("confidence_entropy", value_range(0.002, 0.006, 0.0005)),
        StrategyGrid("confidence_maxprob", value_range(0.93, 0.97, 0.005)),
        StrategyGrid("patience_ce", value_range(0.1, 0.5, 0.1), ranks),
        StrategyGrid("patience_lev", (0.05, 0.07, 0.1, 0.15, 0.2), ranks),
        StrategyGrid("overlang", value_range(0.6, 0.95, 0.025), (2,)),
    )


@dataclass(frozen=True)
class SweepSpec:
    strategies: tuple[StrategyGrid, ...] = field(default_factory=default_grids)
    length_filter: int = DEFAULT_LENGTH_FILTER
    vocab_path: Optional[str] = None
    output_path: Optional[str] = None
    fixed_layers: bool = True

    def configs(self) -> list[StrategyConfig]:
        if not self.strategies:
            raise ValueError("sweep has no strategies")
        return [cfg for grid in self.strategies for cfg in grid.configs()]

    def needs_vocab(self) -> bool:
        return any(_uses_overlang(cfg) for cfg in self.configs())

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        d = dict(d)
        grids = d.pop("strategies", None)
        strategies = default_grids() if grids is None else tuple(StrategyGrid.from_dict(g) for g in grids)
        unknown = set(d) - {"length_filter", "vocab_path", "output_path", "fixed_layers"}
        if unknown:
            raise ValueError(f"unknown sweep spec fields: {sorted(unknown)}")
        return cls(strategies, **d)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SweepSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _uses_overlang(cfg: StrategyConfig) -> bool:
    return cfg.kind == "overlang" or any(_uses_overlang(c) for c in cfg.children)


@dataclass(frozen=True)
class TradeoffRecord:
    strategy: str
    tau: Optional[float]
    rho: Optional[int]
    saved_fraction: float
    wer: float
    mean_exit_layer: float
    overthinking_rate: float
    config: StrategyConfig = field(compare=False, repr=False)

    def sort_key(self):
        return (
            self.strategy,
            -math.inf if self.tau is None else self.tau,
            -1 if self.rho is None else self.rho,
            self.mean_exit_layer,
        )


def _utterance_rows(args) -> tuple[list[int], list[int], int]:
    """Exit layer per config, errors per layer and reference length for one trace."""
    trace, configs, vocab = args
    feats = TraceFeatures(trace, vocab)
    prof = profile(trace)
    return [exit_layer(cfg, feats) for cfg in configs], list(prof.errors), prof.ref_len


def evaluate_configs(
    corpus: Corpus,
    configs: Sequence[StrategyConfig],
    vocab: Optional[Vocabulary] = None,
    jobs: int = 1,
) -> list[TradeoffRecord]:
    """One record per config, aggregated over every utterance of ``corpus``."""
    if not len(corpus):
        raise ValueError("no utterances to evaluate")
    work = [(tr, configs, vocab) for tr in corpus]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_utterance_rows, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        rows = [_utterance_rows(w) for w in work]

    exits = np.array([r[0] for r in rows], dtype=np.int64)  # (M, K)
    errors = np.array([r[1] for r in rows], dtype=np.int64)  # (M, layers)
    ref_words = int(sum(r[2] for r in rows))
    n, i_min = corpus.n_layers, corpus.i_min
    m = len(rows)
    utt = np.arange(m)

    # Earlier layer at least as good as the chosen one.
    best_before = np.full((m, errors.shape[1]), np.iinfo(np.int64).max)
    running = np.full(m, np.iinfo(np.int64).max)
    for k in range(errors.shape[1]):
        best_before[:, k] = running
        running = np.minimum(running, errors[:, k])

    records = []
    for j, cfg in enumerate(configs):
        col = exits[:, j] - i_min
        chosen = errors[utt, col]
        total_errors = int(chosen.sum())
        records.append(
            TradeoffRecord(
                strategy=cfg.name,
                tau=cfg.tau,
                rho=cfg.rho,
                saved_fraction=int((n - exits[:, j]).sum()) / (m * n),
                wer=total_errors / max(ref_words, 1),
                mean_exit_layer=int(exits[:, j].sum()) / m,
                overthinking_rate=int((best_before[utt, col] <= chosen).sum()) / m,
                config=cfg,
            )
        )
    return records


def run_sweep(
    corpus: Corpus,
    spec: SweepSpec,
    vocab: Optional[Vocabulary] = None,
    jobs: int = 1,
) -> list[TradeoffRecord]:
    """Evaluate every grid point plus (optionally) every fixed-layer baseline.

    Metrics are computed on utterances longer than ``spec.length_filter`` words.
    """
    configs = spec.configs()
    if spec.fixed_layers:
        configs += [
            StrategyConfig("fixed_layer", fixed_layer=i)
            for i in range(corpus.i_min, corpus.n_layers + 1)
        ]
    if vocab is None and any(_uses_overlang(c) for c in configs):
        raise ValueError("overlang strategies need a vocabulary")
    kept = corpus.filter_length(spec.length_filter) if spec.length_filter > 0 else corpus
    if not len(kept):
        raise ValueError(f"no utterances with more than {spec.length_filter} reference words")
    records = evaluate_configs(kept, configs, vocab, jobs)
    return sorted(records, key=TradeoffRecord.sort_key)


def fixed_layer_wer_at(records: Iterable[TradeoffRecord], mean_exit_layer: float) -> float:
    """WER of the naive fixed-layer curve, linearly interpolated at ``mean_exit_layer``."""
    pts = sorted((r.mean_exit_layer, r.wer) for r in records if r.strategy == "fixed_layer")
    if not pts:
        raise ValueError("no fixed-layer records")
    xs, ys = zip(*pts)
    return float(np.interp(mean_exit_layer, xs, ys))


def beats_fixed_baseline(records: Sequence[TradeoffRecord], min_saved: float = 0.0) -> list[TradeoffRecord]:
    """Strategy records saving at least ``min_saved`` with WER at or below the naive curve."""
    return [
        r
        for r in records
        if r.strategy != "fixed_layer"
        and r.saved_fraction >= min_saved
        and r.wer <= fixed_layer_wer_at(records, r.mean_exit_layer)
    ]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{x:.6f}"


def _fmt_param(x) -> str:
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(round(float(x), 10))


def write_tradeoffs(records: Iterable[TradeoffRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    rows = sorted(records, key=TradeoffRecord.sort_key)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRADEOFF_HEADER)
        for r in rows:
            w.writerow(
                [
                    r.strategy,
                    _fmt_param(r.tau),
                    _fmt_param(r.rho),
                    _fmt(r.saved_fraction),
                    _fmt(r.wer),
                    _fmt(r.mean_exit_layer),
                    _fmt(r.overthinking_rate),
                ]
            )
    return path


def write_oracle(curve: Optional[OracleCurve], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ORACLE_HEADER)
        for p in curve.points if curve is not None else ():
            w.writerow([p.budget, _fmt(p.saved_fraction), p.min_total_errors, _fmt(p.wer)])
    return path


def write_report(
    records: Iterable[TradeoffRecord],
    curve: Optional[OracleCurve],
    path: Union[str, Path],
) -> tuple[Path, Path]:
    """Write ``tradeoffs.csv`` and ``oracle.csv`` into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return write_tradeoffs(records, out / TRADEOFF_FILE), write_oracle(curve, out / ORACLE_FILE)
