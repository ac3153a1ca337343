"""Exit scores, distances and exit criteria.

Every criterion reduces to a boolean vector over layers ``i_min..N``; the
utterance exits at the first layer whose flag is set and at ``N`` otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Union

import numpy as np

from .core import LayerOutput, UtteranceTrace, Vocabulary
from .metrics import levenshtein

EPS = 1e-12
W_EQ_TOL = 1e-9

CONFIDENCE_KINDS = ("confidence_entropy", "confidence_maxprob")
PATIENCE_KINDS = ("patience_ce", "patience_lev")
KINDS = CONFIDENCE_KINDS + PATIENCE_KINDS + ("overlang", "fixed_layer", "combined_max")
CE_TARGETS = ("prev", "curr")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    tau: Optional[float] = None
    rho: Optional[int] = None
    fixed_layer: Optional[int] = None
    children: tuple["StrategyConfig", ...] = ()
    # Which layer's distribution weights the cross-entropy ("prev" = previous layer is the target).
    ce_target: str = "prev"

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if self.kind not in ("fixed_layer", "combined_max") and self.tau is None:
            raise ValueError(f"{self.kind}: tau is required")
        if self.kind in PATIENCE_KINDS + ("overlang",):
            if self.rho is None or int(self.rho) != self.rho or self.rho < 1:
                raise ValueError(f"{self.kind}: rho must be an integer >= 1, got {self.rho!r}")
            object.__setattr__(self, "rho", int(self.rho))
        if self.kind == "fixed_layer" and self.fixed_layer is None:
            raise ValueError("fixed_layer: layer is required")
        if self.kind == "combined_max" and len(self.children) < 2:
            raise ValueError("combined_max needs at least two child strategies")
        if self.ce_target not in CE_TARGETS:
            raise ValueError(f"ce_target must be one of {CE_TARGETS}")
        if self.tau is not None:
            object.__setattr__(self, "tau", float(self.tau))

    @property
    def name(self) -> str:
        if self.kind == "combined_max":
            return "combined_max[" + "+".join(c.label for c in self.children) + "]"
        return self.kind

    @property
    def label(self) -> str:
        """Name plus parameters, e.g. ``overlang(tau=0.8,rho=2)``."""
        if self.kind == "combined_max":
            return self.name
        if self.kind == "fixed_layer":
            return f"fixed_layer(layer={self.fixed_layer})"
        params = [f"tau={self.tau!r}"]
        if self.rho is not None:
            params.append(f"rho={self.rho}")
        if self.kind == "patience_ce" and self.ce_target != "prev":
            params.append(f"ce_target={self.ce_target}")
        return f"{self.kind}({','.join(params)})"

    def to_dict(self) -> dict:
        d: dict = {"kind": self.kind}
        for key in ("tau", "rho", "fixed_layer"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.ce_target != "prev":
            d["ce_target"] = self.ce_target
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyConfig":
        d = dict(d)
        children = tuple(cls.from_dict(c) for c in d.pop("children", ()))
        if "layer" in d:
            d["fixed_layer"] = d.pop("layer")
        unknown = set(d) - {"kind", "tau", "rho", "fixed_layer", "ce_target"}
        if unknown:
            raise ValueError(f"unknown strategy fields: {sorted(unknown)}")
        return cls(children=children, **d)

    @classmethod
    def parse(cls, text: str) -> "StrategyConfig":
        """Parse ``kind:key=value,...``; ``+`` joins children of a combined strategy.

        >>> StrategyConfig.parse("overlang:tau=0.8,rho=2").rho
        2
        >>> StrategyConfig.parse("fixed_layer:17").fixed_layer
        17
        """
        text = text.strip()
        if "+" in text:
            parts = [p for p in text.split("+") if p.strip()]
            if parts and parts[0].strip() == "combined_max":
                parts = parts[1:]
            return cls("combined_max", children=tuple(cls.parse(p) for p in parts))
        kind, _, rest = text.partition(":")
        kind = kind.strip()
        kwargs: dict = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            if not eq:
                if kind == "fixed_layer":
                    key, value = "layer", key
                else:
                    raise ValueError(f"expected key=value in strategy spec, got {item!r}")
            key = key.strip()
            if key == "layer":
                key = "fixed_layer"
            if key in ("rho", "fixed_layer"):
                kwargs[key] = int(value)
            elif key == "tau":
                kwargs[key] = float(value)
            elif key == "ce_target":
                kwargs[key] = value.strip()
            else:
                raise ValueError(f"unknown strategy parameter {key!r}")
        return cls(kind, **kwargs)


@dataclass(frozen=True)
class ExitDecision:
    utterance_id: str
    exit_layer: int
    hypothesis: str
    saved_fraction: float


def _matrix(layer: Union[LayerOutput, np.ndarray]) -> np.ndarray:
    if isinstance(layer, LayerOutput):
        if layer.posteriors is None:
            raise ValueError(f"layer {layer.index} has no posteriors")
        return layer.posteriors
    return np.asarray(layer, dtype=np.float64)


def entropy_score(layer: Union[LayerOutput, np.ndarray]) -> float:
    """Entropy summed over frames and tokens, divided by ``T * C`` (natural log)."""
    p = _matrix(layer)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(p), 0.0)
    return float(-plogp.sum() / p.size)


def maxprob_score(layer: Union[LayerOutput, np.ndarray]) -> float:
    p = _matrix(layer)
    return float(p.max(axis=1).mean())


def ce_distance(curr: np.ndarray, prev: np.ndarray, target: str = "prev") -> float:
    """Frame-averaged cross-entropy between two layers' posteriors.

    With ``target="prev"`` the previous layer supplies the weights and the
    current layer sits inside the log; ``"curr"`` swaps the roles.
    """
    curr = _matrix(curr)
    prev = _matrix(prev)
    if curr.shape != prev.shape:
        raise ValueError(f"ce_distance: shape mismatch {curr.shape} vs {prev.shape}")
    if target == "curr":
        curr, prev = prev, curr
    return float(-(prev * np.log(curr + EPS)).sum() / curr.shape[0])


def lev_distance_norm(hyp_curr: str, hyp_prev: str) -> float:
    """Character edit distance divided by the longer string's length."""
    return levenshtein(hyp_curr, hyp_prev) / max(len(hyp_curr), len(hyp_prev), 1)


def in_vocab_ratio(hyp: str, vocab: Vocabulary) -> float:
    ws = hyp.split()
    if not ws:
        return 0.0
    return sum(w in vocab for w in ws) / len(ws)


class TraceFeatures:
    """Per-layer scores for one trace, computed lazily and cached.

    Arrays are indexed by ``layer - i_min``. Distance arrays hold ``nan`` at
    position 0 since ``i_min`` has no predecessor.
    """

    def __init__(self, trace: UtteranceTrace, vocab: Optional[Vocabulary] = None):
        self.trace = trace
        self.vocab = vocab
        self._ce: dict[str, np.ndarray] = {}

    @property
    def n(self) -> int:
        return len(self.trace.layers)

    def _posteriors(self) -> list[np.ndarray]:
        out = []
        for lo in self.trace.layers:
            if lo.posteriors is None:
                raise ValueError(f"{self.trace.id}: layer {lo.index} has no posteriors")
            out.append(lo.posteriors)
        return out

    @cached_property
    def hypotheses(self) -> list[str]:
        return [self.trace.hypothesis(i) for i in self.trace.layer_indices]

    @cached_property
    def entropy(self) -> np.ndarray:
        return np.array([entropy_score(p) for p in self._posteriors()])

    @cached_property
    def maxprob(self) -> np.ndarray:
        return np.array([maxprob_score(p) for p in self._posteriors()])

    def ce(self, target: str = "prev") -> np.ndarray:
        if target not in self._ce:
            ps = self._posteriors()
            d = np.full(len(ps), np.nan)
            for k in range(1, len(ps)):
                d[k] = ce_distance(ps[k], ps[k - 1], target)
            self._ce[target] = d
        return self._ce[target]

    @cached_property
    def lev(self) -> np.ndarray:
        hyps = self.hypotheses
        d = np.full(len(hyps), np.nan)
        for k in range(1, len(hyps)):
            d[k] = lev_distance_norm(hyps[k], hyps[k - 1])
        return d

    @cached_property
    def in_vocab(self) -> np.ndarray:
        if self.vocab is None:
            raise ValueError("overlang needs a vocabulary")
        return np.array([in_vocab_ratio(h, self.vocab) for h in self.hypotheses])


def _patience_flags(dist: np.ndarray, tau: float, rho: int) -> np.ndarray:
    ok = np.zeros(dist.size, dtype=bool)
    ok[1:] = dist[1:] < tau
    flags = np.zeros(dist.size, dtype=bool)
    # Window j in [k - rho, k] compares j with j - 1, so k - rho must be >= 1.
    for k in range(rho + 1, dist.size):
        flags[k] = ok[k - rho : k + 1].all()
    return flags


def _overlang_flags(w: np.ndarray, tau: float, rho: int) -> np.ndarray:
    flags = w >= tau
    for k in range(rho, w.size):
        if not flags[k] and np.all(np.abs(w[k - rho : k] - w[k]) <= W_EQ_TOL):
            flags[k] = True
    return flags


def exit_flags(cfg: StrategyConfig, feats: TraceFeatures) -> np.ndarray:
    """Boolean exit indicator for every layer ``i_min..N`` of ``feats.trace``."""
    kind = cfg.kind
    if kind == "confidence_entropy":
        return feats.entropy < cfg.tau
    if kind == "confidence_maxprob":
        return feats.maxprob > cfg.tau
    if kind == "patience_ce":
        return _patience_flags(feats.ce(cfg.ce_target), cfg.tau, cfg.rho)
    if kind == "patience_lev":
        return _patience_flags(feats.lev, cfg.tau, cfg.rho)
    if kind == "overlang":
        return _overlang_flags(feats.in_vocab, cfg.tau, cfg.rho)
    if kind == "fixed_layer":
        tr = feats.trace
        if not tr.i_min <= cfg.fixed_layer <= tr.n_layers:
            raise ValueError(
                f"fixed layer {cfg.fixed_layer} outside [{tr.i_min}, {tr.n_layers}]"
            )
        flags = np.zeros(feats.n, dtype=bool)
        flags[cfg.fixed_layer - tr.i_min] = True
        return flags
    if kind == "combined_max":
        flags = np.zeros(feats.n, dtype=bool)
        for child in cfg.children:
            flags |= exit_flags(child, feats)
        return flags
    raise ValueError(f"unknown strategy kind {kind!r}")


def exit_layer(cfg: StrategyConfig, feats: TraceFeatures) -> int:
    flags = exit_flags(cfg, feats)
    hits = np.flatnonzero(flags)
    tr = feats.trace
    return tr.i_min + int(hits[0]) if hits.size else tr.n_layers


def _decision(trace: UtteranceTrace, layer: int, feats: Optional[TraceFeatures] = None) -> ExitDecision:
    hyp = feats.hypotheses[layer - trace.i_min] if feats is not None else trace.hypothesis(layer)
    return ExitDecision(trace.id, layer, hyp, (trace.n_layers - layer) / trace.n_layers)


def decide(
    trace: UtteranceTrace,
    cfg: StrategyConfig,
    vocab: Optional[Vocabulary] = None,
    feats: Optional[TraceFeatures] = None,
) -> ExitDecision:
    """Apply any strategy to one trace."""
    if feats is None:
        feats = TraceFeatures(trace, vocab)
    return _decision(trace, exit_layer(cfg, feats), feats)


def confidence_exit(trace: UtteranceTrace, cfg: StrategyConfig) -> ExitDecision:
    if cfg.kind not in CONFIDENCE_KINDS:
        raise ValueError(f"confidence_exit got a {cfg.kind} config")
    return decide(trace, cfg)


def patience_exit(trace: UtteranceTrace, cfg: StrategyConfig) -> ExitDecision:
    if cfg.kind not in PATIENCE_KINDS:
        raise ValueError(f"patience_exit got a {cfg.kind} config")
    return decide(trace, cfg)


def overlang_exit(trace: UtteranceTrace, cfg: StrategyConfig, vocab: Vocabulary) -> ExitDecision:
    if cfg.kind != "overlang":
        raise ValueError(f"overlang_exit got a {cfg.kind} config")
    return decide(trace, cfg, vocab)


def fixed_layer_exit(trace: UtteranceTrace, layer: int) -> ExitDecision:
    if not trace.i_min <= layer <= trace.n_layers:
        raise ValueError(f"fixed layer {layer} outside [{trace.i_min}, {trace.n_layers}]")
    return _decision(trace, layer)


def combined_exit(
    trace: UtteranceTrace,
    cfgs: Sequence[StrategyConfig],
    vocab: Optional[Vocabulary] = None,
) -> ExitDecision:
    """Exit at the first layer where any child criterion fires."""
    return decide(trace, StrategyConfig("combined_max", children=tuple(cfgs)), vocab)
