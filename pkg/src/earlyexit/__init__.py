"""Early-exit strategy evaluation over per-layer ASR inference traces."""

from .core import (
    Corpus,
    LayerOutput,
    TokenTable,
    UtteranceTrace,
    Vocabulary,
    validate_trace,
)
from .criteria import (
    ExitDecision,
    StrategyConfig,
    ce_distance,
    combined_exit,
    confidence_exit,
    decide,
    entropy_score,
    fixed_layer_exit,
    in_vocab_ratio,
    lev_distance_norm,
    maxprob_score,
    overlang_exit,
    patience_exit,
)
from .metrics import corpus_wer, ctc_greedy_decode, levenshtein, word_errors
from .oracle import (
    LayerErrorProfile,
    OracleCurve,
    degradation_rate,
    dp_optimal_bound,
    first_best_layer,
    overthinks,
    profile,
    strategy_overthinking_rate,
    tradeoff_point,
)
from .sweep import SweepSpec, TradeoffRecord, run_sweep, write_report
from .synth import SynthParams, generate_corpus
from .traceio import load_corpus, load_vocabulary, save_corpus

__version__ = "0.1.0"
