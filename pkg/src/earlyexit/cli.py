"""Command-line entry point: ``earlyexit <command> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext
from typing import Optional, Sequence

from .core import Vocabulary, validate_trace
from .criteria import StrategyConfig, TraceFeatures, decide
from .oracle import (
    DEFAULT_LENGTH_FILTER,
    degradation_rate,
    dp_optimal_bound,
    first_best_histogram,
    overthinking_fraction,
    profiles_of,
    strategy_overthinking_rate,
    tradeoff_point,
)
from .sweep import SweepSpec, beats_fixed_baseline, run_sweep, write_oracle, write_report
from .synth import SynthParams, default_vocabulary, generate_corpus
from .traceio import iter_traces, load_corpus, load_vocabulary, save_corpus

log = logging.getLogger("earlyexit")


def _vocab(path: Optional[str]) -> Vocabulary:
    return load_vocabulary(path) if path else default_vocabulary()


def _out(path: Optional[str]):
    if path in (None, "-"):
        return nullcontext(sys.stdout)
    return open(path, "w", encoding="utf-8", newline="")


def cmd_validate(args) -> int:
    n_bad = n = 0
    for lineno, tr in iter_traces(args.trace):
        n += 1
        problems = validate_trace(tr, check_decode=not args.lenient)
        if problems:
            n_bad += 1
            for p in problems:
                print(f"line {lineno}: {p}")
    print(f"{n} traces, {n_bad} invalid")
    return 1 if n_bad else 0


def cmd_gen(args) -> int:
    raw: dict = {}
    if args.params:
        with open(args.params, encoding="utf-8") as fh:
            raw = json.load(fh)
    vocab_path = args.vocab or raw.get("vocab_path")
    for key in ("seed", "n_utterances", "degrade_after"):
        value = getattr(args, key)
        if value is not None:
            raw[key] = value
    params = SynthParams.from_dict(raw, vocab=_vocab(vocab_path))
    corpus = generate_corpus(params)
    save_corpus(corpus, args.output)
    log.info("wrote %d traces to %s", len(corpus), args.output)
    return 0


def cmd_analyze(args) -> int:
    corpus = load_corpus(args.trace, strict=not args.lenient)
    profs = profiles_of(corpus, args.length_filter)
    if not profs:
        raise ValueError(f"no utterances with more than {args.length_filter} reference words")
    deg = degradation_rate(profs)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["utterances", len(profs)])
        w.writerow(["overthinking_fraction", f"{overthinking_fraction(profs):.6f}"])
        w.writerow(["degradation_rate", "" if deg is None else f"{deg:.6f}"])
        w.writerow([])
        w.writerow(["layer", "first_best_share"])
        for layer, share in first_best_histogram(profs).items():
            w.writerow([layer, f"{share:.6f}"])
    return 0


def cmd_oracle(args) -> int:
    corpus = load_corpus(args.trace, strict=not args.lenient)
    curve = dp_optimal_bound(corpus, args.length_filter)
    if args.output in (None, "-"):
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["budget", "saved_fraction", "total_errors", "wer"])
        for p in curve.points:
            w.writerow([p.budget, f"{p.saved_fraction:.6f}", p.min_total_errors, f"{p.wer:.6f}"])
    else:
        write_oracle(curve, args.output)
    for name, span in curve.phases().items():
        print(f"phase {name}: {'-' if span is None else f'budgets {span[0]}..{span[1]}'}", file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    corpus = load_corpus(args.trace, strict=not args.lenient)
    cfg = StrategyConfig.parse(args.strategy)
    vocab = _vocab(args.vocab)
    decisions = [decide(tr, cfg, vocab, TraceFeatures(tr, vocab)) for tr in corpus]
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["utterance_id", "exit_layer", "saved_fraction", "hypothesis"])
        for d in decisions:
            w.writerow([d.utterance_id, d.exit_layer, f"{d.saved_fraction:.6f}", d.hypothesis])
    kept = corpus.filter_length(args.length_filter) if args.length_filter > 0 else corpus
    if len(kept):
        saved, wer = tradeoff_point(corpus, decisions, args.length_filter)
        rate = strategy_overthinking_rate(kept, decisions)
        print(
            f"{cfg.label}: saved_fraction={saved:.6f} wer={wer:.6f} overthinking_rate={rate:.6f}"
            f" over {len(kept)} utterances",
            file=sys.stderr,
        )
    return 0


def cmd_sweep(args) -> int:
    spec = SweepSpec.load(args.spec) if args.spec else SweepSpec()
    if args.length_filter is not None:
        spec = SweepSpec(spec.strategies, args.length_filter, spec.vocab_path, spec.output_path, spec.fixed_layers)
    corpus = load_corpus(args.trace, strict=not args.lenient)
    vocab = _vocab(args.vocab or spec.vocab_path)
    records = run_sweep(corpus, spec, vocab, jobs=args.jobs)
    curve = dp_optimal_bound(corpus, spec.length_filter)
    out = args.output or spec.output_path or "report"
    tradeoffs, oracle = write_report(records, curve, out)
    n_fixed = sum(r.strategy == "fixed_layer" for r in records)
    print(f"{len(records) - n_fixed} strategy rows + {n_fixed} fixed-layer rows -> {tradeoffs}")
    print(f"{len(curve)} oracle points -> {oracle}")
    winners = beats_fixed_baseline(records, min_saved=0.10)
    print(f"{len(winners)} strategy points save >= 10% at or below the fixed-layer curve")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earlyexit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def trace_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("trace", help="trace JSONL file (.gz accepted)")
        p.add_argument("--lenient", action="store_true", help="drop invalid traces instead of failing")
        return p

    p = trace_cmd("validate", "check every trace invariant")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gen", help="generate a synthetic trace corpus")
    p.add_argument("params", nargs="?", help="JSON file of synth parameters (defaults if omitted)")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-utterances", type=int)
    p.add_argument("--degrade-after", type=int)
    p.add_argument("--vocab", help="word list, one word per line")
    p.set_defaults(func=cmd_gen)

    p = trace_cmd("analyze", "overthinking statistics and first-best-layer histogram")
    p.add_argument("--length-filter", type=int, default=0)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_analyze)

    p = trace_cmd("oracle", "optimal exit trade-off curve by dynamic programming")
    p.add_argument("--length-filter", type=int, default=DEFAULT_LENGTH_FILTER)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_oracle)

    p = trace_cmd("run", "per-utterance exit decisions for one strategy")
    p.add_argument("--strategy", required=True, help="e.g. overlang:tau=0.8,rho=2 or a+b for combined")
    p.add_argument("--vocab")
    p.add_argument("--length-filter", type=int, default=DEFAULT_LENGTH_FILTER)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_run)

    p = trace_cmd("sweep", "grid sweep over strategies with CSV reports")
    p.add_argument("--spec", help="JSON sweep spec (built-in default grids if omitted)")
    p.add_argument("--vocab")
    p.add_argument("--length-filter", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", help="report directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"earlyexit {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
