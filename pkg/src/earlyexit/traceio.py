"""Trace JSON Lines and vocabulary files.

One utterance per line::

    {"id": str, "reference": str, "n_layers": int, "i_min": int,
     "tokens": {"symbols": [str], "blank": int, "delimiter": int},
     "layers": [{"i": int, "hyp": str | null, "posteriors": [[float]] | null}]}

Paths ending in ``.gz`` are read and written gzip-compressed.
"""

from __future__ import annotations

import gzip
import io
import json
import logging
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from .core import Corpus, LayerOutput, TokenTable, UtteranceTrace, Vocabulary, validate_trace

log = logging.getLogger(__name__)

PathLike = Union[str, Path]


class TraceFormatError(ValueError):
    """A trace file line that does not parse into an utterance."""


class TraceValidationError(ValueError):
    def __init__(self, violations: dict[str, list[str]]):
        self.violations = violations
        ids = ", ".join(sorted(violations)[:10])
        more = "" if len(violations) <= 10 else f" (+{len(violations) - 10} more)"
        first = next(iter(violations.values()))[0]
        super().__init__(f"invalid traces: {ids}{more}; first problem: {first}")


def _open(path: PathLike, mode: str) -> IO[str]:
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.GzipFile(path, mode[0] + "b", mtime=0), encoding="utf-8")
    return open(path, mode, encoding="utf-8", newline="\n")


def trace_to_dict(trace: UtteranceTrace) -> dict:
    return {
        "id": trace.id,
        "reference": trace.reference,
        "n_layers": trace.n_layers,
        "i_min": trace.i_min,
        "tokens": {
            "symbols": list(trace.tokens.symbols),
            "blank": trace.tokens.blank_index,
            "delimiter": trace.tokens.delimiter_index,
        },
        "layers": [
            {
                "i": lo.index,
                "hyp": lo.hypothesis,
                "posteriors": None if lo.posteriors is None else lo.posteriors.tolist(),
            }
            for lo in trace.layers
        ],
    }


def trace_from_dict(obj: dict) -> UtteranceTrace:
    tok = obj["tokens"]
    layers = tuple(
        LayerOutput(int(lo["i"]), lo.get("posteriors"), lo.get("hyp")) for lo in obj["layers"]
    )
    return UtteranceTrace(
        id=str(obj["id"]),
        reference=obj["reference"],
        tokens=TokenTable(tuple(tok["symbols"]), int(tok["blank"]), int(tok["delimiter"])),
        layers=layers,
        n_layers=int(obj["n_layers"]),
        i_min=int(obj["i_min"]),
    )


def dumps_trace(trace: UtteranceTrace) -> str:
    return json.dumps(trace_to_dict(trace), separators=(",", ":"), ensure_ascii=False)


def iter_traces(path: PathLike) -> Iterator[tuple[int, UtteranceTrace]]:
    """Yield ``(line number, trace)``; blank lines are skipped."""
    with _open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield lineno, trace_from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise TraceFormatError(f"{path}:{lineno}: {type(exc).__name__}: {exc}") from exc


def load_corpus(path: PathLike, strict: bool = True) -> Corpus:
    """Read and validate a trace file.

    Strict mode raises on the first file with any invalid trace (decode
    consistency included). Lenient mode skips the decode check and drops
    invalid traces with a warning.
    """
    traces = []
    bad: dict[str, list[str]] = {}
    for lineno, tr in iter_traces(path):
        problems = validate_trace(tr, check_decode=strict)
        if problems:
            if not strict:
                log.warning("%s:%d: dropping %s: %s", path, lineno, tr.id, problems[0])
            bad[tr.id] = problems
            continue
        traces.append(tr)
    if bad and strict:
        raise TraceValidationError(bad)
    if not traces:
        raise TraceFormatError(f"{path}: no valid traces")
    return Corpus.from_traces(traces)


def save_corpus(corpus: Union[Corpus, Iterable[UtteranceTrace]], path: PathLike) -> None:
    with _open(path, "w") as fh:
        for tr in corpus:
            fh.write(dumps_trace(tr))
            fh.write("\n")


def load_vocabulary(path: PathLike) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        return Vocabulary(line.strip() for line in fh)
