import json

import pytest

from earlyexit.core import Corpus
from earlyexit.criteria import StrategyConfig, decide
from earlyexit.traceio import (
    TraceFormatError,
    TraceValidationError,
    dumps_trace,
    load_corpus,
    load_vocabulary,
    save_corpus,
    trace_to_dict,
)

from .conftest import make_trace


def test_round_trip(tmp_path, small_corpus):
    path = tmp_path / "c.jsonl"
    save_corpus(small_corpus, path)
    assert load_corpus(path) == small_corpus


def test_gzip_round_trip(tmp_path, small_corpus):
    path = tmp_path / "c.jsonl.gz"
    save_corpus(small_corpus, path)
    assert load_corpus(path) == small_corpus


def test_serialize_is_stable(tmp_path, small_corpus):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_corpus(small_corpus, a)
    save_corpus(load_corpus(a), b)
    assert a.read_bytes() == b.read_bytes()


def test_schema_keys(small_corpus):
    obj = json.loads(dumps_trace(small_corpus.traces[0]))
    assert set(obj) == {"id", "reference", "n_layers", "i_min", "tokens", "layers"}
    assert set(obj["tokens"]) == {"symbols", "blank", "delimiter"}
    assert set(obj["layers"][0]) == {"i", "hyp", "posteriors"}


def test_malformed_line_cites_line_number(tmp_path, small_corpus):
    path = tmp_path / "bad.jsonl"
    lines = [dumps_trace(t) for t in small_corpus.traces[:3]]
    lines[1] = lines[1][:50]
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(TraceFormatError, match=r":2:"):
        load_corpus(path)


def test_strict_rejects_lenient_drops(tmp_path):
    good = make_trace(["a b"] * 3, reference="a b", utt_id="good")
    bad = trace_to_dict(make_trace(["a b"] * 3, reference="a b", utt_id="bad"))
    bad["layers"][1]["i"] = 99
    path = tmp_path / "mixed.jsonl"
    path.write_text(dumps_trace(good) + "\n" + json.dumps(bad) + "\n")
    with pytest.raises(TraceValidationError, match="bad"):
        load_corpus(path)
    assert load_corpus(path, strict=False).ids() == ["good"]


def test_hypothesis_only_layers(tmp_path, text_corpus, vocab):
    path = tmp_path / "text.jsonl"
    save_corpus(Corpus.from_traces(text_corpus.traces[:5]), path)
    corpus = load_corpus(path)
    tr = corpus.traces[0]
    assert decide(tr, StrategyConfig("overlang", tau=0.8, rho=2), vocab).exit_layer >= 10
    assert decide(tr, StrategyConfig("patience_lev", tau=0.1, rho=2)).exit_layer >= 10
    with pytest.raises(ValueError):
        decide(tr, StrategyConfig("confidence_maxprob", tau=0.9))


def test_vocabulary_file(tmp_path):
    path = tmp_path / "words.txt"
    path.write_text("Hello\nworld\n\n")
    v = load_vocabulary(path)
    assert "hello" in v and len(v) == 2
