import numpy as np
import pytest

from earlyexit.core import Corpus, LayerOutput, TokenTable, UtteranceTrace, Vocabulary, validate_trace

from .conftest import TOKENS, make_trace, one_hot_path


def well_formed(i_min=10, n=24):
    layers = [LayerOutput(i, one_hot_path("ab", n_frames=6), "ab") for i in range(i_min, n + 1)]
    return UtteranceTrace("ok", "ab", TOKENS, layers, n_layers=n, i_min=i_min)


def test_well_formed_trace_has_no_violations():
    assert validate_trace(well_formed()) == []


def test_row_normalization_violation():
    tr = well_formed()
    bad = one_hot_path("ab", n_frames=6) * 1.0
    bad[2] = 0.0
    bad[2, 0] = 0.5
    layers = list(tr.layers)
    layers[3] = LayerOutput(13, bad, None)
    problems = validate_trace(UtteranceTrace("x", "ab", TOKENS, layers, 24, 10))
    assert len(problems) == 1
    assert "row normalization" in problems[0]


def test_contiguity_violation():
    layers = [LayerOutput(10, None, "a"), LayerOutput(12, None, "a")]
    problems = validate_trace(UtteranceTrace("gap", "a", TOKENS, layers, n_layers=11, i_min=10))
    assert len(problems) == 1
    assert "contiguous" in problems[0]


def test_decode_mismatch_only_in_strict_mode():
    tr = make_trace(["ab"], reference="ab", posteriors=[one_hot_path("ba")])
    assert any("greedy decode" in p for p in validate_trace(tr))
    assert validate_trace(tr, check_decode=False) == []


def test_mixed_frame_counts_flagged():
    tr = make_trace(["ab", "ab"], reference="ab", posteriors=[one_hot_path("ab"), one_hot_path("ab", n_frames=9)])
    assert any("differs" in p for p in validate_trace(tr))


def test_layer_needs_some_output():
    tr = make_trace([None], reference="a")
    assert any("needs posteriors or hypothesis" in p for p in validate_trace(tr))


def test_token_table_rules():
    assert TokenTable(("a", "a"), 0, 1).violations()
    assert TokenTable(("a", "b"), 0, 0).violations()
    assert TokenTable(("a",), 0, 0).violations()
    assert TokenTable.characters().violations() == []


def test_i_min_range():
    tr = make_trace(["a"], i_min=10)
    bad = UtteranceTrace(tr.id, tr.reference, TOKENS, tr.layers, n_layers=9, i_min=10)
    assert any("i_min" in p for p in validate_trace(bad))


def test_text_normalization():
    tr = make_trace(["  He   LEFT  "], reference=" He Left ")
    assert tr.reference == "he left"
    assert tr.layers[0].hypothesis == "he left"


def test_posteriors_read_only():
    lo = LayerOutput(10, [[0.5, 0.5]], None)
    with pytest.raises(ValueError):
        lo.posteriors[0, 0] = 1.0


def test_hypothesis_falls_back_to_decode():
    tr = make_trace([None], reference="ab", posteriors=[one_hot_path("ab")])
    assert tr.hypothesis(10) == "ab"


def test_vocabulary_is_case_insensitive():
    v = Vocabulary(["Hello", "world"])
    assert "HELLO" in v and "world" in v and "nope" not in v
    with pytest.raises(ValueError):
        Vocabulary([])


def test_corpus_rejects_duplicates_and_mixed_geometry():
    a = make_trace(["a"], utt_id="a")
    with pytest.raises(ValueError, match="duplicate"):
        Corpus((a, a), a.n_layers, a.i_min)
    b = make_trace(["a", "a"], utt_id="b")
    with pytest.raises(ValueError):
        Corpus.from_traces([a, b])


def test_filter_length_is_strict():
    short = make_trace(["a"], reference=" ".join(["w"] * 10), utt_id="s")
    long = make_trace(["a"], reference=" ".join(["w"] * 11), utt_id="l")
    kept = Corpus.from_traces([short, long]).filter_length(10)
    assert kept.ids() == ["l"]


def test_layer_equality_compares_arrays():
    p = np.eye(2)
    assert LayerOutput(1, p, "a") == LayerOutput(1, p.copy(), "a")
    assert LayerOutput(1, p, "a") != LayerOutput(1, p[::-1], "a")
