import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evidkit.attribution import (
    AttributionRecord,
    DimensionError,
    PostConfig,
    ThresholdConfig,
    ThresholdError,
    attingrad,
    calibrate_threshold,
    default_grid,
    extract_evidence,
    read_attributions,
    write_attributions,
)


def rec(scores, tokens=None, spans=None, probability=0.5):
    n = len(scores)
    tokens = tokens or [f"t{i}" for i in range(n)]
    spans = spans or [(3 * i, 3 * i + 2) for i in range(n)]
    return AttributionRecord("n1", "I10", tokens, spans, probability, scores=list(scores))


def brute_f1(cases, tau):
    tp = pred = gold = 0
    for r, g in cases:
        sel = {i for i, s in enumerate(r.scores) if s > tau}
        tp += len(sel & g)
        pred += len(sel)
        gold += len(g)
    return Fraction(2 * tp, pred + gold)


class TestAttInGrad:
    def test_hand_computed(self):
        out = attingrad([0.5, 0.3, 0.2], [[3, 4], [0, 0], [1, 0]])
        assert out.tolist() == pytest.approx([2.5, 0.0, 0.2], rel=1e-12)

    def test_zero_gradient(self):
        assert attingrad([0.2, 0.8], np.zeros((2, 5))).tolist() == [0.0, 0.0]

    def test_zero_attention(self):
        assert attingrad([0.0, 0.0], np.ones((2, 5))).tolist() == [0.0, 0.0]

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            attingrad([0.5, 0.5], [[1.0]])

    def test_negative_attention(self):
        with pytest.raises(ValueError):
            attingrad([-0.1], [[1.0]])

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=10), st.floats(0, 100), st.integers(0, 2**32 - 1))
    def test_positive_homogeneity(self, att, c, seed):
        grad = np.random.default_rng(seed).normal(size=(len(att), 3))
        base = attingrad(att, grad)
        scaled = attingrad(np.asarray(att) * c, grad)
        np.testing.assert_allclose(scaled, base * c, rtol=1e-12, atol=1e-300)


class TestCalibrate:
    def test_small_example(self):
        r = rec([0.9, 0.1])
        cfg = calibrate_threshold([(r, {0})], grid=[0.05, 0.5])
        assert cfg.threshold == 0.5
        assert cfg.f1 == 1.0
        assert brute_f1([(r, {0})], 0.05) == Fraction(2, 3)

    def test_single_candidate(self):
        r = rec([0.3, 0.7])
        assert calibrate_threshold([(r, {0, 1})], grid=[0.0]).threshold == 0.0

    def test_tie_goes_to_larger(self):
        r = rec([0.9, 0.1])
        assert calibrate_threshold([(r, {0})], grid=[0.2, 0.3, 0.5]).threshold == 0.5

    def test_errors(self):
        r = rec([0.9, 0.1])
        with pytest.raises(ThresholdError):
            calibrate_threshold([(r, {0})], grid=[])
        with pytest.raises(ThresholdError, match="threshold undefined"):
            calibrate_threshold([(r, set())], grid=[0.1])
        with pytest.raises(ThresholdError):
            calibrate_threshold([], grid=[0.1])
        with pytest.raises(ThresholdError):
            calibrate_threshold([(r, {5})], grid=[0.1])

    def test_per_code(self):
        a = AttributionRecord("n1", "A", ["x", "y"], [(0, 1), (2, 3)], 0.5, scores=[0.9, 0.4])
        b = AttributionRecord("n1", "B", ["x", "y"], [(0, 1), (2, 3)], 0.5, scores=[0.3, 0.1])
        cfg = calibrate_threshold([(a, {0}), (b, {0})], grid=[0.0, 0.2, 0.5], per_code=True)
        assert cfg.per_code == {"A": 0.5, "B": 0.2}
        assert cfg.threshold_for("B") == 0.2
        assert cfg.threshold_for("C") == cfg.threshold

    def test_default_grid_quantiles(self):
        grid = default_grid([np.arange(1000.0)], size=200)
        assert len(grid) == 200 and grid[0] == 0.0 and grid[-1] == 999.0

    @settings(max_examples=60)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        cases = []
        for _ in range(int(rng.integers(1, 6))):
            n = int(rng.integers(1, 15))
            r = rec(rng.random(n).round(2).tolist())
            cases.append((r, {int(i) for i in np.flatnonzero(rng.random(n) < 0.3)}))
        if not any(g for _, g in cases):
            cases[0][1].add(0)
        grid = sorted(set(rng.random(20).round(2).tolist()))
        cfg = calibrate_threshold(cases, grid=grid)
        f1s = {t: brute_f1(cases, t) for t in grid}
        best = max(f1s.values())
        assert f1s[cfg.threshold] == best
        assert cfg.threshold == max(t for t, f in f1s.items() if f == best)

    def test_threshold_json(self):
        cfg = ThresholdConfig(0.25, [0.1, 0.25], 0.8, per_code={"I10": 0.1})
        assert ThresholdConfig.from_json(json.loads(json.dumps(cfg.to_json()))) == cfg


class TestExtract:
    def test_basic(self):
        assert extract_evidence(rec([2.5, 0.0, 0.2]), 0.1).token_ids == {0, 2}

    def test_strict_inequality(self):
        assert extract_evidence(rec([0.1, 0.2]), 0.1).token_ids == {1}

    def test_all_below(self):
        ev = extract_evidence(rec([0.1, 0.05]), 0.5)
        assert ev.token_ids == frozenset() and ev.surfaces == []

    def test_from_gradients(self):
        r = AttributionRecord("n", "c", ["a", "b", "c"], [(0, 1), (2, 3), (4, 5)], 0.1,
                              attention=[0.5, 0.3, 0.2], input_grad=[[3, 4], [0, 0], [1, 0]])
        assert extract_evidence(r, 0.1).token_ids == {0, 2}

    def test_word_expansion_with_text(self):
        text = "took aspirin daily"
        r = AttributionRecord("n", "c", ["took", "Ġas", "pirin", "Ġdaily"],
                              [(0, 4), (5, 7), (7, 12), (13, 18)], 0.5, scores=[0.0, 0.1, 0.9, 0.0])
        ev = extract_evidence(r, 0.5, PostConfig(expand_words=True), text=text)
        assert ev.char_spans == [(5, 12)]
        assert ev.surfaces == ["aspirin"]
        assert ev.token_ids == {1, 2}

    def test_word_expansion_without_text(self):
        r = AttributionRecord("n", "c", ["took", "Ġas", "pirin", "Ġdaily"],
                              [(0, 4), (5, 7), (7, 12), (13, 18)], 0.5, scores=[0.0, 0.1, 0.9, 0.0])
        ev = extract_evidence(r, 0.5, PostConfig(expand_words=True))
        assert ev.char_spans == [(5, 12)]
        assert ev.surfaces == ["aspirin"]

    def test_no_expansion_keeps_fragment(self):
        text = "took aspirin daily"
        r = AttributionRecord("n", "c", ["took", "Ġas", "pirin", "Ġdaily"],
                              [(0, 4), (5, 7), (7, 12), (13, 18)], 0.5, scores=[0.0, 0.1, 0.9, 0.0])
        assert extract_evidence(r, 0.5, text=text).surfaces == ["pirin"]

    def test_drop_punct(self):
        r = rec([0.9, 0.9, 0.9], tokens=["C", ".", "difficile"], spans=[(0, 1), (1, 2), (3, 12)])
        assert extract_evidence(r, 0.5, PostConfig(drop_punct=True)).token_ids == {0, 2}

    def test_dedupe(self):
        text = "HTN and htn and HTN"
        r = rec([0.9, 0.0, 0.9, 0.0, 0.9], tokens=["HTN", "and", "htn", "and", "HTN"],
                spans=[(0, 3), (4, 7), (8, 11), (12, 15), (16, 19)])
        ev = extract_evidence(r, 0.5, PostConfig(dedupe=True), text=text)
        assert ev.surfaces == ["HTN"] and ev.token_ids == {0}
        assert len(extract_evidence(r, 0.5, text=text).surfaces) == 3

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=20), st.floats(0, 1), st.floats(0, 1))
    def test_monotone(self, scores, t1, t2):
        lo, hi = sorted((t1, t2))
        r = rec(scores)
        assert extract_evidence(r, hi).token_ids <= extract_evidence(r, lo).token_ids

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=10), st.floats(0.01, 100), st.floats(0, 5),
           st.integers(0, 2**32 - 1))
    def test_scaled_threshold_same_set(self, att, c, tau, seed):
        grad = np.random.default_rng(seed).normal(size=(len(att), 3)).tolist()
        n = len(att)
        spans = [(2 * i, 2 * i + 1) for i in range(n)]
        r1 = AttributionRecord("n", "c", ["x"] * n, spans, 0.5, attention=att, input_grad=grad)
        r2 = AttributionRecord("n", "c", ["x"] * n, spans, 0.5, attention=[a * c for a in att], input_grad=grad)
        s1, s2 = r1.resolved_scores(), r2.resolved_scores()
        # skip knife-edge ties where rounding decides
        if np.any(np.isclose(s1, tau, rtol=1e-9)):
            return
        assert extract_evidence(r1, tau).token_ids == extract_evidence(r2, tau * c).token_ids


class TestRecordIO:
    def test_round_trip(self, tmp_path):
        recs = [rec([0.1, 0.2]), AttributionRecord("n", "c", ["a"], [(0, 1)], 0.3, attention=[1.0], input_grad=[[2.0]])]
        write_attributions(recs, tmp_path / "a.jsonl")
        back = read_attributions(tmp_path / "a.jsonl")
        assert back == recs

    def test_requires_scores_or_gradients(self):
        with pytest.raises(ValueError):
            AttributionRecord("n", "c", ["a"], [(0, 1)], 0.3)

    def test_probability_range(self):
        with pytest.raises(ValueError):
            rec([0.1], probability=1.5)

    def test_bad_line(self, tmp_path):
        (tmp_path / "a.jsonl").write_text('{"note_id": 1}\n')
        with pytest.raises(ValueError, match=":1:"):
            read_attributions(tmp_path / "a.jsonl")
