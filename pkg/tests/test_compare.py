import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evidkit.compare import (
    agreement_matrix,
    code_level_confusion,
    micro_prf,
    probability_by_match,
    rank_models,
    recall_by_length,
)
from evidkit.matching import MATCH_ORDER, MatchConfig, MatchResult, MatchType, evaluate_case
from evidkit.synthkit import random_case


def result(note, code="c", match=MatchType.EXACT, probability=0.5, predicted=None, gold=True,
           gt_words=1, n_gt=2, n_model=2, n_overlap=2):
    return MatchResult(note_id=str(note), code=code, match=match, p=0, r=0, f1=0, iou=0,
                       probability=probability,
                       predicted=probability >= 0.5 if predicted is None else predicted,
                       gold=gold, n_gt=n_gt, n_model=n_model, n_overlap=n_overlap,
                       gt_words=gt_words, model_words=gt_words)


def random_results(seed, n=60, prefix="x"):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        c = random_case(rng)
        c.note_id = f"{prefix}{i}"
        c.gt_words = int(rng.integers(1, 12))
        c.predicted = bool(rng.random() < 0.6)
        out.append(evaluate_case(c, MatchConfig()))
    return out


class TestAgreement:
    def test_identity_is_diagonal(self):
        rs = random_results(1)
        m = agreement_matrix(rs, rs)
        assert m.diagonal_rate == 1.0
        assert sum(map(sum, m.counts)) == len(rs)

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
    def test_transpose(self, s1, s2):
        a, b = random_results(s1), random_results(s2)
        assert agreement_matrix(b, a).counts == agreement_matrix(a, b).transpose().counts

    @given(st.integers(0, 2**32 - 1), st.randoms())
    def test_shuffle_invariant(self, seed, rnd):
        a, b = random_results(seed), random_results(seed + 1)
        shuffled = list(b)
        rnd.shuffle(shuffled)
        assert agreement_matrix(a, shuffled).counts == agreement_matrix(a, b).counts

    def test_only_shared_cases(self):
        a = [result(1), result(2, match=MatchType.EMPTY)]
        b = [result(2, match=MatchType.PARTIAL), result(3)]
        m = agreement_matrix(a, b)
        assert m.total == 1 and m.cell(MatchType.EMPTY, MatchType.PARTIAL) == 1

    def test_no_shared_cases(self):
        with pytest.raises(ValueError):
            agreement_matrix([result(1)], [result(2)])

    def test_long_rows_total(self):
        rs = random_results(2)
        assert sum(r[2] for r in agreement_matrix(rs, rs).long_rows()) == len(rs)


class TestProbability:
    def test_constant(self):
        rs = [result(i, match=t, probability=0.3) for i, t in enumerate(MATCH_ORDER * 3)]
        pm = probability_by_match(rs)
        for t in MATCH_ORDER:
            assert pm.by_type[t].mean == 0.3 and pm.by_type[t].std == 0.0

    def test_missing_type(self):
        pm = probability_by_match([result(1, probability=0.2), result(2, probability=0.4)])
        assert pm.by_type[MatchType.EMPTY].count == 0 and pm.by_type[MatchType.EMPTY].mean is None
        assert pm.by_type[MatchType.EXACT].std == pytest.approx(0.1)

    @given(st.lists(st.tuples(st.sampled_from(MATCH_ORDER), st.floats(0, 1)), min_size=1, max_size=80))
    def test_weighted_mean_is_global_mean(self, items):
        rs = [result(i, match=t, probability=p) for i, (t, p) in enumerate(items)]
        pm = probability_by_match(rs)
        assert abs(pm.weighted_mean() - pm.global_mean) <= 1e-12
        assert sum(v.count for v in pm.by_type.values()) == len(rs)


class TestLength:
    def test_single_bin_is_overall_recall(self):
        sets = {"a": random_results(3), "b": random_results(4)}
        out = recall_by_length(sets, bins=1)
        assert len(out.rows) == 1
        for name, rs in sets.items():
            assert out.rows[0].per_model[name] == pytest.approx(sum(r.predicted for r in rs) / len(rs))

    def test_all_predicted(self):
        rs = [result(i, probability=0.9, gt_words=i % 7 + 1) for i in range(50)]
        out = recall_by_length({"a": rs, "b": rs}, bins=5)
        assert all(r.recall_mean == 1.0 and r.recall_std == 0.0 for r in out.rows)

    def test_tied_edges_merge(self):
        rs = [result(i, gt_words=2) for i in range(10)]
        out = recall_by_length({"a": rs}, bins=5)
        assert out.effective_bins == 1 and "merging" in out.note
        assert out.rows[0].n_cases == 10

    def test_bad_source(self):
        with pytest.raises(ValueError):
            recall_by_length({"a": [result(1)]}, source="tokens")

    def test_macro_recall(self):
        rs = [result(1, code="A", predicted=True), result(2, code="A", predicted=True),
              result(3, code="A", predicted=True), result(4, code="B", predicted=False)]
        assert recall_by_length({"a": rs}, bins=1).rows[0].recall_mean == 0.75
        assert recall_by_length({"a": rs}, bins=1, macro=True).rows[0].recall_mean == 0.5

    @settings(max_examples=40)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_two_model_oracle(self, seed, bins):
        sets = {"a": random_results(seed), "b": random_results(seed + 7)}
        out = recall_by_length(sets, bins=bins)
        pooled = sorted(r.gt_words for rs in sets.values() for r in rs)
        edges = sorted(set(np.quantile(pooled, np.linspace(0, 1, bins + 1)).tolist()))
        assert out.effective_bins == max(1, len(edges) - 1)
        for row in out.rows:
            last = row.bin == out.effective_bins - 1
            vals = []
            for name in sorted(sets):
                inside = [r for r in sets[name]
                          if row.lo <= r.gt_words and (r.gt_words <= row.hi if last else r.gt_words < row.hi)]
                if inside:
                    rec = sum(r.predicted for r in inside) / len(inside)
                    vals.append(rec)
                    assert row.per_model[name] == pytest.approx(rec)
            if vals:
                assert row.recall_mean == pytest.approx(sum(vals) / len(vals))
                assert row.recall_std == pytest.approx(float(np.std(vals)))
        assert sum(r.n_cases for r in out.rows) == sum(len(v) for v in sets.values())


class TestRank:
    def test_dominance(self):
        good = [result(i, n_gt=4, n_model=4, n_overlap=4) for i in range(5)]
        bad = [result(i, n_gt=4, n_model=4, n_overlap=1) for i in range(5)]
        rows = rank_models({"bad": bad, "good": good})
        assert [r.name for r in rows] == ["good", "bad"]
        assert rows[0].f1 == 1.0

    def test_tie_breaks(self):
        a = [result(1, n_gt=4, n_model=2, n_overlap=2)]  # p=1, r=.5, f1=2/3
        b = [result(1, n_gt=2, n_model=4, n_overlap=2)]  # p=.5, r=1, f1=2/3
        assert [r.name for r in rank_models({"b": b, "a": a})] == ["a", "b"]
        assert [r.name for r in rank_models({"y": a, "x": a})] == ["x", "y"]

    def test_needs_two(self):
        with pytest.raises(ValueError):
            rank_models({"a": [result(1)]})

    @given(st.integers(0, 2**32 - 1))
    def test_micro_f1_brute_force(self, seed):
        rs = random_results(seed, n=20)
        inter = sum(r.n_overlap for r in rs)
        total = sum(r.n_model + r.n_gt for r in rs)
        assert micro_prf(rs)[2] == pytest.approx(2 * inter / total)


class TestConfusion:
    def test_hand_tally(self):
        probs = [0.9, 0.5, 0.49, 0.1, 0.7, 0.3, 0.6, 0.2]
        gold = [result(i, probability=p) for i, p in enumerate(probs)]
        extra = [result(100, probability=0.8, gold=False), result(101, probability=0.2, gold=False)]
        cc = code_level_confusion(gold + extra, cutoff=0.5, false_positives=3)
        assert (cc.tp, cc.fn, cc.fp, cc.total_gold) == (4, 4, 4, 8)
