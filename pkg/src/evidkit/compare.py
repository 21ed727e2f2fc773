"""Cross-model comparisons over match results."""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from evidkit.matching import DEFAULT_CUTOFF, MATCH_ORDER, MatchResult, MatchType


@dataclass
class AgreementMatrix:
    labels: list[MatchType]
    counts: list[list[int]]
    total: int

    @property
    def diagonal_rate(self) -> float:
        return sum(self.counts[i][i] for i in range(len(self.labels))) / self.total

    def cell(self, a: MatchType, b: MatchType) -> int:
        return self.counts[self.labels.index(a)][self.labels.index(b)]

    def transpose(self) -> "AgreementMatrix":
        n = len(self.labels)
        return AgreementMatrix(self.labels, [[self.counts[j][i] for j in range(n)] for i in range(n)], self.total)

    def long_rows(self) -> list[tuple[str, str, int]]:
        return [(a.value, b.value, self.counts[i][j])
                for i, a in enumerate(self.labels) for j, b in enumerate(self.labels)]


def _keyed(results: Iterable[MatchResult]) -> dict:
    out = {}
    for r in results:
        if r.key in out:
            raise ValueError(f"duplicate result for case {r.key}")
        out[r.key] = r
    return out


def agreement_matrix(results_a: Iterable[MatchResult], results_b: Iterable[MatchResult]) -> AgreementMatrix:
    a, b = _keyed(results_a), _keyed(results_b)
    shared = set(a) & set(b)
    if not shared:
        raise ValueError("no shared (note_id, code) cases between result sets")
    labels = list(MATCH_ORDER)
    counts = [[0] * len(labels) for _ in labels]
    for key in shared:
        counts[labels.index(a[key].match)][labels.index(b[key].match)] += 1
    return AgreementMatrix(labels, counts, len(shared))


@dataclass
class TypeProbability:
    count: int
    mean: Optional[float]
    std: Optional[float]


@dataclass
class ProbabilityByMatch:
    by_type: dict[MatchType, TypeProbability]
    total: int
    global_mean: Optional[float]

    def weighted_mean(self) -> Optional[float]:
        if not self.total:
            return None
        return math.fsum(v.mean * v.count for v in self.by_type.values() if v.count) / self.total


def probability_by_match(results: Iterable[MatchResult]) -> ProbabilityByMatch:
    """Mean and population standard deviation of output probability per match type."""
    groups: dict[MatchType, list[float]] = defaultdict(list)
    for r in results:
        groups[r.match].append(float(r.probability))
    by_type = {}
    for t in MATCH_ORDER:
        vals = groups.get(t, [])
        if vals:
            mean = math.fsum(vals) / len(vals)
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
            by_type[t] = TypeProbability(len(vals), mean, std)
        else:
            by_type[t] = TypeProbability(0, None, None)
    everything = [v for vals in groups.values() for v in vals]
    return ProbabilityByMatch(
        by_type=by_type,
        total=len(everything),
        global_mean=math.fsum(everything) / len(everything) if everything else None,
    )


@dataclass
class LengthBinRow:
    bin: int
    lo: float
    hi: float
    n_cases: int
    recall_mean: float
    recall_std: float
    per_model: dict[str, float]
    source: str


@dataclass
class LengthBins:
    rows: list[LengthBinRow]
    requested_bins: int
    effective_bins: int
    source: str
    note: str = ""


def _quantile_edges(values: Sequence[float], bins: int) -> list[float]:
    edges = np.quantile(np.asarray(values, dtype=float), np.linspace(0.0, 1.0, bins + 1))
    return sorted({float(e) for e in edges})


def _bin_of(value: float, edges: list[float]) -> int:
    # half-open [lo, hi); the last bin is closed on the right
    if len(edges) == 1:
        return 0
    for i in range(len(edges) - 1):
        if value < edges[i + 1]:
            return i
    return len(edges) - 2


def _recall(cases: list[MatchResult], macro: bool) -> Optional[float]:
    gold = [r for r in cases if r.gold]
    if not gold:
        return None
    if not macro:
        return sum(r.predicted for r in gold) / len(gold)
    per_code: dict[str, list[bool]] = defaultdict(list)
    for r in gold:
        per_code[r.key[1]].append(r.predicted)
    return math.fsum(sum(v) / len(v) for v in per_code.values()) / len(per_code)


def recall_by_length(
    multi_model_results: Mapping[str, Sequence[MatchResult]],
    bins: int = 5,
    source: str = "gt_length",
    macro: bool = False,
) -> LengthBins:
    """Code recall per quantile bin of evidence word count, mean and std across models."""
    if source not in ("gt_length", "model_length"):
        raise ValueError(f"unknown source {source!r}")
    if not multi_model_results:
        raise ValueError("need at least one result set")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    attr = "gt_words" if source == "gt_length" else "model_words"
    pooled = [getattr(r, attr) for rs in multi_model_results.values() for r in rs if r.gold]
    if not pooled:
        raise ValueError("no gold cases")
    edges = _quantile_edges(pooled, bins)
    n_bins = max(1, len(edges) - 1)
    binned: dict[str, list[list[MatchResult]]] = {}
    for name, rs in multi_model_results.items():
        slots: list[list[MatchResult]] = [[] for _ in range(n_bins)]
        for r in rs:
            if r.gold:
                slots[_bin_of(getattr(r, attr), edges)].append(r)
        binned[name] = slots
    rows = []
    for i in range(n_bins):
        per_model = {}
        for name in sorted(binned):
            rec = _recall(binned[name][i], macro)
            if rec is not None:
                per_model[name] = rec
        vals = list(per_model.values())
        if vals:
            mean = math.fsum(vals) / len(vals)
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
        else:
            mean = std = float("nan")
        lo = edges[i]
        hi = edges[i + 1] if len(edges) > 1 else edges[0]
        rows.append(LengthBinRow(i, lo, hi, sum(len(b[i]) for b in binned.values()),
                                 mean, std, per_model, source))
    note = ""
    if n_bins < bins:
        note = f"{bins} bins requested, {n_bins} distinct quantile bins after merging tied edges"
    return LengthBins(rows, bins, n_bins, source, note)


@dataclass
class RankRow:
    name: str
    precision: float
    recall: float
    f1: float
    overlap: int
    model_tokens: int
    gt_tokens: int


def micro_prf(results: Iterable[MatchResult]) -> tuple[float, float, float, int, int, int]:
    inter = pred = gold = 0
    for r in results:
        inter += r.n_overlap
        pred += r.n_model
        gold += r.n_gt
    p = inter / pred if pred else 0.0
    rec = inter / gold if gold else 0.0
    f1 = 2 * inter / (pred + gold) if pred + gold else 0.0
    return p, rec, f1, inter, pred, gold


def rank_models(result_sets: Mapping[str, Sequence[MatchResult]]) -> list[RankRow]:
    """Result sets ranked by micro token F1, ties broken by precision then name."""
    if len(result_sets) < 2:
        raise ValueError("ranking needs at least two result sets")
    rows = [RankRow(name, *micro_prf(rs)) for name, rs in result_sets.items()]
    rows.sort(key=lambda r: (-r.f1, -r.precision, r.name))
    return rows


@dataclass
class CodeConfusion:
    tp: int
    fn: int
    fp: int
    total_gold: int
    cutoff: float = DEFAULT_CUTOFF


def code_level_confusion(
    results: Iterable[MatchResult],
    cutoff: float = DEFAULT_CUTOFF,
    false_positives: int = 0,
) -> CodeConfusion:
    """TP/FN over gold cases at ``cutoff``; FP from non-gold rows plus any counted upstream."""
    tp = fn = fp = 0
    for r in results:
        hit = r.probability >= cutoff
        if r.gold:
            tp += hit
            fn += not hit
        else:
            fp += hit
    return CodeConfusion(tp, fn, fp + false_positives, tp + fn, cutoff)
