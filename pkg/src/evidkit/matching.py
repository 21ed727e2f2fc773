"""Five-way match taxonomy between model evidence and ground-truth evidence."""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from evidkit.attribution import AttributionRecord, PostConfig, ThresholdConfig, extract_evidence
from evidkit.corpus import Corpus, normalize_code
from evidkit.report import csv_text
from evidkit.textproc import TokenSpan, align_char_spans, word_count

DEFAULT_K = 10
DEFAULT_CUTOFF = 0.5


class MatchType(str, enum.Enum):
    EMPTY = "empty"
    EXACT = "exact"
    PROXIMATE = "proximate"
    PARTIAL = "partial"
    NO_MATCH = "no_match"


MATCH_ORDER = (MatchType.EMPTY, MatchType.EXACT, MatchType.PROXIMATE, MatchType.PARTIAL, MatchType.NO_MATCH)


class CaseError(ValueError):
    pass


@dataclass(frozen=True)
class MatchConfig:
    k: int = DEFAULT_K
    unit: str = "token"  # "token" or "char"

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if self.unit not in ("token", "char"):
            raise ValueError(f"unknown distance unit {self.unit!r}")


@dataclass
class EvaluationCase:
    note_id: str
    code: str
    gt_spans: Sequence[TokenSpan]
    model_tokens: frozenset[int]
    probability: float = 0.0
    gold: bool = True
    predicted: bool = False
    # char offsets of every model token; only needed for the char distance unit
    token_char_spans: Optional[Sequence[tuple[int, int]]] = None
    gt_surfaces: list[str] = field(default_factory=list)
    model_surfaces: list[str] = field(default_factory=list)
    gt_words: int = 0
    model_words: int = 0

    @property
    def gt_tokens(self) -> set[int]:
        out: set[int] = set()
        for span in self.gt_spans:
            out.update(span.ids())
        return out


def _distance(token: int, span: TokenSpan, case: EvaluationCase, unit: str) -> int:
    if unit == "token":
        if token < span.first:
            return span.first - token
        if token > span.last:
            return token - span.last
        return 0
    spans = case.token_char_spans
    if spans is None:
        raise CaseError("char distance needs token_char_spans")
    tb, te = spans[token]
    sb, se = spans[span.first][0], spans[span.last][1]
    if te <= sb:
        return sb - te
    if tb >= se:
        return tb - se
    return 0


def classify_match(case: EvaluationCase, config: MatchConfig = MatchConfig()) -> MatchType:
    if not case.gt_spans:
        raise CaseError(f"case ({case.note_id}, {case.code}) has no ground truth")
    model = case.model_tokens
    if not model:
        return MatchType.EMPTY
    gt = case.gt_tokens
    if not gt & model:
        return MatchType.NO_MATCH
    if gt == model:
        return MatchType.EXACT
    every_span_hit = all(any(t in span for t in model) for span in case.gt_spans)
    if every_span_hit and all(
        min(_distance(t, s, case, config.unit) for s in case.gt_spans) <= config.k
        for t in model - gt
    ):
        return MatchType.PROXIMATE
    return MatchType.PARTIAL


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    iou: float


def token_prf(case: EvaluationCase) -> PRF:
    if not case.gt_spans:
        raise CaseError(f"case ({case.note_id}, {case.code}) has no ground truth")
    gt, model = case.gt_tokens, set(case.model_tokens)
    inter = len(gt & model)
    p = inter / len(model) if model else 0.0
    r = inter / len(gt)
    f1 = 2 * inter / (len(gt) + len(model))
    iou = inter / len(gt | model)
    return PRF(p, r, f1, iou)


@dataclass
class MatchResult:
    note_id: str
    code: str
    match: MatchType
    p: float
    r: float
    f1: float
    iou: float
    probability: float
    predicted: bool
    gold: bool = True
    n_gt: int = 0
    n_model: int = 0
    n_overlap: int = 0
    gt_words: int = 0
    model_words: int = 0
    gt_surfaces: list[str] = field(default_factory=list)
    model_surfaces: list[str] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, str]:
        return (self.note_id, normalize_code(self.code))

    def to_json(self) -> dict:
        return {
            "note_id": self.note_id, "code": self.code, "match": self.match.value,
            "p": self.p, "r": self.r, "f1": self.f1, "iou": self.iou,
            "probability": self.probability, "predicted": self.predicted, "gold": self.gold,
            "n_gt": self.n_gt, "n_model": self.n_model, "n_overlap": self.n_overlap,
            "gt_words": self.gt_words, "model_words": self.model_words,
            "gt_surfaces": list(self.gt_surfaces), "model_surfaces": list(self.model_surfaces),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MatchResult":
        return cls(
            note_id=str(obj["note_id"]), code=str(obj["code"]), match=MatchType(obj["match"]),
            p=float(obj["p"]), r=float(obj["r"]), f1=float(obj["f1"]), iou=float(obj["iou"]),
            probability=float(obj["probability"]), predicted=bool(obj["predicted"]),
            gold=bool(obj.get("gold", True)),
            n_gt=int(obj.get("n_gt", 0)), n_model=int(obj.get("n_model", 0)),
            n_overlap=int(obj.get("n_overlap", 0)),
            gt_words=int(obj.get("gt_words", 0)), model_words=int(obj.get("model_words", 0)),
            gt_surfaces=list(obj.get("gt_surfaces", [])),
            model_surfaces=list(obj.get("model_surfaces", [])),
        )


def evaluate_case(case: EvaluationCase, config: MatchConfig = MatchConfig()) -> MatchResult:
    match = classify_match(case, config)
    prf = token_prf(case)
    gt = case.gt_tokens
    return MatchResult(
        note_id=case.note_id, code=case.code, match=match,
        p=prf.precision, r=prf.recall, f1=prf.f1, iou=prf.iou,
        probability=case.probability, predicted=case.predicted, gold=case.gold,
        n_gt=len(gt), n_model=len(case.model_tokens), n_overlap=len(gt & case.model_tokens),
        gt_words=case.gt_words, model_words=case.model_words,
        gt_surfaces=list(case.gt_surfaces), model_surfaces=list(case.model_surfaces),
    )


@dataclass
class CaseBatch:
    cases: list[EvaluationCase]
    evidence: list = field(default_factory=list)
    missing_attribution: list[tuple[str, str]] = field(default_factory=list)
    unaligned: list[tuple[str, str]] = field(default_factory=list)
    dropped_spans: int = 0
    false_positives: list[tuple[str, str, float]] = field(default_factory=list)


def gold_cases(corpus: Corpus) -> dict[tuple[str, str], list[tuple[int, int]]]:
    """(note_id, code key) -> sorted unique gold char spans."""
    out: dict[tuple[str, str], set] = {}
    for note, ann in corpus.annotations():
        out.setdefault((note.note_id, ann.key), set()).add((ann.begin, ann.end))
    return {k: sorted(v) for k, v in sorted(out.items())}


def build_cases(
    corpus: Corpus,
    records: Iterable[AttributionRecord],
    threshold: ThresholdConfig | float,
    post: PostConfig = PostConfig(),
    cutoff: float = DEFAULT_CUTOFF,
) -> CaseBatch:
    """Pair every gold (note, code) with its attribution record.

    Gold codes are evaluated whether or not the model predicted them. Gold
    char spans are mapped onto model tokens by overlap; spans falling outside
    the model's token coverage (truncation) are dropped and counted. Records
    without gold annotations are reported as false positives when predicted.
    """
    by_key = {rec.key: rec for rec in records}
    gold = gold_cases(corpus)
    notes = corpus.index.by_note
    batch = CaseBatch(cases=[])
    for (note_id, code), char_spans in gold.items():
        rec = by_key.get((note_id, code))
        if rec is None:
            batch.missing_attribution.append((note_id, code))
            continue
        text = notes[note_id].text
        spans = []
        for b, e in char_spans:
            span = align_char_spans(rec.spans, b, e)
            if span is None:
                batch.dropped_spans += 1
            else:
                spans.append(span)
        if not spans:
            batch.unaligned.append((note_id, code))
            continue
        tau = threshold.threshold_for(code) if isinstance(threshold, ThresholdConfig) else float(threshold)
        ev = extract_evidence(rec, tau, post, text=text)
        batch.evidence.append(ev)
        gt_surfaces = [text[b:e] for b, e in char_spans]
        batch.cases.append(EvaluationCase(
            note_id=note_id, code=rec.code, gt_spans=tuple(spans),
            model_tokens=ev.token_ids, probability=float(rec.probability),
            gold=True, predicted=float(rec.probability) >= cutoff,
            token_char_spans=rec.spans,
            gt_surfaces=gt_surfaces, model_surfaces=list(ev.surfaces),
            gt_words=sum(word_count(s) for s in gt_surfaces),
            model_words=sum(word_count(s) for s in ev.surfaces),
        ))
    for key, rec in sorted(by_key.items()):
        if key not in gold and float(rec.probability) >= cutoff:
            batch.false_positives.append((rec.note_id, rec.code, float(rec.probability)))
    return batch


def match_cases(cases: Iterable[EvaluationCase], config: MatchConfig = MatchConfig()) -> list[MatchResult]:
    return [evaluate_case(c, config) for c in cases]


@dataclass
class MatchDistribution:
    counts: dict[MatchType, int]
    total: int
    at_least_one_fraction: float

    def rows(self) -> list[tuple[str, int, float]]:
        return [
            (t.value, self.counts[t], self.counts[t] / self.total if self.total else 0.0)
            for t in MATCH_ORDER
        ]


def match_counts(results: Iterable) -> MatchDistribution:
    """Counts per match type. Accepts MatchResults, MatchTypes or (case, MatchType) pairs."""
    c: Counter = Counter()
    for item in results:
        if isinstance(item, MatchType):
            t = item
        elif isinstance(item, tuple):
            t = item[1]
        else:
            t = item.match
        c[MatchType(t)] += 1
    total = sum(c.values())
    hit = c[MatchType.EXACT] + c[MatchType.PROXIMATE] + c[MatchType.PARTIAL]
    return MatchDistribution(
        counts={t: c[t] for t in MATCH_ORDER},
        total=total,
        at_least_one_fraction=hit / total if total else 0.0,
    )


NO_MATCH_HEADER = ("note_id", "code", "gt_evidence", "model_evidence", "semantic_match")


def export_no_match(results: Iterable[MatchResult]) -> str:
    """CSV worksheet of NoMatch cases for manual semantic-match labeling (evidence strings only)."""
    rows = [
        (r.note_id, r.code, r.gt_surfaces, r.model_surfaces, "")
        for r in results
        if r.match is MatchType.NO_MATCH
    ]
    return csv_text(NO_MATCH_HEADER, rows)
