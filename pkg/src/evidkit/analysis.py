"""Dataset-level analyses over human-annotated evidence."""

from __future__ import annotations

import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from evidkit.corpus import Corpus
from evidkit.textproc import NormConfig, normalize_terms

DEFAULT_BINS = 20


@dataclass
class Histogram:
    bin_edges: list[float]
    counts: list[int]
    normalized: list[float]

    @property
    def total(self) -> int:
        return sum(self.counts)


def _histogram(numerators: Iterable[tuple[int, int]], bins: int) -> Histogram:
    # (num, den) pairs give exact rational positions num/den in [0, 1)
    counts = [0] * bins
    for num, den in numerators:
        counts[min(num * bins // den, bins - 1)] += 1
    total = sum(counts)
    normalized = [c / total for c in counts] if total else [0.0] * bins
    return Histogram(
        bin_edges=[i / bins for i in range(bins + 1)],
        counts=counts,
        normalized=normalized,
    )


def relative_positions(
    corpus: Corpus,
    category_filter: Optional[str] = None,
    anchor: str = "begin",
    note_ids: Optional[set[str]] = None,
) -> list[tuple[int, int]]:
    """Exact relative positions as (numerator, denominator) pairs."""
    if anchor not in ("begin", "midpoint"):
        raise ValueError(f"unknown anchor {anchor!r}")
    wanted = category_filter.strip().lower() if category_filter else None
    out = []
    for note in corpus.notes():
        if wanted is not None and note.category.strip().lower() != wanted:
            continue
        if note_ids is not None and note.note_id not in note_ids:
            continue
        n = len(note.text)
        for ann in note.annotations:
            if anchor == "begin":
                out.append((ann.begin, n))
            else:
                out.append((ann.begin + ann.end, 2 * n))
    return out


def position_distribution(
    corpus: Corpus,
    category_filter: Optional[str] = None,
    bins: int = DEFAULT_BINS,
    anchor: str = "begin",
    note_ids: Optional[set[str]] = None,
) -> Histogram:
    """Histogram of relative evidence positions, normalized over the filtered spans.

    Category matching ignores case. ``note_ids`` restricts the analysis to a
    subset of notes, e.g. the notes shared by two annotation schemes.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    return _histogram(relative_positions(corpus, category_filter, anchor, note_ids), bins)


def lower_median(values: Sequence[float]) -> float:
    ordered = sorted(values)
    return ordered[(len(ordered) - 1) // 2]


@dataclass
class OverlapRow:
    code: str
    span_count: int
    median_overlap: float
    overlaps: list[float]
    description: str = ""


@dataclass
class OverlapReport:
    rows: list[OverlapRow]
    skipped_missing_description: int = 0
    warnings: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self):
        return len(self.rows)


def description_overlap(corpus: Corpus, norm: Optional[NormConfig] = None) -> OverlapReport:
    per_code: dict[str, list[float]] = defaultdict(list)
    descriptions: dict[str, str] = {}
    skipped = 0
    warnings = []
    for note in corpus.notes():
        for i, ann in enumerate(note.annotations):
            if not ann.description:
                skipped += 1
                continue
            desc = set(normalize_terms(ann.description, norm))
            if not desc:
                warnings.append(
                    f"note_id={note.note_id} annotation[{i}] code={ann.code}: "
                    f"description {ann.description!r} normalizes to no terms"
                )
                continue
            ev = set(normalize_terms(note.covered_text(ann), norm))
            per_code[ann.key].append(len(ev & desc) / len(desc))
            descriptions.setdefault(ann.key, ann.description)
    rows = [
        OverlapRow(code, len(vals), lower_median(vals), vals, descriptions[code])
        for code, vals in sorted(per_code.items())
    ]
    return OverlapReport(rows, skipped, warnings)


def overlap_histogram(rows: Iterable[OverlapRow], bins: int = 10) -> Histogram:
    """Code counts by median overlap; a median of exactly 1.0 lands in the last bin."""
    counts = [0] * bins
    for row in rows:
        counts[min(int(row.median_overlap * bins), bins - 1)] += 1
    total = sum(counts)
    return Histogram(
        bin_edges=[i / bins for i in range(bins + 1)],
        counts=counts,
        normalized=[c / total for c in counts] if total else [0.0] * bins,
    )


_WS = re.compile(r"\s+")


def fold_surface(text: str) -> str:
    return _WS.sub(" ", text).strip().casefold()


@dataclass
class DiversityRow:
    code: str
    total_occurrences: int
    unique_strings: int
    examples: list[str] = field(default_factory=list)


def diversity(corpus: Corpus, max_examples: int = 3) -> list[DiversityRow]:
    totals: dict[str, int] = defaultdict(int)
    uniques: dict[str, dict[str, str]] = defaultdict(dict)
    for note, ann in corpus.annotations():
        surface = note.covered_text(ann)
        totals[ann.key] += 1
        uniques[ann.key].setdefault(fold_surface(surface), surface)
    return [
        DiversityRow(code, totals[code], len(uniques[code]), list(uniques[code].values())[:max_examples])
        for code in sorted(totals)
    ]


@dataclass
class DuplicateGroup:
    note_id: str
    code: str
    surface: str
    count: int
    positions: list[int]


def duplicate_report(evidence_sets: Iterable) -> list[DuplicateGroup]:
    """Repeated surfaces within each case's extracted evidence.

    Each item needs ``note_id``, ``code`` and ``surfaces``; ``char_spans``,
    when present, supplies the reported positions (else list indices).
    """
    groups = []
    for ev in evidence_sets:
        spans = getattr(ev, "char_spans", None)
        by_surface: dict[str, list[int]] = defaultdict(list)
        for i, surface in enumerate(ev.surfaces):
            key = fold_surface(surface)
            if not key:
                continue
            by_surface[key].append(spans[i][0] if spans else i)
        for key, positions in sorted(by_surface.items()):
            if len(positions) > 1:
                groups.append(DuplicateGroup(str(ev.note_id), str(ev.code), key, len(positions), positions))
    groups.sort(key=lambda g: (g.note_id, g.code, g.surface))
    return groups
