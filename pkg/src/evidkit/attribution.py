"""AttInGrad token scores, threshold calibration and evidence extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from evidkit.corpus import normalize_code
from evidkit.textproc import align_char_spans, tokenize

DEFAULT_GRID_SIZE = 200
_SUBWORD_MARKERS = ("Ġ", "▁", "##")


class DimensionError(ValueError):
    pass


class ThresholdError(ValueError):
    pass


def attingrad(attention, input_grad) -> np.ndarray:
    """Attention weight times the L2 norm of the Input x Grad row, per token."""
    att = np.asarray(attention, dtype=float)
    grad = np.asarray(input_grad, dtype=float)
    if att.ndim != 1:
        raise DimensionError("attention must be a vector")
    if grad.ndim == 1 and grad.size == 0:
        grad = grad.reshape(0, 0)
    if grad.ndim != 2 or grad.shape[0] != att.shape[0]:
        raise DimensionError(
            f"attention has {att.shape[0]} entries but input_grad has shape {grad.shape}"
        )
    if np.any(att < 0):
        raise ValueError("attention entries must be non-negative")
    return att * np.sqrt(np.einsum("ij,ij->i", grad, grad))


@dataclass
class AttributionRecord:
    note_id: str
    code: str
    tokens: list[str]
    spans: list[tuple[int, int]]
    probability: float
    attention: Optional[list[float]] = None
    input_grad: Optional[list[list[float]]] = None
    scores: Optional[list[float]] = None

    def __post_init__(self):
        self.note_id = str(self.note_id)
        self.code = str(self.code)
        self.spans = [(int(b), int(e)) for b, e in self.spans]
        n = len(self.tokens)
        if len(self.spans) != n:
            raise DimensionError(f"{self.key}: {n} tokens but {len(self.spans)} spans")
        if self.scores is not None and len(self.scores) != n:
            raise DimensionError(f"{self.key}: {n} tokens but {len(self.scores)} scores")
        if self.scores is None:
            if self.attention is None or self.input_grad is None:
                raise ValueError(f"{self.key}: needs scores or attention + input_grad")
            if len(self.attention) != n:
                raise DimensionError(f"{self.key}: {n} tokens but {len(self.attention)} attention weights")
        if not 0.0 <= float(self.probability) <= 1.0:
            raise ValueError(f"{self.key}: probability {self.probability} outside [0, 1]")

    @property
    def key(self) -> tuple[str, str]:
        return (self.note_id, normalize_code(self.code))

    def resolved_scores(self) -> np.ndarray:
        if self.scores is not None:
            return np.asarray(self.scores, dtype=float)
        return attingrad(self.attention, self.input_grad)

    def token_ids_for_chars(self, begin: int, end: int) -> set[int]:
        span = align_char_spans(self.spans, begin, end)
        return set(span.ids()) if span else set()

    def to_json(self) -> dict:
        return {
            "note_id": self.note_id,
            "code": self.code,
            "tokens": list(self.tokens),
            "spans": [list(s) for s in self.spans],
            "attention": None if self.attention is None else [float(x) for x in self.attention],
            "input_grad": None if self.input_grad is None else [[float(x) for x in row] for row in self.input_grad],
            "scores": None if self.scores is None else [float(x) for x in self.scores],
            "probability": float(self.probability),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "AttributionRecord":
        return cls(
            note_id=obj["note_id"],
            code=obj["code"],
            tokens=list(obj["tokens"]),
            spans=[tuple(s) for s in obj["spans"]],
            probability=float(obj["probability"]),
            attention=obj.get("attention"),
            input_grad=obj.get("input_grad"),
            scores=obj.get("scores"),
        )


def read_attributions(path) -> list[AttributionRecord]:
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(AttributionRecord.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad attribution record: {exc}") from exc
    return out


def write_attributions(records: Iterable[AttributionRecord], path) -> None:
    from evidkit.report import dumps_canonical

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in records:
            f.write(dumps_canonical(rec.to_json()) + "\n")


# --- calibration -------------------------------------------------------------

@dataclass
class ThresholdConfig:
    threshold: float
    grid: list[float]
    f1: float
    calibration_metric: str = "token_f1"
    per_code: dict[str, float] = field(default_factory=dict)

    def threshold_for(self, code: Optional[str] = None) -> float:
        if code is not None:
            return self.per_code.get(normalize_code(code), self.threshold)
        return self.threshold

    def to_json(self) -> dict:
        return {
            "threshold": self.threshold,
            "calibration_metric": self.calibration_metric,
            "f1": self.f1,
            "grid": list(self.grid),
            "per_code": dict(sorted(self.per_code.items())),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ThresholdConfig":
        return cls(
            threshold=float(obj["threshold"]),
            grid=[float(x) for x in obj.get("grid", [obj["threshold"]])],
            f1=float(obj.get("f1", 0.0)),
            calibration_metric=obj.get("calibration_metric", "token_f1"),
            per_code={k: float(v) for k, v in obj.get("per_code", {}).items()},
        )


def default_grid(scores: Sequence[np.ndarray], size: int = DEFAULT_GRID_SIZE) -> list[float]:
    """Evenly spaced quantiles of the pooled score distribution, deduplicated."""
    pooled = np.concatenate([np.asarray(s, dtype=float) for s in scores]) if scores else np.array([])
    if pooled.size == 0:
        return []
    return sorted({float(q) for q in np.quantile(pooled, np.linspace(0.0, 1.0, size))})


def _grid_counts(cases, grid: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Micro TP and predicted-token counts for every grid point, plus gold total."""
    tp = np.zeros(len(grid), dtype=np.int64)
    pred = np.zeros(len(grid), dtype=np.int64)
    n_gold = 0
    for scores, gold in cases:
        scores = np.asarray(scores, dtype=float)
        mask = np.zeros(len(scores), dtype=bool)
        if gold:
            mask[list(gold)] = True
        n_gold += int(mask.sum())
        # count of scores strictly greater than each tau
        all_sorted = np.sort(scores)
        gold_sorted = np.sort(scores[mask])
        pred += len(all_sorted) - np.searchsorted(all_sorted, grid, side="right")
        tp += len(gold_sorted) - np.searchsorted(gold_sorted, grid, side="right")
    return tp, pred, n_gold


def calibrate_threshold(
    validation_cases: Iterable[tuple[AttributionRecord, set[int]]],
    grid: Optional[Sequence[float]] = None,
    per_code: bool = False,
) -> ThresholdConfig:
    """Pick the grid threshold that maximizes micro token F1; ties go to the larger threshold.

    A token is selected when its score is strictly greater than the threshold.
    With ``per_code`` a threshold is also fit for each code with gold tokens;
    the global threshold stays the fallback.
    """
    prepared = []
    for rec, gold in validation_cases:
        scores = rec.resolved_scores()
        gold = set(gold)
        if gold and (min(gold) < 0 or max(gold) >= len(scores)):
            raise ThresholdError(f"{rec.key}: gold token ids outside 0..{len(scores) - 1}")
        prepared.append((rec.key[1], scores, gold))
    if not prepared:
        raise ThresholdError("empty validation set")
    if grid is None:
        grid = default_grid([s for _, s, _ in prepared])
    grid = sorted(set(float(g) for g in grid))
    if not grid:
        raise ThresholdError("empty threshold grid")

    tau, f1 = _best_on_grid([(s, g) for _, s, g in prepared], grid)
    config = ThresholdConfig(threshold=tau, grid=grid, f1=f1)
    if per_code:
        by_code: dict[str, list] = {}
        for code, s, g in prepared:
            by_code.setdefault(code, []).append((s, g))
        for code, cases in sorted(by_code.items()):
            try:
                config.per_code[code] = _best_on_grid(cases, grid)[0]
            except ThresholdError:
                continue
    return config


def _best_on_grid(cases, grid: list[float]) -> tuple[float, float]:
    g = np.asarray(grid, dtype=float)
    tp, pred, n_gold = _grid_counts(cases, g)
    if n_gold == 0:
        raise ThresholdError("threshold undefined: no gold tokens in validation set")
    best_i, best = None, None
    for i in range(len(g)):
        f1 = Fraction(2 * int(tp[i]), int(pred[i]) + n_gold)
        if best is None or f1 >= best:
            best_i, best = i, f1
    return float(g[best_i]), float(best)


# --- extraction --------------------------------------------------------------

@dataclass(frozen=True)
class PostConfig:
    expand_words: bool = False
    drop_punct: bool = False
    dedupe: bool = False


@dataclass
class ModelEvidence:
    note_id: str
    code: str
    token_ids: frozenset[int]
    surfaces: list[str]
    char_spans: list[tuple[int, int]]

    def to_json(self) -> dict:
        return {
            "note_id": self.note_id,
            "code": self.code,
            "token_ids": sorted(self.token_ids),
            "surfaces": list(self.surfaces),
            "spans": [list(s) for s in self.char_spans],
        }


def _clean_surface(surface: str) -> str:
    for marker in _SUBWORD_MARKERS:
        if surface.startswith(marker):
            surface = surface[len(marker):]
    return surface


def _is_punct_surface(surface: str) -> bool:
    return not any(ch.isalnum() for ch in _clean_surface(surface))


def _word_groups(record: AttributionRecord, text: Optional[str]) -> list[int]:
    """Word id per model token; tokens sharing an id form one word."""
    n = len(record.tokens)
    group = list(range(n))
    if text is not None:
        words = [(t.begin, t.end) for t in tokenize(text).tokens if not t.is_punct]
        for i, (b, e) in enumerate(record.spans):
            if b >= e:
                continue
            span = align_char_spans(words, b, e)
            if span is not None and not _is_punct_surface(text[b:e]):
                group[i] = n + span.first
        return group
    # contiguous non-punctuation model tokens belong to one word
    for i in range(1, n):
        (pb, pe), (b, e) = record.spans[i - 1], record.spans[i]
        if (b < e and pb < pe and pe == b
                and not _is_punct_surface(record.tokens[i - 1])
                and not _is_punct_surface(record.tokens[i])
                and not record.tokens[i].startswith(("Ġ", "▁"))):
            group[i] = group[i - 1]
    return group


def extract_evidence(
    record: AttributionRecord,
    tau: float,
    post: PostConfig = PostConfig(),
    text: Optional[str] = None,
) -> ModelEvidence:
    """Tokens scoring strictly above ``tau``, with optional post-processing.

    ``text`` is the note text; it gives word boundaries for word expansion and
    the surfaces of merged spans. Without it, surfaces come from the model tokens.
    """
    scores = record.resolved_scores()
    selected = {int(i) for i in np.flatnonzero(scores > tau)}

    if post.drop_punct:
        selected = {i for i in selected if not _is_punct_surface(record.tokens[i])}
    if post.expand_words and selected:
        group = _word_groups(record, text)
        chosen = {group[i] for i in selected}
        selected = {i for i in range(len(group)) if group[i] in chosen}
        if post.drop_punct:
            selected = {i for i in selected if not _is_punct_surface(record.tokens[i])}

    # merge runs of selected, character-contiguous tokens into spans
    runs: list[list[int]] = []
    for i in sorted(selected):
        b, e = record.spans[i]
        if runs:
            prev = runs[-1][-1]
            pb, pe = record.spans[prev]
            if prev == i - 1 and pe == b:
                runs[-1].append(i)
                continue
        runs.append([i])

    surfaces, char_spans, run_ids = [], [], []
    for run in runs:
        b = record.spans[run[0]][0]
        e = record.spans[run[-1]][1]
        if text is not None:
            surface = text[b:e]
        else:
            surface = "".join(_clean_surface(record.tokens[i]) for i in run)
        surfaces.append(surface)
        char_spans.append((b, e))
        run_ids.append(run)

    if post.dedupe:
        seen = set()
        keep = []
        for k, surface in enumerate(surfaces):
            key = " ".join(surface.split()).casefold()
            if key in seen:
                continue
            seen.add(key)
            keep.append(k)
        surfaces = [surfaces[k] for k in keep]
        char_spans = [char_spans[k] for k in keep]
        run_ids = [run_ids[k] for k in keep]
        selected = {i for k in range(len(run_ids)) for i in run_ids[k]}

    return ModelEvidence(
        note_id=record.note_id,
        code=record.code,
        token_ids=frozenset(selected),
        surfaces=surfaces,
        char_spans=char_spans,
    )


def load_threshold(path) -> ThresholdConfig:
    return ThresholdConfig.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
