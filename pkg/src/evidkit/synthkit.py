"""Seeded synthetic corpora, synthetic attributions and brute-force oracles.

All randomness comes from numpy's PCG64 bit generator, seeded explicitly and
split with SeedSequence.spawn. The algorithm name is recorded in the planted
metadata so a run can be regenerated elsewhere.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from evidkit.attribution import AttributionRecord
from evidkit.corpus import (
    Admission, CodeSystem, Corpus, EvidenceAnnotation, Note, Scheme, validate_admissions,
)
from evidkit.matching import EvaluationCase, MatchType, gold_cases
from evidkit.textproc import TokenSpan, align_char_spans, default_norm_config, normalize_terms, tokenize

RNG_ALGORITHM = "numpy.random.PCG64"

DEFAULT_CODES = (
    ("I10", "Essential (primary) hypertension"),
    ("R06.83", "Snoring"),
    ("I31.3", "Pericardial effusion (noninflammatory)"),
    ("E66.9", "Obesity, unspecified"),
    ("K21.9", "Gastro-esophageal reflux disease without esophagitis"),
    ("Z87.891", "Personal history of nicotine dependence"),
    ("A03.1", "Shigellosis due to Shigella flexneri"),
    ("A06.9", "Amebiasis, unspecified"),
)

_CONSONANTS = "bdfgklmnprtvz"
_VOWELS = "aeiou"


class SynthSpecError(ValueError):
    pass


@dataclass
class SynthSpec:
    seed: int = 0
    n_admissions: int = 10
    notes_per_admission: int = 2
    categories: list[str] = field(default_factory=lambda: ["Discharge summary", "Physician"])
    note_words: int = 200
    annotations_per_note: int = 4
    codes: list[tuple[str, str]] = field(default_factory=lambda: [tuple(c) for c in DEFAULT_CODES])
    vocab_size: int = 400
    # "uniform", a fixed relative position, or a [lo, hi) range
    position: Union[str, float, list[float]] = "uniform"
    # "single", "diverse", or a per-code mapping of those
    diversity: Union[str, dict[str, str]] = "diverse"
    # fraction of the description's content words copied into each evidence span
    overlap: float = 0.0
    evidence_words: list[int] = field(default_factory=lambda: [1, 3])

    @classmethod
    def from_json(cls, obj: dict) -> "SynthSpec":
        obj = dict(obj)
        if "codes" in obj:
            obj["codes"] = [tuple(c) for c in obj["codes"]]
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthSpecError(f"unknown SynthSpec keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def load(cls, path) -> "SynthSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> dict:
        d = asdict(self)
        d["codes"] = [list(c) for c in self.codes]
        return d

    def diversity_for(self, code: str) -> str:
        level = self.diversity.get(code, "diverse") if isinstance(self.diversity, dict) else self.diversity
        if level not in ("single", "diverse"):
            raise SynthSpecError(f"unknown diversity level {level!r}")
        return level

    def validate(self) -> None:
        if self.n_admissions < 0 or self.notes_per_admission < 0 or self.annotations_per_note < 0:
            raise SynthSpecError("counts must be non-negative")
        if self.annotations_per_note and not self.codes:
            raise SynthSpecError("annotations requested but no codes given")
        if not self.categories:
            raise SynthSpecError("need at least one note category")
        lo, hi = self.evidence_words
        if not 1 <= lo <= hi:
            raise SynthSpecError(f"evidence_words must satisfy 1 <= min <= max, got {self.evidence_words}")
        if self.note_words < 1:
            raise SynthSpecError("note_words must be >= 1")
        if hi > self.note_words:
            raise SynthSpecError("evidence longer than the note it is planted in")
        if not 0.0 <= self.overlap <= 1.0:
            raise SynthSpecError("overlap must lie in [0, 1]")
        if self.vocab_size < 1:
            raise SynthSpecError("vocab_size must be >= 1")
        pos = self.position
        if isinstance(pos, str):
            if pos != "uniform":
                raise SynthSpecError(f"unknown position control {pos!r}")
        elif isinstance(pos, (int, float)):
            if not 0.0 <= pos < 1.0:
                raise SynthSpecError("fixed position must lie in [0, 1)")
        else:
            if len(pos) != 2 or not 0.0 <= pos[0] < pos[1] <= 1.0:
                raise SynthSpecError("position range must be [lo, hi) within [0, 1]")
        for code, _ in self.codes:
            self.diversity_for(code)


def _pseudo_words(rng: np.random.Generator, n: int, banned: set[str], prefix: str = "") -> list[str]:
    words: list[str] = []
    seen = set(banned)
    while len(words) < n:
        syl = int(rng.integers(2, 4))
        w = prefix + "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))] + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(syl)
        )
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _content_words(description: str) -> list[str]:
    stop = default_norm_config().stopwords
    return [t.surface for t in tokenize(description).tokens
            if not t.is_punct and t.surface.lower() not in stop]


def _draw_position(spec: SynthSpec, rng: np.random.Generator) -> float:
    pos = spec.position
    if pos == "uniform":
        return float(rng.random())
    if isinstance(pos, (int, float)):
        return float(pos)
    return float(rng.uniform(pos[0], pos[1]))


def generate_corpus(spec: SynthSpec) -> tuple[Corpus, dict]:
    """Template corpus with planted evidence; returns the corpus and the planted values."""
    spec.validate()
    root = np.random.SeedSequence(spec.seed)
    vocab_seq, plan_seq, ev_seq = root.spawn(3)
    banned = set(default_norm_config().stopwords)
    for _, desc in spec.codes:
        banned.update(t.surface.lower() for t in tokenize(desc).tokens)
    filler = _pseudo_words(np.random.Generator(np.random.PCG64(vocab_seq)), spec.vocab_size, banned)
    banned.update(filler)
    rng = np.random.Generator(np.random.PCG64(plan_seq))
    ev_rng = np.random.Generator(np.random.PCG64(ev_seq))

    single_phrase: dict[str, str] = {}
    counter = 0

    def evidence_phrase(code: str, description: str) -> str:
        nonlocal counter
        level = spec.diversity_for(code)
        if level == "single" and code in single_phrase:
            return single_phrase[code]
        content = _content_words(description)
        n_copy = round(spec.overlap * len(content))
        if spec.overlap >= 1.0:
            words = [description]
        else:
            words = content[:n_copy]
        n_extra = int(ev_rng.integers(spec.evidence_words[0], spec.evidence_words[1] + 1))
        n_extra = max(n_extra - len(words), 0 if words else 1)
        if level == "diverse":
            # a numbered pseudo word makes every occurrence a distinct string
            counter += 1
            extra = _pseudo_words(ev_rng, max(n_extra - 1, 0), banned)
            extra.append(f"{_pseudo_words(ev_rng, 1, banned)[0]}{counter}")
        else:
            extra = _pseudo_words(ev_rng, n_extra, banned)
        phrase = " ".join(words + extra)
        if level == "single":
            single_phrase[code] = phrase
        return phrase

    admissions = []
    planted_pos: dict[str, list[float]] = {}
    planted_codes: dict[str, dict] = {}
    note_counter = 0
    for a in range(spec.n_admissions):
        notes = []
        for j in range(spec.notes_per_admission):
            note_counter += 1
            note_id = f"N{note_counter:05d}"
            category = spec.categories[(a * spec.notes_per_admission + j) % len(spec.categories)]
            words = [filler[int(i)] for i in rng.integers(0, len(filler), spec.note_words)]
            inserts = []
            for _ in range(spec.annotations_per_note):
                code, desc = spec.codes[int(rng.integers(len(spec.codes)))]
                slot = min(int(_draw_position(spec, rng) * spec.note_words), spec.note_words - 1)
                inserts.append((slot, code, desc, evidence_phrase(code, desc)))
            # stable order: by slot, then draw order
            order = sorted(range(len(inserts)), key=lambda i: inserts[i][0])
            pieces: list[str] = []
            anns = []
            pos = 0
            cursor = 0
            for i in order:
                slot, code, desc, phrase = inserts[i]
                chunk = " ".join(words[cursor:slot])
                if chunk:
                    pieces.append(chunk)
                    pos += len(chunk) + 1
                cursor = max(cursor, slot)
                begin = pos
                pieces.append(phrase + ".")
                pos += len(phrase) + 2
                anns.append(EvidenceAnnotation(code=code, begin=begin, end=begin + len(phrase),
                                               code_system=CodeSystem.ICD10CM, description=desc))
            tail = " ".join(words[cursor:])
            if tail:
                pieces.append(tail)
            text = " ".join(pieces)
            anns.sort(key=lambda x: (x.begin, x.code))
            notes.append(Note(note_id=note_id, category=category, text=text, annotations=tuple(anns)))
            planted_pos[note_id] = [x.begin / len(text) for x in anns]
            for x in anns:
                row = planted_codes.setdefault(x.code, {"occurrences": 0, "surfaces": set()})
                row["occurrences"] += 1
                row["surfaces"].add(text[x.begin:x.end].casefold())
        admissions.append(Admission(hadm_id=f"H{a + 1:04d}", notes=tuple(notes)))

    validate_admissions(admissions)
    corpus = Corpus(scheme=Scheme.UNSPECIFIED, admissions=tuple(admissions))
    planted = {
        "rng": RNG_ALGORITHM,
        "seed": spec.seed,
        "positions": planted_pos,
        "codes": {
            code: {
                "occurrences": row["occurrences"],
                "unique_strings": len(row["surfaces"]),
                "overlap": _planted_overlap(spec, dict(spec.codes)[code]),
            }
            for code, row in sorted(planted_codes.items())
        },
    }
    return corpus, planted


def _planted_overlap(spec: SynthSpec, description: str) -> float:
    if spec.overlap >= 1.0:
        return 1.0
    content = _content_words(description)
    n_copy = round(spec.overlap * len(content))
    desc_terms = set(normalize_terms(description))
    got = set(normalize_terms(" ".join(content[:n_copy])))
    return len(got & desc_terms) / len(desc_terms) if desc_terms else 0.0


def generate_attributions(
    corpus: Corpus,
    fidelity: float,
    seed: int = 0,
    disjoint: bool = False,
    gradients: bool = False,
    grad_dim: int = 4,
) -> list[AttributionRecord]:
    """One attribution record per gold (note, code), tokenized with the word tokenizer.

    Scores mix a ground-truth indicator (weight ``fidelity``) with a decoy
    indicator over an equally sized random token set (weight 1 - fidelity).
    Decoys are drawn independently of the ground truth unless ``disjoint``,
    in which case they avoid it. With ``gradients`` the scores are encoded as
    attention x gradient-norm pairs instead of precomputed scores.
    """
    if not 0.0 <= fidelity <= 1.0:
        raise ValueError("fidelity must lie in [0, 1]")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    notes = corpus.index.by_note
    docs = {}
    out = []
    for (note_id, code), char_spans in gold_cases(corpus).items():
        doc = docs.get(note_id) or docs.setdefault(note_id, tokenize(notes[note_id].text, note_id))
        spans = [(t.begin, t.end) for t in doc.tokens]
        n = len(spans)
        gt = set()
        for b, e in char_spans:
            span = align_char_spans(spans, b, e)
            if span is not None:
                gt.update(span.ids())
        pool = [i for i in range(n) if i not in gt] if disjoint else list(range(n))
        size = min(max(len(gt), 1), len(pool))
        decoy = set(int(i) for i in rng.choice(pool, size=size, replace=False)) if size else set()
        scores = np.zeros(n)
        scores[list(gt)] += fidelity
        if decoy:
            scores[list(decoy)] += 1.0 - fidelity
        prob = float(rng.random())
        raw_code = next(a.code for a in notes[note_id].annotations if a.key == code)
        if gradients:
            total = float(scores.sum())
            if total > 0:
                attention = scores / total
                dirs = rng.normal(size=(n, grad_dim))
                dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
                grad = dirs * total
            else:
                attention = np.full(n, 1.0 / max(n, 1))
                grad = np.zeros((n, grad_dim))
            rec = AttributionRecord(note_id, raw_code, [t.surface for t in doc.tokens], spans, prob,
                                    attention=attention.tolist(), input_grad=grad.tolist())
        else:
            rec = AttributionRecord(note_id, raw_code, [t.surface for t in doc.tokens], spans, prob,
                                    scores=scores.tolist())
        out.append(rec)
    return out


# --- oracles -----------------------------------------------------------------

def oracle_classify(case: EvaluationCase, k: int) -> MatchType:
    """Exhaustive re-check of every match definition, then the fixed precedence."""
    if len(case.gt_spans) == 0:
        raise ValueError("case has no ground truth")
    gt_ids = []
    for span in case.gt_spans:
        t = span.first
        while t <= span.last:
            gt_ids.append(t)
            t += 1
    G = frozenset(gt_ids)
    M = frozenset(case.model_tokens)

    empty = len(M) == 0
    no_overlap = True
    for m in M:
        for g in G:
            if m == g:
                no_overlap = False
    exact = all(g in M for g in G) and all(m in G for m in M)

    spans_hit = []
    for span in case.gt_spans:
        hit = False
        for m in M:
            if span.first <= m and m <= span.last:
                hit = True
        spans_hit.append(hit)
    unmatched_in_window = []
    for m in M:
        if m in G:
            continue
        near = False
        for span in case.gt_spans:
            for boundary in (span.first, span.last):
                if abs(m - boundary) <= k:
                    near = True
        unmatched_in_window.append(near)
    proximate = all(spans_hit) and all(unmatched_in_window)

    if empty:
        return MatchType.EMPTY
    if no_overlap:
        return MatchType.NO_MATCH
    if exact:
        return MatchType.EXACT
    if proximate:
        return MatchType.PROXIMATE
    return MatchType.PARTIAL


def random_case(
    rng: np.random.Generator,
    universe: int = 200,
    max_spans: int = 5,
    max_span_len: int = 6,
) -> EvaluationCase:
    """A random evaluation case; model evidence strategies are mixed so every class occurs."""
    n_spans = int(rng.integers(1, max_spans + 1))
    spans = []
    for _ in range(n_spans):
        length = int(rng.integers(1, max_span_len + 1))
        first = int(rng.integers(0, universe - length + 1))
        spans.append(TokenSpan(first, first + length - 1))
    gt = sorted({t for s in spans for t in s.ids()})
    strategy = int(rng.integers(0, 6))
    if strategy == 0:
        model: set[int] = set()
    elif strategy == 1:
        model = set(gt)
    elif strategy == 2:
        # subset of gt plus nearby noise
        model = {t for t in gt if rng.random() < 0.6}
        for _ in range(int(rng.integers(0, 4))):
            anchor = gt[int(rng.integers(len(gt)))]
            model.add(int(np.clip(anchor + rng.integers(-14, 15), 0, universe - 1)))
    elif strategy == 3:
        model = {t for t in range(universe) if t not in gt and rng.random() < 0.03}
    elif strategy == 4:
        model = {int(t) for t in rng.choice(universe, size=int(rng.integers(1, 20)), replace=False)}
    else:
        model = set(gt) | {int(np.clip(gt[-1] + rng.integers(1, 12), 0, universe - 1))}
    return EvaluationCase(
        note_id="synthetic",
        code="X",
        gt_spans=tuple(spans),
        model_tokens=frozenset(model),
        probability=float(rng.random()),
    )


def write_planted(planted: dict, path) -> None:
    from evidkit.report import write_json

    write_json(planted, path)
