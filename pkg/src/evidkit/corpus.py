"""Parsing, validation and indexing of span-annotated coding corpora."""

from __future__ import annotations

import enum
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

from evidkit.textproc import tokenize


class CorpusError(Exception):
    """Base class for corpus ingestion failures."""


class CorpusParseError(CorpusError):
    def __init__(self, message: str, byte_pos: int, source: Optional[str] = None):
        where = f"{source}: " if source else ""
        super().__init__(f"{where}malformed JSON at byte {byte_pos}: {message}")
        self.byte_pos = byte_pos
        self.source = source


class CorpusValidationError(CorpusError):
    pass


class Scheme(str, enum.Enum):
    SUFFICIENT = "Sufficient"
    COMPLETE = "Complete"
    UNSPECIFIED = "Unspecified"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, Scheme):
            return value
        v = str(value).strip().lower()
        aliases = {
            "sufficient": cls.SUFFICIENT, "inpatient": cls.SUFFICIENT,
            "complete": cls.COMPLETE, "profee": cls.COMPLETE,
            "unspecified": cls.UNSPECIFIED, "": cls.UNSPECIFIED,
        }
        if v not in aliases:
            raise ValueError(f"unknown annotation scheme {value!r}")
        return aliases[v]


class CodeSystem(str, enum.Enum):
    ICD9 = "ICD9"
    ICD10CM = "ICD10CM"
    ICD10PCS = "ICD10PCS"
    OTHER = "other"

    @classmethod
    def parse(cls, value) -> "CodeSystem":
        if value is None:
            return cls.OTHER
        key = "".join(ch for ch in str(value).upper() if ch.isalnum())
        if key in ("ICD9", "ICD9CM", "ICD9PCS"):
            return cls.ICD9
        if key in ("ICD10CM", "ICD10"):
            return cls.ICD10CM
        if key == "ICD10PCS":
            return cls.ICD10PCS
        return cls.OTHER


def normalize_code(code: str) -> str:
    """Canonical code key: dots and surrounding whitespace removed, uppercased."""
    return str(code).replace(".", "").strip().upper()


@dataclass(frozen=True)
class EvidenceAnnotation:
    code: str
    begin: int
    end: int
    code_system: CodeSystem = CodeSystem.OTHER
    description: Optional[str] = None

    @property
    def key(self) -> str:
        return normalize_code(self.code)


@dataclass(frozen=True)
class Note:
    note_id: str
    category: str
    text: str
    annotations: tuple[EvidenceAnnotation, ...] = ()

    def covered_text(self, ann: EvidenceAnnotation) -> str:
        return self.text[ann.begin:ann.end]


@dataclass(frozen=True)
class Admission:
    hadm_id: str
    notes: tuple[Note, ...] = ()


@dataclass(frozen=True)
class CorpusIndex:
    by_code: Mapping[str, tuple[tuple[str, EvidenceAnnotation], ...]]
    by_note: Mapping[str, Note]
    by_category: Mapping[str, tuple[Note, ...]]
    note_admission: Mapping[str, str]


@dataclass(frozen=True, eq=False)
class Corpus:
    scheme: Scheme
    admissions: tuple[Admission, ...]

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        return self.scheme == other.scheme and self.admissions == other.admissions

    __hash__ = None

    @cached_property
    def index(self) -> CorpusIndex:
        return build_index(self.admissions)

    def notes(self) -> Iterable[Note]:
        for adm in self.admissions:
            yield from adm.notes

    def annotations(self) -> Iterable[tuple[Note, EvidenceAnnotation]]:
        for note in self.notes():
            for ann in note.annotations:
                yield note, ann

    @property
    def n_notes(self) -> int:
        return sum(len(a.notes) for a in self.admissions)

    @property
    def n_spans(self) -> int:
        return sum(len(n.annotations) for n in self.notes())


def build_index(admissions: Iterable[Admission]) -> CorpusIndex:
    by_code: dict[str, list] = defaultdict(list)
    by_note: dict[str, Note] = {}
    by_category: dict[str, list] = defaultdict(list)
    note_adm: dict[str, str] = {}
    for adm in admissions:
        for note in adm.notes:
            by_note[note.note_id] = note
            note_adm[note.note_id] = adm.hadm_id
            by_category[note.category].append(note)
            for ann in note.annotations:
                by_code[ann.key].append((note.note_id, ann))
    return CorpusIndex(
        by_code={k: tuple(v) for k, v in sorted(by_code.items())},
        by_note=by_note,
        by_category={k: tuple(v) for k, v in sorted(by_category.items())},
        note_admission=note_adm,
    )


# --- parsing -----------------------------------------------------------------

CANONICAL_KEYS = (
    "hadm_id", "notes", "note_id", "category", "text", "annotations",
    "code", "code_system", "description", "begin", "end",
)


def load_schema_map(path) -> dict[str, str]:
    """Read a key-rename config: ``{"canonical_key": "key_in_source"}``."""
    mapping = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(mapping) - set(CANONICAL_KEYS)
    if unknown:
        raise CorpusValidationError(f"schema map has unknown keys: {sorted(unknown)}")
    return {k: str(v) for k, v in mapping.items()}


def _decode(json_text: str, source: Optional[str]) -> Any:
    try:
        return json.loads(json_text)
    except json.JSONDecodeError as exc:
        byte_pos = len(json_text[: exc.pos].encode("utf-8"))
        raise CorpusParseError(exc.msg, byte_pos, source) from None


def _get(obj: Mapping, key: str, keymap: Mapping[str, str], where: str, default=KeyError):
    src = keymap.get(key, key)
    if not isinstance(obj, Mapping):
        raise CorpusValidationError(f"{where}: expected an object, got {type(obj).__name__}")
    if src in obj:
        return obj[src]
    if default is KeyError:
        raise CorpusValidationError(f"{where}: missing field {src!r}")
    return default


def _as_int(value, where: str, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise CorpusValidationError(f"{where}: field {name!r} must be an integer, got {value!r}")
    return value


def _parse_admission(raw, keymap, pos: int) -> Admission:
    where = f"admission[{pos}]"
    hadm_id = str(_get(raw, "hadm_id", keymap, where))
    notes = []
    for raw_note in _get(raw, "notes", keymap, where):
        nwhere = f"{where} note"
        note_id = str(_get(raw_note, "note_id", keymap, nwhere))
        nwhere = f"note_id={note_id}"
        text = _get(raw_note, "text", keymap, nwhere)
        if not isinstance(text, str):
            raise CorpusValidationError(f"{nwhere}: text must be a string")
        category = str(_get(raw_note, "category", keymap, nwhere, default="") or "")
        anns = []
        for i, raw_ann in enumerate(_get(raw_note, "annotations", keymap, nwhere, default=[]) or []):
            awhere = f"note_id={note_id} annotation[{i}]"
            begin = _as_int(_get(raw_ann, "begin", keymap, awhere), awhere, "begin")
            end = _as_int(_get(raw_ann, "end", keymap, awhere), awhere, "end")
            if not begin < end:
                raise CorpusValidationError(f"{awhere}: begin < end violated ({begin}, {end})")
            if begin < 0 or end > len(text):
                raise CorpusValidationError(
                    f"{awhere}: offsets ({begin}, {end}) out of bounds for text of length {len(text)}"
                )
            code = _get(raw_ann, "code", keymap, awhere)
            if not normalize_code(code):
                raise CorpusValidationError(f"{awhere}: empty code")
            desc = _get(raw_ann, "description", keymap, awhere, default=None)
            anns.append(EvidenceAnnotation(
                code=str(code).strip(),
                begin=begin,
                end=end,
                code_system=CodeSystem.parse(_get(raw_ann, "code_system", keymap, awhere, default=None)),
                description=str(desc) if desc not in (None, "") else None,
            ))
        notes.append(Note(note_id=note_id, category=category, text=text, annotations=tuple(anns)))
    return Admission(hadm_id=hadm_id, notes=tuple(notes))


def corpus_from_records(records, scheme=Scheme.UNSPECIFIED, schema_map=None) -> Corpus:
    """Build a validated Corpus from decoded JSON (a list of admissions or a single admission)."""
    keymap = dict(schema_map or {})
    if isinstance(records, Mapping):
        records = [records]
    if not isinstance(records, list):
        raise CorpusValidationError("top level must be a list of admissions")
    admissions = tuple(_parse_admission(raw, keymap, i) for i, raw in enumerate(records))
    validate_admissions(admissions)
    return Corpus(scheme=Scheme.parse(scheme), admissions=admissions)


def validate_admissions(admissions: Iterable[Admission]) -> None:
    seen_adm: set[str] = set()
    seen_note: set[str] = set()
    for adm in admissions:
        if adm.hadm_id in seen_adm:
            raise CorpusValidationError(f"duplicate hadm_id {adm.hadm_id}")
        seen_adm.add(adm.hadm_id)
        for note in adm.notes:
            if note.note_id in seen_note:
                raise CorpusValidationError(f"duplicate note_id {note.note_id}")
            seen_note.add(note.note_id)
            for i, ann in enumerate(note.annotations):
                if not (0 <= ann.begin < ann.end <= len(note.text)):
                    raise CorpusValidationError(
                        f"note_id={note.note_id} annotation[{i}]: invalid offsets ({ann.begin}, {ann.end})"
                    )


def parse_corpus(json_text: str, scheme=Scheme.UNSPECIFIED, schema_map=None, source=None) -> Corpus:
    return corpus_from_records(_decode(json_text, source), scheme, schema_map)


def load_corpus(path, scheme=Scheme.UNSPECIFIED, schema_map=None) -> Corpus:
    """Load a corpus from one JSON file or a directory of per-admission JSON files."""
    path = Path(path)
    if path.is_dir():
        files = sorted(path.rglob("*.json"))
        records = []
        for f in files:
            data = _decode(f.read_text(encoding="utf-8"), str(f))
            records.extend(data if isinstance(data, list) else [data])
        return corpus_from_records(records, scheme, schema_map)
    return parse_corpus(path.read_text(encoding="utf-8"), scheme, schema_map, source=str(path))


def corpus_to_records(corpus: Corpus) -> list[dict]:
    out = []
    for adm in corpus.admissions:
        notes = []
        for note in adm.notes:
            anns = [
                {
                    "code": a.code,
                    "code_system": a.code_system.value,
                    "description": a.description or "",
                    "begin": a.begin,
                    "end": a.end,
                }
                for a in note.annotations
            ]
            notes.append({"note_id": note.note_id, "category": note.category,
                          "text": note.text, "annotations": anns})
        out.append({"hadm_id": adm.hadm_id, "notes": notes})
    return out


def serialize_corpus(corpus: Corpus) -> str:
    return json.dumps(corpus_to_records(corpus), ensure_ascii=False, sort_keys=True, indent=1)


# --- statistics --------------------------------------------------------------

@dataclass
class StatsReport:
    scheme: str
    n_admissions: int
    n_notes: int
    total_spans: int
    spans_per_category: dict[str, int]
    notes_per_category: dict[str, int]
    avg_spans_per_note_by_category: dict[str, float]
    avg_labels_per_document: float
    avg_unique_codes_per_document: float
    avg_evidence_tokens: float
    unique_codes: int


def corpus_stats(corpus: Corpus) -> StatsReport:
    spans_cat: Counter = Counter()
    notes_cat: Counter = Counter()
    token_total = 0
    unique_codes_total = 0
    for note in corpus.notes():
        notes_cat[note.category] += 1
        spans_cat[note.category] += len(note.annotations)
        unique_codes_total += len({a.key for a in note.annotations})
        for ann in note.annotations:
            token_total += len(tokenize(note.covered_text(ann)).tokens)
    n_notes = corpus.n_notes
    total = sum(spans_cat.values())
    cats = sorted(notes_cat)
    return StatsReport(
        scheme=corpus.scheme.value,
        n_admissions=len(corpus.admissions),
        n_notes=n_notes,
        total_spans=total,
        spans_per_category={c: spans_cat[c] for c in cats},
        notes_per_category={c: notes_cat[c] for c in cats},
        avg_spans_per_note_by_category={c: spans_cat[c] / notes_cat[c] for c in cats},
        avg_labels_per_document=total / n_notes if n_notes else 0.0,
        avg_unique_codes_per_document=unique_codes_total / n_notes if n_notes else 0.0,
        avg_evidence_tokens=token_total / total if total else 0.0,
        unique_codes=len(corpus.index.by_code),
    )


# --- sufficient vs complete --------------------------------------------------

@dataclass
class SubsetReport:
    common_admissions: int
    unique_note_ids: int
    common_note_ids: int
    unique_code_cases: int
    identical_code_cases: int
    strict_subset_cases: int
    uniqueness: str = "note_code"
    containment: str = "contain"
    per_note: list[dict] = field(default_factory=list)


def _spans_by_case(notes: Iterable[Note]) -> dict[tuple[str, str], set[tuple[int, int]]]:
    # duplicate (note, code) annotations collapse to one case holding every span
    cases: dict[tuple[str, str], set] = defaultdict(set)
    for note in notes:
        for ann in note.annotations:
            cases[(note.note_id, ann.key)].add((ann.begin, ann.end))
    return cases


def _is_subset(inner: set, outer: set, containment: str) -> bool:
    if containment == "exact":
        return inner <= outer
    return all(any(ob <= b and e <= oe for ob, oe in outer) for b, e in inner)


def common_subset(
    sufficient: Corpus,
    complete: Corpus,
    containment: str = "contain",
    uniqueness: str = "note_code",
) -> SubsetReport:
    """Compare two annotation schemes over admissions present in both.

    ``containment`` is "contain" (every sufficient span lies inside some
    complete span of the same case) or "exact" (span sets must match).
    ``uniqueness`` is "note_code" (cases are (note_id, code) pairs) or "code"
    (cases are code strings pooled over the common notes).
    """
    if containment not in ("contain", "exact"):
        raise ValueError(f"unknown containment mode {containment!r}")
    if uniqueness not in ("note_code", "code"):
        raise ValueError(f"unknown uniqueness mode {uniqueness!r}")

    adm_s = {a.hadm_id: a for a in sufficient.admissions}
    adm_c = {a.hadm_id: a for a in complete.admissions}
    common_adm = sorted(set(adm_s) & set(adm_c))
    notes_s = {n.note_id: n for h in common_adm for n in adm_s[h].notes}
    notes_c = {n.note_id: n for h in common_adm for n in adm_c[h].notes}
    common_notes = sorted(set(notes_s) & set(notes_c))
    all_notes = set(notes_s) | set(notes_c)

    cases_s = _spans_by_case(notes_s[n] for n in common_notes)
    cases_c = _spans_by_case(notes_c[n] for n in common_notes)

    if uniqueness == "note_code":
        keys_s, keys_c = set(cases_s), set(cases_c)
        identical = keys_s & keys_c
        subset = {k for k in identical if _is_subset(cases_s[k], cases_c[k], containment)}
    else:
        keys_s = {c for _, c in cases_s}
        keys_c = {c for _, c in cases_c}
        identical = keys_s & keys_c
        subset = set()
        for code in identical:
            ok = True
            for (nid, c), spans in cases_s.items():
                if c == code and not _is_subset(spans, cases_c.get((nid, c), set()), containment):
                    ok = False
                    break
            if ok:
                subset.add(code)

    per_note = []
    for nid in common_notes:
        cs = {c for (n, c) in cases_s if n == nid}
        cc = {c for (n, c) in cases_c if n == nid}
        both = cs & cc
        per_note.append({
            "note_id": nid,
            "hadm_id": sufficient.index.note_admission[nid],
            "sufficient_codes": len(cs),
            "complete_codes": len(cc),
            "identical_codes": len(both),
            "subset_codes": sum(
                1 for c in both if _is_subset(cases_s[(nid, c)], cases_c[(nid, c)], containment)
            ),
        })

    return SubsetReport(
        common_admissions=len(common_adm),
        unique_note_ids=len(all_notes),
        common_note_ids=len(common_notes),
        unique_code_cases=len(keys_s ^ keys_c),
        identical_code_cases=len(identical),
        strict_subset_cases=len(subset),
        uniqueness=uniqueness,
        containment=containment,
        per_note=per_note,
    )
