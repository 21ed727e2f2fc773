"""Offset-preserving tokenization, char/token span alignment and term normalization."""

from __future__ import annotations

import bisect
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

# Maximal alphanumeric runs, or a single non-space non-alphanumeric character.
# "_" counts as punctuation, so it is matched separately from the \w class.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_")


class AlignmentError(ValueError):
    """Raised when a character span overlaps no token."""


@dataclass(frozen=True)
class Token:
    surface: str
    begin: int
    end: int
    index: int

    @property
    def is_punct(self) -> bool:
        return not any(ch.isalnum() for ch in self.surface)


@dataclass(frozen=True)
class TokenSpan:
    first: int
    last: int

    def __post_init__(self):
        if self.first > self.last:
            raise ValueError(f"TokenSpan first > last ({self.first} > {self.last})")

    def __contains__(self, token_id: int) -> bool:
        return self.first <= token_id <= self.last

    def ids(self) -> range:
        return range(self.first, self.last + 1)


@dataclass(frozen=True)
class TokenizedDocument:
    text: str
    tokens: tuple[Token, ...]
    note_id: Optional[str] = None

    @property
    def source_length(self) -> int:
        return len(self.text)

    def __len__(self) -> int:
        return len(self.tokens)

    def words(self) -> list[Token]:
        return [t for t in self.tokens if not t.is_punct]


def tokenize(text: str, note_id: Optional[str] = None) -> TokenizedDocument:
    tokens = tuple(
        Token(m.group(), m.start(), m.end(), i)
        for i, m in enumerate(_TOKEN_RE.finditer(text))
    )
    return TokenizedDocument(text=text, tokens=tokens, note_id=note_id)


def word_count(text: str) -> int:
    """Number of non-punctuation tokens in ``text``."""
    return sum(1 for m in _TOKEN_RE.finditer(text) if any(c.isalnum() for c in m.group()))


def align_char_spans(
    spans: Sequence[tuple[int, int]], begin: int, end: int
) -> Optional[TokenSpan]:
    """Minimal TokenSpan over ``spans`` covering every span that overlaps [begin, end).

    ``spans`` must be sorted by begin and non-overlapping; zero-width spans
    (special tokens) never overlap anything. Returns None when nothing overlaps.
    """
    if begin >= end:
        raise ValueError(f"begin < end violated: ({begin}, {end})")
    ends = [e for _, e in spans]
    # first candidate: first span whose end > begin
    i = bisect.bisect_right(ends, begin)
    first = last = None
    n = len(spans)
    while i < n and spans[i][0] < end:
        b, e = spans[i]
        if b < e and b < end and e > begin:
            if first is None:
                first = i
            last = i
        i += 1
    if first is None:
        return None
    return TokenSpan(first, last)


def align_span(doc: TokenizedDocument, begin: int, end: int) -> TokenSpan:
    if not 0 <= begin < end <= doc.source_length:
        raise AlignmentError(
            f"span ({begin}, {end}) outside document of length {doc.source_length}"
        )
    span = align_char_spans([(t.begin, t.end) for t in doc.tokens], begin, end)
    if span is None:
        raise AlignmentError(f"span ({begin}, {end}) overlaps no token")
    return span


# --- normalization -----------------------------------------------------------

_PLURAL_KEEP = ("ss", "us", "is", "ys")
_ES_AFTER = ("sh", "ch", "x", "z", "ss")


def _suffix_rules(word: str) -> str:
    if len(word) <= 3 or not word.isalpha() or not word.endswith("s"):
        return word
    if word.endswith(_PLURAL_KEEP):
        return word
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("es") and word[:-2].endswith(_ES_AFTER):
        return word[:-2]
    return word[:-1]


@dataclass(frozen=True)
class NormConfig:
    stopwords: frozenset[str] = frozenset()
    lemma_table: dict[str, str] = field(default_factory=dict)
    keep_numbers: bool = True
    lowercase: bool = True

    def __post_init__(self):
        # Table targets must be fixed points of lemmatization.
        table = dict(self.lemma_table)
        for target in set(table.values()):
            if target not in table and _suffix_rules(target) != target:
                table[target] = target
        object.__setattr__(self, "lemma_table", table)

    def lemmatize(self, word: str) -> str:
        hit = self.lemma_table.get(word)
        if hit is not None:
            return hit
        return _suffix_rules(word)

    def __hash__(self):
        return hash((self.stopwords, tuple(sorted(self.lemma_table.items())),
                     self.keep_numbers, self.lowercase))


def _read_stopwords(path) -> frozenset[str]:
    text = Path(path).read_text(encoding="utf-8")
    return _parse_stopwords(text)


def _parse_stopwords(text: str) -> frozenset[str]:
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.update(line.lower().split())
    return frozenset(words)


_DEFAULT: Optional[NormConfig] = None


def default_norm_config() -> NormConfig:
    global _DEFAULT
    if _DEFAULT is None:
        data = resources.files("evidkit") / "data"
        stop = _parse_stopwords((data / "stopwords_en.txt").read_text(encoding="utf-8"))
        table = json.loads((data / "lemma_table.json").read_text(encoding="utf-8"))
        _DEFAULT = NormConfig(stopwords=stop, lemma_table=table)
    return _DEFAULT


def load_norm_config(path) -> NormConfig:
    """Read a NormConfig JSON file.

    Keys: ``stopwords`` and ``lemma_table`` (paths, relative to the config
    file; omitted keys fall back to the shipped defaults), ``keep_numbers``
    and ``lowercase`` (bools, default true).
    """
    path = Path(path)
    cfg = json.loads(path.read_text(encoding="utf-8"))
    base = default_norm_config()
    stop = base.stopwords
    table = base.lemma_table
    if cfg.get("stopwords"):
        stop = _read_stopwords(path.parent / cfg["stopwords"])
    if cfg.get("lemma_table"):
        table = json.loads((path.parent / cfg["lemma_table"]).read_text(encoding="utf-8"))
    return NormConfig(
        stopwords=stop,
        lemma_table=table,
        keep_numbers=bool(cfg.get("keep_numbers", True)),
        lowercase=bool(cfg.get("lowercase", True)),
    )


def normalize_terms(text: str, config: Optional[NormConfig] = None) -> tuple[str, ...]:
    """Normalized content words of ``text``, unique, in first-occurrence order.

    Punctuation and stopwords are dropped, numbers are kept unless the config
    says otherwise, and the rest is lemmatized by table lookup then suffix rules.
    """
    config = config or default_norm_config()
    if config.lowercase:
        text = text.lower()
    out: dict[str, None] = {}
    for tok in tokenize(text).tokens:
        word = tok.surface
        if tok.is_punct:
            continue
        if word.lower() in config.stopwords:
            continue
        if not config.keep_numbers and word.isdigit():
            continue
        lemma = config.lemmatize(word)
        if lemma.lower() in config.stopwords:
            continue
        out.setdefault(lemma, None)
    return tuple(out)


def term_overlap(evidence: str, description: str, config: Optional[NormConfig] = None) -> Optional[float]:
    """|terms(evidence) & terms(description)| / |terms(description)|, None if the description is empty."""
    desc = set(normalize_terms(description, config))
    if not desc:
        return None
    ev = set(normalize_terms(evidence, config))
    return len(ev & desc) / len(desc)


def iter_words(texts: Iterable[str]) -> Iterable[str]:
    for text in texts:
        for tok in tokenize(text).tokens:
            if not tok.is_punct:
                yield tok.surface
