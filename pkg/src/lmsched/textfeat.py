"""Deterministic tokenization and rule-based linguistic uncertainty scorers.

Six scorers map a token sequence to a non-negative intensity each. Together
they form the feature extractor used by the output-length estimator::

    >>> rule_gen("Tell me about the history of art.").vague
    1.0

All pattern knowledge lives in a line-oriented lexicon file (see
``data/lexicon_v1.txt``). Scores are only comparable under the same lexicon
version, which is recorded on every :class:`Lexicon`.
"""
from __future__ import annotations

import hashlib
import re
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping, Sequence

FEATURE_NAMES = (
    "structural",
    "syntactic",
    "semantic",
    "vague",
    "open_ended",
    "multi_part",
)

SENTENCE_END = frozenset({".", "?", "!"})
NOUN_TAGS = frozenset({"NOUN", "PROPN"})

# clitic suffixes split off a word ("they're" -> "they", "'re")
CLITICS = ("'s", "'re", "'ve", "'ll", "'d", "'m")
NEGATION = "n't"

_TOKEN_RE = re.compile(r"\w+(?:['’]\w+)*|[^\w\s]")
_VOWELS = frozenset("aeiouy")


class LexiconError(ValueError):
    pass


@dataclass
class Diagnostics:
    """Side channel filled by :func:`tokenize`."""

    dropped: int = 0


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    pos_tags: frozenset = frozenset()

    @property
    def is_word(self) -> bool:
        return self.surface[0].isalnum() or self.surface[0] == "_"


def _has_vowel(stem: str) -> bool:
    return any(c in _VOWELS for c in stem)


def lemma(word: str) -> str:
    """Lowercase and strip one inflectional suffix.

    Suffixes: ``ies -> y``, ``sses -> ss``, ``ing``, ``ed``, sibilant ``es``
    and plain ``s``. A suffix is only removed when at least three characters
    (containing a vowel) remain.
    """
    w = word.lower().replace("’", "'")
    if not w.isalpha():
        return w
    n = len(w)
    if n > 4 and w.endswith("ies"):
        return w[:-3] + "y"
    if w.endswith("sses"):
        return w[:-2]
    for suffix in ("ing", "ed"):
        if w.endswith(suffix):
            stem = w[: -len(suffix)]
            if len(stem) >= 3 and _has_vowel(stem):
                return stem
            return w
    if w.endswith("es") and n - 2 >= 3 and w[:-2].endswith(("ss", "x", "z", "ch", "sh")):
        return w[:-2]
    if w.endswith("s") and not w.endswith(("ss", "us", "is")) and n - 1 >= 3:
        return w[:-1]
    return w


# ---------------------------------------------------------------- lexicon


def _parse_pattern(line: str) -> tuple[bool, tuple[frozenset, ...]]:
    parts = line.split()
    anchored = bool(parts) and parts[0] == "^"
    if anchored:
        parts = parts[1:]
    if not parts:
        raise ValueError("empty pattern")
    return anchored, tuple(frozenset(lemma(a) for a in p.split("|")) for p in parts)


@dataclass(frozen=True)
class Lexicon:
    vague_words: frozenset
    polysemous_words: Mapping[str, int]
    pos_table: Mapping[str, frozenset]
    wh_openers: tuple
    coordinators: frozenset
    prepositions: frozenset
    broad_nouns: frozenset = frozenset()
    version: str = "unversioned"

    def pos(self, lem: str) -> frozenset:
        return self.pos_table.get(lem, frozenset())


_SECTIONS = ("vague", "polysemy", "pos", "wh", "coord", "prep", "broad")


def parse_lexicon(text: str, name: str = "lexicon") -> Lexicon:
    sets: dict[str, set] = {s: set() for s in ("vague", "coord", "prep", "broad")}
    polysemy: dict[str, int] = {}
    pos: dict[str, set] = {}
    wh: list = []
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.endswith(":") and line[:-1] in _SECTIONS:
            section = line[:-1]
            continue
        if section is None:
            raise LexiconError(f"line {lineno}: entry outside of a section")
        if section in sets:
            sets[section].add(lemma(line))
        elif section == "polysemy":
            try:
                word, count = raw.strip().split("\t")
                senses = int(count)
            except ValueError:
                raise LexiconError(f"line {lineno}: expected lemma<TAB>count") from None
            if senses < 2:
                raise LexiconError(f"line {lineno}: sense count must be >= 2")
            polysemy[lemma(word)] = senses
        elif section == "pos":
            try:
                word, tags = raw.strip().split("\t")
            except ValueError:
                raise LexiconError(f"line {lineno}: expected lemma<TAB>TAGS") from None
            pos.setdefault(lemma(word), set()).update(t.strip() for t in tags.split(","))
        elif section == "wh":
            try:
                wh.append(_parse_pattern(line))
            except ValueError as exc:
                raise LexiconError(f"line {lineno}: {exc}") from None
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    return Lexicon(
        vague_words=frozenset(sets["vague"]),
        polysemous_words=MappingProxyType(polysemy),
        pos_table=MappingProxyType({k: frozenset(v) for k, v in pos.items()}),
        wh_openers=tuple(wh),
        coordinators=frozenset(sets["coord"]),
        prepositions=frozenset(sets["prep"]),
        broad_nouns=frozenset(sets["broad"]),
        version=f"{name}@{digest[:12]}",
    )


def load_lexicon(path: str | Path) -> Lexicon:
    path = Path(path)
    return parse_lexicon(path.read_text(encoding="utf-8"), name=path.stem)


@lru_cache(maxsize=None)
def default_lexicon() -> Lexicon:
    text = resources.files("lmsched").joinpath("data/lexicon_v1.txt").read_text(encoding="utf-8")
    return parse_lexicon(text, name="lexicon_v1")


# --------------------------------------------------------------- tokenizer


def _clean(text: str | bytes, diag: Diagnostics | None) -> str:
    dropped = 0
    if isinstance(text, bytes):
        decoded = text.decode("utf-8", errors="ignore")
        dropped += len(text) - len(decoded.encode("utf-8"))
        text = decoded
    kept = []
    for ch in text:
        if not ch.isspace() and unicodedata.category(ch)[0] == "C":
            dropped += 1
            continue
        kept.append(ch)
    if diag is not None:
        diag.dropped += dropped
    return "".join(kept)


def _split_word(word: str) -> list[str]:
    low = word.lower().replace("’", "'")
    if low.endswith(NEGATION) and len(word) > len(NEGATION):
        return [word[: -len(NEGATION)], word[-len(NEGATION):]]
    for clitic in CLITICS:
        if low.endswith(clitic) and len(word) > len(clitic):
            return [word[: -len(clitic)], word[-len(clitic):]]
    return [word]


def tokenize(
    text: str | bytes, lexicon: Lexicon | None = None, diag: Diagnostics | None = None
) -> list[Token]:
    """Split on whitespace and punctuation; each punctuation mark is a token.

    Negation and clitic contractions are separated: ``"don't"`` gives
    ``do`` + ``n't`` and ``"what's"`` gives ``what`` + ``'s``. Control and
    other non-printing characters are dropped and counted in ``diag``.
    """
    lex = lexicon or default_lexicon()
    out = []
    for match in _TOKEN_RE.finditer(_clean(text, diag)):
        piece = match.group()
        parts = _split_word(piece) if ("'" in piece or "’" in piece) else [piece]
        for part in parts:
            lem = lemma(part)
            tags = lex.pos(lem) if (part[0].isalnum() or part[0] == "_") else frozenset()
            out.append(Token(part, lem, tags))
    return out


def sentences(tokens: Sequence[Token]) -> Iterator[Sequence[Token]]:
    start = 0
    for i, tok in enumerate(tokens):
        if tok.surface in SENTENCE_END:
            yield tokens[start : i + 1]
            start = i + 1
    if start < len(tokens):
        yield tokens[start:]


# ----------------------------------------------------------------- scorers


def vague_expression_score(tokens: Sequence[Token], weight: float = 1.0, lexicon: Lexicon | None = None) -> float:
    lex = lexicon or default_lexicon()
    return weight * float(sum(1 for t in tokens if t.lemma in lex.vague_words))


def structural_ambiguity_score(tokens: Sequence[Token], weight: float = 1.0, lexicon: Lexicon | None = None) -> float:
    """Prepositional attachment sites with at least two distinct nouns before them."""
    lex = lexicon or default_lexicon()
    count = 0
    for sent in sentences(tokens):
        nouns: set[str] = set()
        for tok in sent:
            if tok.lemma in lex.prepositions and len(nouns) >= 2:
                count += 1
            if tok.pos_tags & NOUN_TAGS:
                nouns.add(tok.lemma)
    return weight * float(count)


def syntactic_ambiguity_score(tokens: Sequence[Token], weight: float = 1.0, lexicon: Lexicon | None = None) -> float:
    return weight * float(sum(1 for t in tokens if len(t.pos_tags) >= 2))


def semantic_ambiguity_score(tokens: Sequence[Token], weight: float = 1.0, lexicon: Lexicon | None = None) -> float:
    lex = lexicon or default_lexicon()
    extra = sum(max(0, lex.polysemous_words.get(t.lemma, 1) - 1) for t in tokens)
    return weight * float(extra)


def _matches_at(lemmas: Sequence[str], i: int, pattern: tuple[frozenset, ...]) -> bool:
    if i + len(pattern) > len(lemmas):
        return False
    return all(lemmas[i + j] in alts for j, alts in enumerate(pattern))


def open_endedness_score(tokens: Sequence[Token], weight: float = 1.0, lexicon: Lexicon | None = None) -> float:
    """Opener patterns per sentence, plus questions closing on a broad-scope noun."""
    lex = lexicon or default_lexicon()
    count = 0
    for sent in sentences(tokens):
        lemmas = [t.lemma for t in sent]
        for anchored, pattern in lex.wh_openers:
            if anchored:
                count += _matches_at(lemmas, 0, pattern)
            else:
                count += sum(_matches_at(lemmas, i, pattern) for i in range(len(lemmas)))
        if sent[-1].surface == "?":
            words = [t for t in sent if t.is_word]
            if words and words[-1].lemma in lex.broad_nouns:
                count += 1
    return weight * float(count)


def _list_count(sent: Sequence[Token], coordinators: frozenset) -> int:
    # runs of commas whose items are 1-4 words long
    lists = 0
    i, n = 0, len(sent)
    while i < n:
        if sent[i].surface != ",":
            i += 1
            continue
        commas, j = 1, i + 1
        while True:
            k = j
            while k < n and sent[k].is_word:
                k += 1
            gap = k - j
            if k < n and sent[k].surface == "," and 1 <= gap <= 4:
                commas += 1
                j = k + 1
                continue
            tail = [t.lemma for t in sent[j:k]]
            break
        items = commas + 1
        if any(lem in coordinators for lem in tail[1:]):
            items += 1
        if items >= 3:
            lists += 1
        i = j
    return lists


def multi_partness_score(tokens: Sequence[Token], weight: float = 1.0, lexicon: Lexicon | None = None) -> float:
    """Extra question marks, content-joining coordinators and 3+ item lists."""
    lex = lexicon or default_lexicon()
    questions = sum(1 for t in tokens if t.surface == "?")
    count = max(0, questions - 1)
    for sent in sentences(tokens):
        seen_word = False
        for i, tok in enumerate(sent):
            if tok.lemma in lex.coordinators and seen_word and i + 1 < len(sent) and sent[i + 1].is_word:
                count += 1
            seen_word = seen_word or tok.is_word
        count += _list_count(sent, lex.coordinators)
    return weight * float(count)


SCORERS = (
    structural_ambiguity_score,
    syntactic_ambiguity_score,
    semantic_ambiguity_score,
    vague_expression_score,
    open_endedness_score,
    multi_partness_score,
)


# ---------------------------------------------------------- feature vector


@dataclass(frozen=True)
class FeatureVector:
    structural: float = 0.0
    syntactic: float = 0.0
    semantic: float = 0.0
    vague: float = 0.0
    open_ended: float = 0.0
    multi_part: float = 0.0

    def __post_init__(self):
        for name in FEATURE_NAMES:
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"feature {name} must be >= 0, got {value!r}")

    def __iter__(self) -> Iterator[float]:
        return (getattr(self, name) for name in FEATURE_NAMES)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(self)

    @classmethod
    def from_sequence(cls, values: Iterable[float]) -> "FeatureVector":
        values = [float(v) for v in values]
        if len(values) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(values)}")
        return cls(*values)


@dataclass(frozen=True)
class ScorerWeights:
    values: tuple = (1.0,) * 6

    def __post_init__(self):
        if len(self.values) != 6 or any(w < 0 for w in self.values):
            raise ValueError("scorer weights must be six non-negative reals")


def rule_gen(
    text: str | bytes,
    weights: ScorerWeights | None = None,
    lexicon: Lexicon | None = None,
) -> FeatureVector:
    lex = lexicon or default_lexicon()
    w = (weights or ScorerWeights()).values
    tokens = tokenize(text, lex)
    return FeatureVector(*(scorer(tokens, w[i], lex) for i, scorer in enumerate(SCORERS)))


def single_rule_score(text: str | bytes, lexicon: Lexicon | None = None) -> float:
    """Strongest single rule, or the input length when no rule fires."""
    lex = lexicon or default_lexicon()
    tokens = tokenize(text, lex)
    scores = [scorer(tokens, 1.0, lex) for scorer in SCORERS]
    best = max(scores)
    return best if best > 0 else float(len(tokens))


def word_count(text: str | bytes, lexicon: Lexicon | None = None) -> int:
    """Input length |J| in tokens, as used for deadline assignment."""
    return len(tokenize(text, lexicon))
