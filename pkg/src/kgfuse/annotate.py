"""Lexicon-based concept annotation.

Greedy longest-match concept lookup with preferred-term canonicalization,
a fixed-window negation rule, and token-level alignment of concepts and
negation bits.
"""

from __future__ import annotations

import io
import json
import unicodedata
from dataclasses import dataclass, replace
from typing import Iterable, TextIO

DEFAULT_TRIGGERS = ("no", "not", "without", "denies", "denied", "negative", "ruled out")
DEFAULT_WINDOW = 5
SENTENCE_END = frozenset({".", "!", "?"})


@dataclass(frozen=True)
class LexiconEntry:
    surface: tuple[str, ...]
    concept_id: str
    preferred_id: str
    score: float = 1.0


@dataclass(frozen=True)
class ConceptAnnotation:
    start: int
    end: int
    concept_id: str
    negated: bool = False
    score: float = 1.0

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "concept": self.concept_id,
                "negated": self.negated, "score": self.score}


@dataclass(frozen=True)
class AlignedToken:
    text: str
    concept_id: str | None = None
    sentiment: int = 0


class ConceptLexicon:
    def __init__(self, entries: Iterable[LexiconEntry] = ()):
        self._by_surface: dict[tuple[str, ...], list[LexiconEntry]] = {}
        self.max_len = 0
        seen = set()
        for e in entries:
            if not e.surface:
                raise ValueError("empty surface form")
            key = (e.surface, e.concept_id)
            if key in seen:
                raise ValueError(f"duplicate lexicon entry {' '.join(e.surface)!r} -> {e.concept_id}")
            seen.add(key)
            self._by_surface.setdefault(e.surface, []).append(e)
            self.max_len = max(self.max_len, len(e.surface))
        for cands in self._by_surface.values():
            cands.sort(key=lambda e: (-e.score, e.concept_id))

    def __len__(self) -> int:
        return sum(len(v) for v in self._by_surface.values())

    def best(self, surface: tuple[str, ...]) -> LexiconEntry | None:
        cands = self._by_surface.get(surface)
        return cands[0] if cands else None

    @classmethod
    def from_tsv(cls, stream: TextIO | str) -> "ConceptLexicon":
        """Read ``surface<TAB>concept_id<TAB>preferred_id<TAB>score`` lines.

        The preferred id and score columns may be left empty (defaulting to
        the concept id and 1.0).
        """
        if isinstance(stream, str):
            stream = io.StringIO(stream)
        entries = []
        for lineno, raw in enumerate(stream, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) < 2 or len(fields) > 4:
                raise ValueError(f"line {lineno}: expected 2-4 tab-separated fields")
            surface = tuple(fields[0].lower().split())
            concept = fields[1].strip()
            preferred = fields[2].strip() if len(fields) > 2 and fields[2].strip() else concept
            try:
                score = float(fields[3]) if len(fields) > 3 and fields[3].strip() else 1.0
            except ValueError:
                raise ValueError(f"line {lineno}: bad score {fields[3]!r}") from None
            if not surface or not concept:
                raise ValueError(f"line {lineno}: empty surface form or concept id")
            entries.append(LexiconEntry(surface, concept, preferred, score))
        return cls(entries)


def load_triggers(stream: TextIO | str) -> list[str]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    return [line.strip().lower() for line in stream if line.strip() and not line.startswith("#")]


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(text: str) -> list[str]:
    """Whitespace split, then peel leading and trailing punctuation runs into their own tokens."""
    tokens = []
    for chunk in text.split():
        i, j = 0, len(chunk)
        while i < j and _is_punct(chunk[i]):
            i += 1
        if i == j:
            tokens.append(chunk)
            continue
        while j > i and _is_punct(chunk[j - 1]):
            j -= 1
        if i:
            tokens.append(chunk[:i])
        tokens.append(chunk[i:j])
        if j < len(chunk):
            tokens.append(chunk[j:])
    return tokens


def match_concepts(tokens: list[str], lexicon: ConceptLexicon) -> list[ConceptAnnotation]:
    """Greedy left-to-right longest match.

    At each position the longest matching surface form wins; equal lengths
    fall back to the entry score (higher first), then the concept id.
    """
    lowered = [t.lower() for t in tokens]
    out = []
    i = 0
    n = len(tokens)
    while i < n:
        hit = None
        for length in range(min(lexicon.max_len, n - i), 0, -1):
            hit = lexicon.best(tuple(lowered[i:i + length]))
            if hit is not None:
                out.append(ConceptAnnotation(i, i + length, hit.preferred_id, False, hit.score))
                i += length
                break
        if hit is None:
            i += 1
    return out


def detect_negation(tokens: list[str], annotations: list[ConceptAnnotation],
                    triggers: Iterable[str] = DEFAULT_TRIGGERS,
                    window: int = DEFAULT_WINDOW) -> list[ConceptAnnotation]:
    """Flag a concept negated when a trigger lies within ``window`` tokens before it.

    A sentence-ending token between the trigger and the concept blocks the
    trigger.  Multi-word triggers must fit entirely inside the window.
    """
    lowered = [t.lower() for t in tokens]
    trig = [tuple(t.split()) for t in triggers]
    trig = [t for t in trig if t]
    out = []
    for ann in annotations:
        lo = max(0, ann.start - window)
        negated = False
        for i in range(lo, ann.start):
            if any(tuple(lowered[i:i + len(t)]) == t and i + len(t) <= ann.start for t in trig):
                if not any(lowered[k] in SENTENCE_END for k in range(i, ann.start)):
                    negated = True
                    break
        out.append(replace(ann, negated=negated))
    return out


def align(tokens: list[str], annotations: list[ConceptAnnotation]) -> list[AlignedToken]:
    concept: list[str | None] = [None] * len(tokens)
    sentiment = [0] * len(tokens)
    for ann in annotations:
        if not (0 <= ann.start < ann.end <= len(tokens)):
            raise ValueError(f"span [{ann.start}, {ann.end}) outside {len(tokens)} tokens")
        for k in range(ann.start, ann.end):
            if concept[k] is not None:
                raise ValueError(f"overlapping annotation spans at token {k}")
            concept[k] = ann.concept_id
            sentiment[k] = int(ann.negated)
    return [AlignedToken(t, c, s) for t, c, s in zip(tokens, concept, sentiment)]


class Annotator:
    """Bundles lexicon and trigger settings; maps raw text to aligned tokens."""

    def __init__(self, lexicon: ConceptLexicon, triggers: Iterable[str] = DEFAULT_TRIGGERS,
                 window: int = DEFAULT_WINDOW):
        self.lexicon = lexicon
        self.triggers = tuple(triggers)
        self.window = window

    def annotate(self, text: str) -> tuple[list[str], list[ConceptAnnotation]]:
        tokens = tokenize(text)
        anns = match_concepts(tokens, self.lexicon)
        return tokens, detect_negation(tokens, anns, self.triggers, self.window)

    def __call__(self, text: str) -> list[AlignedToken]:
        tokens, anns = self.annotate(text)
        return align(tokens, anns)

    def to_json(self, text: str) -> str:
        tokens, anns = self.annotate(text)
        return json.dumps({"text": text, "tokens": tokens,
                           "annotations": [a.to_dict() for a in anns]}, ensure_ascii=False)
