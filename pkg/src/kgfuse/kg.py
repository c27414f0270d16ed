"""Triple storage: edgelist I/O, merging, subgraph extraction, vocabularies."""

from __future__ import annotations

import io
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

SOURCES = ("metathesaurus", "semantic-network", "other")


class EdgelistError(ValueError):
    """Malformed edgelist line."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str
    source: str = "other"

    def __post_init__(self):
        if not self.head or not self.relation or not self.tail:
            raise ValueError(f"empty field in triple {self.key!r}")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


@dataclass
class TripleSet:
    triples: list[Triple] = field(default_factory=list)
    deduplicated: bool = False

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    def keys(self) -> set[tuple[str, str, str]]:
        return {t.key for t in self.triples}

    def entities(self) -> set[str]:
        out = set()
        for t in self.triples:
            out.add(t.head)
            out.add(t.tail)
        return out

    def relations(self) -> set[str]:
        return {t.relation for t in self.triples}

    def dedup(self) -> "TripleSet":
        """Drop repeated (head, relation, tail); the first occurrence keeps its source."""
        seen = set()
        kept = []
        for t in self.triples:
            if t.key not in seen:
                seen.add(t.key)
                kept.append(t)
        return TripleSet(kept, deduplicated=True)


class Vocab:
    """Bijection between identifier strings and dense indices, in sorted order."""

    def __init__(self, identifiers: Iterable[str]):
        self._items = sorted(set(identifiers))
        self._index = {s: i for i, s in enumerate(self._items)}

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, ident: str) -> bool:
        return ident in self._index

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self._items == other._items

    def __repr__(self) -> str:
        return f"Vocab({len(self)} items)"

    def index(self, ident: str) -> int:
        return self._index[ident]

    def get(self, ident: str, default=None):
        return self._index.get(ident, default)

    def identifier(self, idx: int) -> str:
        return self._items[idx]

    def as_dict(self) -> dict[str, int]:
        return dict(self._index)


@dataclass
class KGStats:
    entities: int
    relations: int
    triples: int
    triples_per_source: dict[str, int]
    degree_min: int
    degree_max: int
    degree_mean: float

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def load_edgelist(stream: TextIO | str, source: str = "other") -> TripleSet:
    """Parse a ``head<TAB>relation<TAB>tail`` edgelist.

    Blank lines and lines starting with ``#`` are skipped.  Any other line
    without exactly three non-empty fields raises :class:`EdgelistError`.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    triples = []
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise EdgelistError(lineno, f"expected 3 tab-separated fields, got {len(fields)}")
        head, rel, tail = (f.strip() for f in fields)
        if not head or not rel or not tail:
            raise EdgelistError(lineno, "empty field")
        triples.append(Triple(head, rel, tail, source))
    return TripleSet(triples)


def write_edgelist(g: TripleSet, stream: TextIO) -> None:
    """Write deduplicated triples sorted by (head, relation, tail)."""
    for key in sorted(g.keys()):
        stream.write("\t".join(key) + "\n")


def merge(*sets: TripleSet) -> TripleSet:
    combined = [t for s in sets for t in s.triples]
    return TripleSet(combined).dedup()


def extract_subgraph(g: TripleSet, concepts: Iterable[str]) -> TripleSet:
    """Keep the triples whose head and tail are both in ``concepts``."""
    keep = set(concepts)
    return TripleSet(
        [t for t in g.triples if t.head in keep and t.tail in keep],
        deduplicated=g.deduplicated,
    )


def build_vocabs(g: TripleSet) -> tuple[Vocab, Vocab]:
    if len(g) == 0:
        raise ValueError("empty graph")
    return Vocab(g.entities()), Vocab(g.relations())


def stats(g: TripleSet) -> KGStats:
    per_source = {s: 0 for s in SOURCES}
    degree: Counter[str] = Counter()
    for t in g.triples:
        per_source[t.source] = per_source.get(t.source, 0) + 1
        degree[t.head] += 1
        degree[t.tail] += 1
    degs = list(degree.values())
    return KGStats(
        entities=len(degree),
        relations=len(g.relations()),
        triples=len(g),
        triples_per_source=per_source,
        degree_min=min(degs) if degs else 0,
        degree_max=max(degs) if degs else 0,
        degree_mean=sum(degs) / len(degs) if degs else 0.0,
    )
