"""Per-token contextual vectors fused with KG embeddings and negation bits."""

from __future__ import annotations

import hashlib
import io
import logging
from dataclasses import dataclass, field
from typing import Protocol, Sequence, TextIO

import numpy as np

from .annotate import AlignedToken
from .kge import EmbeddingTable

log = logging.getLogger(__name__)

OOV_POLICIES = ("zero", "hashed")


class ContextProvider(Protocol):
    dim: int

    def vectors(self, tokens: Sequence[str]) -> np.ndarray: ...


class StaticEmbeddingTable:
    """Token -> vector lookup loaded from a GloVe-style text file."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int, oov: str = "zero", seed: int = 0):
        if oov not in OOV_POLICIES:
            raise ValueError(f"unknown OOV policy {oov!r}")
        self._vectors = vectors
        self.dim = dim
        self.oov = oov
        self.seed = seed

    def __len__(self):
        return len(self._vectors)

    def __contains__(self, token: str) -> bool:
        return token in self._vectors

    def lookup(self, token: str) -> np.ndarray:
        """Stored vector, else the lowercased form, else the OOV vector."""
        vec = self._vectors.get(token)
        if vec is None:
            vec = self._vectors.get(token.lower())
        if vec is not None:
            return vec.copy()
        if self.oov == "zero":
            return np.zeros(self.dim)
        return hashed_vector(token, self.dim, self.seed)

    def is_oov(self, token: str) -> bool:
        return token not in self._vectors and token.lower() not in self._vectors

    def vectors(self, tokens: Sequence[str]) -> np.ndarray:
        if not tokens:
            return np.zeros((0, self.dim))
        return np.stack([self.lookup(t) for t in tokens])


def hashed_vector(token: str, dim: int, seed: int = 0) -> np.ndarray:
    digest = hashlib.blake2b(f"{seed}\x00{token}".encode("utf-8"), digest_size=16).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
    return rng.uniform(-0.1, 0.1, size=dim)


def load_word_vectors(stream: TextIO | str, oov: str = "zero", seed: int = 0) -> StaticEmbeddingTable:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for lineno, line in enumerate(stream, start=1):
        parts = line.rstrip("\r\n").split(" ")
        parts = [p for p in parts if p]
        if not parts:
            continue
        token, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
            if dim == 0:
                raise ValueError(f"line {lineno}: no vector values")
        elif len(values) != dim:
            raise ValueError(f"line {lineno}: expected {dim} values, found {len(values)}")
        try:
            vec = np.array([float(v) for v in values])
        except ValueError:
            raise ValueError(f"line {lineno}: non-numeric vector value") from None
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"line {lineno}: non-finite vector value")
        vectors[token] = vec
    if dim is None:
        raise ValueError("no word vectors found")
    return StaticEmbeddingTable(vectors, dim, oov=oov, seed=seed)


def write_word_vectors(vectors: dict[str, np.ndarray], stream: TextIO) -> None:
    for token, vec in vectors.items():
        stream.write(token + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")


@dataclass(frozen=True)
class FusionConfig:
    use_kg: bool = True
    use_sentiment: bool = True

    @property
    def name(self) -> str:
        if not self.use_kg:
            return "base" if not self.use_sentiment else "w/sentiment"
        return "w/KG+sentiment" if self.use_sentiment else "w/KG"


ABLATIONS = {
    "base": FusionConfig(False, False),
    "w/KG": FusionConfig(True, False),
    "w/KG+sentiment": FusionConfig(True, True),
}


@dataclass
class FusedSequence:
    matrix: np.ndarray
    has_concept: np.ndarray
    oov: np.ndarray
    unknown_concepts: int = 0
    tokens: list[str] = field(default_factory=list)

    @property
    def width(self) -> int:
        return self.matrix.shape[1]

    def provenance(self) -> dict:
        return {"tokens": len(self.tokens), "width": self.width,
                "concepts": int(self.has_concept.sum()), "oov": int(self.oov.sum()),
                "unknown_concepts": self.unknown_concepts}


def fused_width(ctx_dim: int, kg_dim: int, config: FusionConfig) -> int:
    return ctx_dim + (kg_dim if config.use_kg else 0) + (1 if config.use_sentiment else 0)


def fuse(aligned: Sequence[AlignedToken], ctx: ContextProvider, kg: EmbeddingTable | None,
         config: FusionConfig) -> FusedSequence:
    """Row per token: contextual vector, then KG slice, then the negation bit.

    Tokens without a concept, or whose concept is missing from the KG
    vocabulary, get an all-zero KG slice.
    """
    tokens = [a.text for a in aligned]
    n = len(tokens)
    parts = [np.asarray(ctx.vectors(tokens), dtype=np.float64).reshape(n, ctx.dim)]
    has_concept = np.array([a.concept_id is not None for a in aligned], dtype=bool)
    unknown = 0
    if config.use_kg:
        if kg is None:
            raise ValueError("use_kg requires an embedding table")
        slab = np.zeros((n, kg.dim))
        for i, a in enumerate(aligned):
            if a.concept_id is None:
                continue
            vec = kg.entity_vector(a.concept_id)
            if vec is None:
                unknown += 1
                continue
            slab[i] = vec
        parts.append(slab)
    if config.use_sentiment:
        parts.append(np.array([[float(a.sentiment)] for a in aligned]).reshape(n, 1))
    if unknown:
        log.debug("%d concept tokens missing from KG vocabulary", unknown)
    oov = np.array([ctx.is_oov(t) if hasattr(ctx, "is_oov") else False for t in tokens], dtype=bool)
    return FusedSequence(np.concatenate(parts, axis=1), has_concept, oov, unknown, tokens)
