"""DistMult knowledge-graph embeddings trained with logistic loss."""

from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field, asdict
from typing import TextIO

import numpy as np

from ._backend import kernels
from .kg import TripleSet, Vocab, build_vocabs

log = logging.getLogger(__name__)


@dataclass
class KgeTrainConfig:
    dim: int = 100
    lr: float = 1e-4
    batch_size: int = 100
    epochs: int = 50
    negatives: int = 1
    seed: int = 0
    renormalize: bool = False
    init_scale: float = 1.0
    exact: bool = False  # float64 storage, for gradient checking

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")

    @property
    def dtype(self):
        return np.float64 if self.exact else np.float32


@dataclass
class EmbeddingTable:
    entities: np.ndarray
    relations: np.ndarray
    entity_vocab: Vocab | None = None
    relation_vocab: Vocab | None = None

    def __post_init__(self):
        if self.entities.ndim != 2 or self.relations.ndim != 2:
            raise ValueError("embedding matrices must be 2-d")
        if self.entities.shape[1] != self.relations.shape[1]:
            raise ValueError("entity and relation dims differ")
        if self.entity_vocab is not None and len(self.entity_vocab) != len(self.entities):
            raise ValueError("entity vocab size does not match matrix rows")
        if self.relation_vocab is not None and len(self.relation_vocab) != len(self.relations):
            raise ValueError("relation vocab size does not match matrix rows")

    @property
    def dim(self) -> int:
        return self.entities.shape[1]

    def entity_vector(self, ident: str) -> np.ndarray | None:
        if self.entity_vocab is None:
            return None
        idx = self.entity_vocab.get(ident)
        return None if idx is None else self.entities[idx]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.entities.copy(), self.relations.copy(),
                              self.entity_vocab, self.relation_vocab)


@dataclass
class LinkPredMetrics:
    mrr: float
    hits_at_1: float
    hits_at_3: float
    hits_at_10: float
    count: int


@dataclass
class TrainResult:
    table: EmbeddingTable
    loss_log: list[float] = field(default_factory=list)


def init_embeddings(n_entities: int, n_relations: int, config: KgeTrainConfig) -> EmbeddingTable:
    if n_entities < 1 or n_relations < 1:
        raise ValueError("entity and relation counts must be >= 1")
    rng = np.random.default_rng(config.seed)
    bound = config.init_scale / math.sqrt(config.dim)
    ent = rng.uniform(-bound, bound, size=(n_entities, config.dim)).astype(config.dtype)
    rel = rng.uniform(-bound, bound, size=(n_relations, config.dim)).astype(config.dtype)
    return EmbeddingTable(ent, rel)


def score(h, r, t) -> float:
    """DistMult compatibility: sum_i r_i * h_i * t_i."""
    h, r, t = (np.asarray(v, dtype=np.float64) for v in (h, r, t))
    if not (h.shape == r.shape == t.shape):
        raise ValueError(f"dimension mismatch: {h.shape}, {r.shape}, {t.shape}")
    return float(np.sum(r * (h * t)))  # h*t first so swapping h and t is bit-exact


def logistic_loss(sigma: float, label: int) -> float:
    """log(1 + exp(-y * sigma)), stable for large |sigma|."""
    x = -label * sigma
    if x > 0:
        return x + math.log1p(math.exp(-x))
    return math.log1p(math.exp(x))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def loss_scale(sigma: float, label: int) -> float:
    """d loss / d sigma."""
    return -label * _sigmoid(-label * sigma)


def gradients(triple: tuple[int, int, int], label: int, table: EmbeddingTable) -> dict:
    """Row gradients of the logistic loss for one (head, relation, tail) index triple.

    Returns ``{"entity": {row: grad}, "relation": {row: grad}}``; a self-loop
    contributes a single entity row holding the summed head and tail parts.
    """
    hi, ri, ti = triple
    n_e, n_r = len(table.entities), len(table.relations)
    if not (0 <= hi < n_e and 0 <= ti < n_e and 0 <= ri < n_r):
        raise IndexError(f"triple {triple} out of range ({n_e} entities, {n_r} relations)")
    h = table.entities[hi].astype(np.float64)
    r = table.relations[ri].astype(np.float64)
    t = table.entities[ti].astype(np.float64)
    g = loss_scale(float(np.sum(r * h * t)), label)
    ent_grads = {hi: g * r * t}
    ent_grads[ti] = ent_grads.get(ti, 0.0) + g * r * h
    return {"entity": ent_grads, "relation": {ri: g * h * t}}


def corrupt(heads, rels, tails, n_entities: int, k: int, rng: np.random.Generator):
    """k negatives per positive: replace head or tail (fair coin) with a different entity."""
    if n_entities < 2:
        raise ValueError("negative sampling needs at least 2 entities")
    heads = np.repeat(np.asarray(heads, dtype=np.int64), k)
    rels = np.repeat(np.asarray(rels, dtype=np.int64), k)
    tails = np.repeat(np.asarray(tails, dtype=np.int64), k)
    n = len(heads)
    corrupt_head = rng.random(n) < 0.5
    draw = rng.integers(0, n_entities - 1, size=n)
    old = np.where(corrupt_head, heads, tails)
    new = draw + (draw >= old)
    return (np.where(corrupt_head, new, heads), rels, np.where(corrupt_head, tails, new))


def negative_sample(triple, n_entities: int, k: int, rng: np.random.Generator) -> list[tuple[int, int, int]]:
    if n_entities < 2:
        raise ValueError("negative sampling needs at least 2 entities")
    if k == 0:
        return []
    h, r, t = corrupt([triple[0]], [triple[1]], [triple[2]], n_entities, k, rng)
    return [(int(a), int(b), int(c)) for a, b, c in zip(h, r, t)]


def index_triples(g: TripleSet, entity_vocab: Vocab, relation_vocab: Vocab) -> np.ndarray:
    """(n, 3) int64 array of (head, relation, tail) indices."""
    try:
        rows = [(entity_vocab.index(t.head), relation_vocab.index(t.relation), entity_vocab.index(t.tail))
                for t in g]
    except KeyError as exc:
        raise KeyError(f"identifier not in vocabulary: {exc.args[0]}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def train(g: TripleSet, config: KgeTrainConfig, table: EmbeddingTable | None = None) -> TrainResult:
    """Mini-batch SGD over shuffled positives, each paired with ``config.negatives`` corruptions.

    The batch gradient is the sum of per-triple gradients, evaluated at the
    table as it stood at the start of the batch.
    """
    if len(g) == 0:
        raise ValueError("empty graph")
    g = g.dedup()
    ent_vocab, rel_vocab = build_vocabs(g)
    if table is None:
        table = init_embeddings(len(ent_vocab), len(rel_vocab), config)
    table = EmbeddingTable(table.entities.copy(), table.relations.copy(), ent_vocab, rel_vocab)
    idx = index_triples(g, ent_vocab, rel_vocab)
    n_ent = len(ent_vocab)
    k = config.negatives if n_ent >= 2 else 0
    rng = np.random.default_rng([config.seed, 1])
    losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(idx))
        total, count = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = idx[order[start:start + config.batch_size]]
            h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
            if k:
                nh, nr, nt = corrupt(h, r, t, n_ent, k, rng)
                h, r, t = np.concatenate([h, nh]), np.concatenate([r, nr]), np.concatenate([t, nt])
            y = np.concatenate([np.ones(len(batch)), -np.ones(len(h) - len(batch))])
            total += kernels.sgd_step(table.entities, table.relations,
                                      np.ascontiguousarray(h), np.ascontiguousarray(r),
                                      np.ascontiguousarray(t), y, config.lr, config.renormalize)
            count += len(h)
        losses.append(total / count)
        log.debug("epoch %d mean loss %.6f", epoch + 1, losses[-1])
    if not np.all(np.isfinite(table.entities)) or not np.all(np.isfinite(table.relations)):
        raise FloatingPointError("training diverged: non-finite embeddings")
    return TrainResult(table, losses)


def _csr(groups: dict, keys: list, exclude: list):
    ptr = [0]
    flat = []
    for key, ex in zip(keys, exclude):
        others = [e for e in groups.get(key, ()) if e != ex]
        flat.extend(others)
        ptr.append(len(flat))
    return np.array(ptr, dtype=np.int64), np.array(flat, dtype=np.int64)


def evaluate_link_prediction(table: EmbeddingTable, test, known=None) -> LinkPredMetrics:
    """Filtered MRR and hits@{1,3,10}, ranking both tails and heads.

    ``test`` and ``known`` are TripleSets (resolved through the table's
    vocabularies) or (n, 3) index arrays.
    """
    test_idx = _as_index(table, test)
    if len(test_idx) == 0:
        raise ValueError("empty test set")
    known_idx = _as_index(table, known) if known is not None else test_idx
    n_e = len(table.entities)
    if test_idx.min() < 0 or test_idx[:, [0, 2]].max() >= n_e or test_idx[:, 1].max() >= len(table.relations):
        raise IndexError("test triple index out of range")

    tails_of: dict = {}
    heads_of: dict = {}
    for h, r, t in np.vstack([known_idx, test_idx]).tolist():
        tails_of.setdefault((h, r), set()).add(t)
        heads_of.setdefault((r, t), set()).add(h)

    E = table.entities.astype(np.float64)
    R = table.relations.astype(np.float64)
    h, r, t = test_idx[:, 0], test_idx[:, 1], test_idx[:, 2]
    tail_scores = np.ascontiguousarray((E[h] * R[r]) @ E.T)
    head_scores = np.ascontiguousarray((R[r] * E[t]) @ E.T)
    ptr_t, flt_t = _csr(tails_of, list(zip(h.tolist(), r.tolist())), t.tolist())
    ptr_h, flt_h = _csr(heads_of, list(zip(r.tolist(), t.tolist())), h.tolist())
    ranks = np.concatenate([
        kernels.filtered_ranks(tail_scores, np.ascontiguousarray(t), ptr_t, flt_t),
        kernels.filtered_ranks(head_scores, np.ascontiguousarray(h), ptr_h, flt_h),
    ]).astype(np.float64)
    return LinkPredMetrics(
        mrr=float(np.mean(1.0 / ranks)),
        hits_at_1=float(np.mean(ranks <= 1)),
        hits_at_3=float(np.mean(ranks <= 3)),
        hits_at_10=float(np.mean(ranks <= 10)),
        count=len(ranks),
    )


def _as_index(table: EmbeddingTable, triples) -> np.ndarray:
    if isinstance(triples, TripleSet):
        if table.entity_vocab is None or table.relation_vocab is None:
            raise ValueError("table has no vocabularies to resolve identifiers")
        return index_triples(triples, table.entity_vocab, table.relation_vocab)
    return np.asarray(triples, dtype=np.int64).reshape(-1, 3)


# -- checkpoint I/O ---------------------------------------------------------

def save_table(table: EmbeddingTable, stream: TextIO) -> None:
    """Text checkpoint: ``distmult <n_ent> <n_rel> <dim>`` then one row per line."""
    n_e, d = table.entities.shape
    n_r = len(table.relations)
    fmt = "%.9g" if table.entities.dtype == np.float32 else "%.17g"
    ent_ids = list(table.entity_vocab) if table.entity_vocab is not None else [f"e{i}" for i in range(n_e)]
    rel_ids = list(table.relation_vocab) if table.relation_vocab is not None else [f"r{i}" for i in range(n_r)]
    stream.write(f"distmult {n_e} {n_r} {d}\n")
    for ids, mat in ((ent_ids, table.entities), (rel_ids, table.relations)):
        for ident, row in zip(ids, mat):
            if not ident or any(c.isspace() for c in ident):
                raise ValueError(f"identifier {ident!r} cannot be written (whitespace)")
            stream.write(ident + " " + " ".join(fmt % v for v in row.tolist()) + "\n")


def load_table(stream: TextIO | str, dtype=np.float32) -> EmbeddingTable:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    header = stream.readline().split()
    if len(header) != 4 or header[0] != "distmult":
        raise ValueError("not a distmult checkpoint")
    n_e, n_r, d = (int(x) for x in header[1:])
    ids, rows = [], []
    for lineno, line in enumerate(stream, start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != d + 1:
            raise ValueError(f"line {lineno}: expected {d} values")
        ids.append(parts[0])
        rows.append([float(x) for x in parts[1:]])
    if len(rows) != n_e + n_r:
        raise ValueError(f"expected {n_e + n_r} rows, found {len(rows)}")
    mat = np.array(rows, dtype=dtype).reshape(-1, d)
    ent_vocab, rel_vocab = Vocab(ids[:n_e]), Vocab(ids[n_e:])
    if list(ent_vocab) != ids[:n_e] or list(rel_vocab) != ids[n_e:]:
        raise ValueError("checkpoint identifiers are not in sorted order or repeat")
    return EmbeddingTable(mat[:n_e].copy(), mat[n_e:].copy(), ent_vocab, rel_vocab)


def write_loss_log(losses: list[float], stream: TextIO) -> None:
    stream.write("epoch,mean_loss\n")
    for i, v in enumerate(losses, start=1):
        stream.write(f"{i},{v:.9g}\n")


def config_dict(config: KgeTrainConfig) -> dict:
    return asdict(config)
