"""Seeded synthetic corpora whose labels depend on knowledge-graph relations.

Two generators:

* :func:`cluster_graph` -- a small cluster-structured multi-relational graph
  with a train/held-out triple split, for link-prediction checks.
* :func:`generate_synthetic` -- a full bundle (edgelists, lexicon, negation
  triggers, word vectors, train/dev/test JSONL) for the fusion ablation.

In the NLI bundle a pair ``patient has <A>`` / ``patient has <B>`` is
entailment iff ``A is-a B`` is in the graph, contradiction iff ``A`` and
``B`` are linked by ``opposite-of``, and neutral otherwise.  Negating
exactly one side swaps entailment and contradiction.  Concept pairs are
partitioned between splits, so dev/test pairs never occur in training.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .harness import DatasetSplits, NLIExample, write_jsonl
from .kg import Triple, TripleSet

ISA = "is-a"
OPPOSITE = "opposite-of"
DISTRACTOR = "associated-with"

FILLERS = ("today", "reportedly", "currently", "again", "on", "admission", "at", "home",
           "per", "family", "in", "clinic", "since", "yesterday", "the", "mild")
_ONSETS = ("b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl", "dr", "st", "tr")
_NUCLEI = ("a", "e", "i", "o", "u", "ai", "ou")
_SUFFIXES = ("itis", "osis", "emia", "algia", "oma", "opathy", "uria", "ectasia")


def cluster_graph(n_entities: int = 50, n_clusters: int = 10, n_train: int = 200, n_test: int = 50,
                  seed: int = 0) -> tuple[TripleSet, TripleSet]:
    """Two relations over clustered entities: ``same-cluster`` and ``next-cluster``.

    Entity ``E<i>`` sits in cluster ``i % n_clusters``.  ``n_train + n_test``
    distinct triples are drawn from all valid ones and split in order.
    """
    cluster = np.arange(n_entities) % n_clusters
    cands = [(a, "same-cluster", b) for a in range(n_entities) for b in range(n_entities)
             if a != b and cluster[a] == cluster[b]]
    cands += [(a, "next-cluster", b) for a in range(n_entities) for b in range(n_entities)
              if cluster[b] == (cluster[a] + 1) % n_clusters]
    if n_train + n_test > len(cands):
        raise ValueError(f"only {len(cands)} valid triples for {n_train + n_test} requested")
    rng = np.random.default_rng(seed)
    chosen = [cands[i] for i in rng.choice(len(cands), n_train + n_test, replace=False)]
    width = len(str(n_entities - 1))

    def as_set(rows):
        return TripleSet([Triple(f"E{a:0{width}d}", r, f"E{b:0{width}d}") for a, r, b in rows], True)

    return as_set(chosen[:n_train]), as_set(chosen[n_train:])


@dataclass
class SyntheticSpec:
    concepts: int = 60
    groups: int = 12
    isa_edges: int = 120
    opposite_edges: int = 150
    distractor_edges: int = 150
    train: int = 2000
    dev: int = 300
    test: int = 300
    flip_fraction: float = 0.0
    neutral_pairs: int = 300
    label_weights: tuple[float, float, float] = (0.3, 0.3, 0.4)
    holdout: tuple[float, float] = (0.15, 0.15)
    synonym_fraction: float = 0.3
    multiword_fraction: float = 0.3
    decoy_fraction: float = 0.0
    negation_cues: tuple[str, ...] = ("no",)
    heldout_cues: tuple[str, ...] = ()  # cues that appear only in dev and test
    fillers: tuple[str, ...] = FILLERS
    max_fillers: int = 2
    vector_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        counts = (self.concepts, self.isa_edges, self.opposite_edges, self.distractor_edges,
                  self.train, self.dev, self.test, self.neutral_pairs, self.vector_dim)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be >= 0")
        for frac in (self.flip_fraction, self.synonym_fraction, self.multiword_fraction,
                     self.decoy_fraction, *self.holdout):
            if not 0.0 <= frac <= 1.0:
                raise ValueError("fractions must be in [0, 1]")
        if not self.negation_cues:
            raise ValueError("negation_cues must not be empty")
        if set(self.heldout_cues) & set(self.negation_cues):
            raise ValueError("heldout_cues must not overlap negation_cues")
        if sum(self.holdout) >= 1.0:
            raise ValueError("holdout fractions must leave room for training pairs")


@dataclass
class SyntheticBundle:
    files: dict[str, str]
    splits: DatasetSplits
    kg: TripleSet
    surfaces: dict[str, list[str]] = field(default_factory=dict)

    def write(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (out / name).write_text(text, encoding="utf-8")


def _make_words(n: int, rng: np.random.Generator, reserved: set[str]) -> list[str]:
    words: list[str] = []
    seen = set(reserved)
    while len(words) < n:
        w = "".join(rng.choice(_ONSETS) + rng.choice(_NUCLEI) for _ in range(2)) + rng.choice(_SUFFIXES)
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def _split_pairs(pairs: list, holdout: tuple[float, float], rng: np.random.Generator):
    pairs = [pairs[i] for i in rng.permutation(len(pairs))]
    n_dev = int(round(holdout[0] * len(pairs)))
    n_test = int(round(holdout[1] * len(pairs)))
    return {"test": pairs[:n_test], "dev": pairs[n_test:n_test + n_dev], "train": pairs[n_test + n_dev:]}


def generate_synthetic(spec: SyntheticSpec) -> SyntheticBundle:
    rng = np.random.default_rng([spec.seed, 7])

    width = len(str(max(spec.concepts - 1, 0)))
    ids = [f"C{i:0{width}d}" for i in range(spec.concepts)]
    reserved = set(spec.fillers) | {"patient", "has"} | {w for cue in (*spec.negation_cues, *spec.heldout_cues) for w in cue.split()}
    words = _make_words(spec.concepts * 3, rng, reserved)
    surfaces: dict[str, list[str]] = {}
    lexicon_lines = []
    for k, cid in enumerate(ids):
        forms = [words[3 * k]]
        if rng.random() < spec.multiword_fraction:
            forms[0] = forms[0] + " " + words[3 * k + 1]
        if rng.random() < spec.synonym_fraction:
            forms.append(words[3 * k + 2])
        surfaces[cid] = forms
        lexicon_lines.append(f"{forms[0]}\t{cid}\t{cid}\t1.0")
        for j, form in enumerate(forms[1:], start=1):
            lexicon_lines.append(f"{form}\t{cid}-S{j}\t{cid}\t0.9")

    # concepts fall into groups; is-a stays inside a group, opposite-of joins
    # paired groups (0-1, 2-3, ...), distractors link any other two groups
    group = rng.permutation(spec.concepts) % max(spec.groups, 1)
    rank = rng.permutation(spec.concepts)
    within, opposed, cross = [], [], []
    for a in range(spec.concepts):
        for b in range(a + 1, spec.concepts):
            ga, gb = group[a], group[b]
            if spec.groups <= 1:
                cross.append((a, b))
            elif ga == gb:
                within.append((a, b))
            elif ga ^ 1 == gb:
                opposed.append((a, b))
            else:
                cross.append((a, b))
    if spec.groups <= 1:
        within = opposed = cross
    needs = ((spec.isa_edges, within, "is-a"), (spec.opposite_edges, opposed, "opposite-of"))
    for count, pool, name in needs:
        if count > len(pool):
            raise ValueError(f"{count} {name} edges requested, only {len(pool)} candidate pairs")

    def sample(pool, k, taken):
        free = [p for p in pool if p not in taken]
        if k > len(free):
            raise ValueError(f"{k} pairs requested, only {len(free)} free candidate pairs")
        return [free[i] for i in sorted(rng.choice(len(free), k, replace=False))] if k else []

    taken: set = set()
    isa = sample(within, spec.isa_edges, taken)
    taken.update(isa)
    opp = sample(opposed, spec.opposite_edges, taken)
    taken.update(opp)
    dis = sample(cross, spec.distractor_edges, taken)
    taken.update(dis)
    neutral = sample(cross, spec.neutral_pairs, taken)
    # the more specific concept (higher rank) is-a the more general one
    isa = [(a, b) if rank[a] > rank[b] else (b, a) for a, b in isa]
    triples = [Triple(ids[a], ISA, ids[b], "metathesaurus") for a, b in isa]
    triples += [Triple(ids[a], OPPOSITE, ids[b], "metathesaurus") for a, b in opp]
    triples += [Triple(ids[a], DISTRACTOR, ids[b], "semantic-network") for a, b in dis]
    # distractor-linked pairs are neutral too
    neutral = neutral + dis

    pools = {
        "entailment": _split_pairs(isa, spec.holdout, rng),
        "contradiction": _split_pairs(opp, spec.holdout, rng),
        "neutral": _split_pairs(neutral, spec.holdout, rng),
    }
    labels = ("entailment", "contradiction", "neutral")
    weights = np.array(spec.label_weights, dtype=np.float64)

    cues = list(spec.negation_cues)

    def _fillers() -> list[str]:
        if not spec.fillers:
            return []
        k = int(rng.integers(0, spec.max_fillers + 1))
        return [spec.fillers[i] for i in rng.integers(len(spec.fillers), size=k)]

    def mention(cid: str, negated: bool, cues: list[str]) -> list[str]:
        forms = surfaces[cid]
        form = forms[int(rng.integers(len(forms)))]
        body = ["patient", "has"]
        if negated:
            body.append(cues[int(rng.integers(len(cues)))])
        body += form.split()
        pre, post = _fillers(), _fillers()
        if spec.decoy_fraction and rng.random() < spec.decoy_fraction:
            # a cue that does not reach the concept: it sits in an earlier clause
            pre = [cues[int(rng.integers(len(cues)))]] + pre + ["."]
        return pre + body + post

    splits = {}
    for split in ("train", "dev", "test"):
        n = getattr(spec, split)
        avail = np.array([len(pools[lab][split]) > 0 for lab in labels])
        if n and not avail.any():
            raise ValueError(f"no concept pairs available for the {split} split")
        w = np.where(avail, weights, 0.0)
        if n and w.sum() <= 0:
            raise ValueError(f"label weights leave no available class for the {split} split")
        split_cues = list(spec.heldout_cues) if split != "train" and spec.heldout_cues else cues
        examples = []
        for _ in range(n):
            base = labels[int(rng.choice(3, p=w / w.sum()))]
            pool = pools[base][split]
            a, b = pool[int(rng.integers(len(pool)))]
            if base != "entailment" and rng.random() < 0.5:
                a, b = b, a
            flipped = bool(rng.random() < spec.flip_fraction)
            neg_side = int(rng.integers(2)) if flipped else -1
            label = base
            if flipped and base != "neutral":
                label = "contradiction" if base == "entailment" else "entailment"
            premise = " ".join(mention(ids[a], neg_side == 0, split_cues))
            hypothesis = " ".join(mention(ids[b], neg_side == 1, split_cues))
            examples.append(NLIExample(premise, hypothesis, label,
                                       {"concepts": [ids[a], ids[b]], "flipped": flipped}))
        splits[split] = examples

    vocab = sorted({tok for exs in splits.values() for ex in exs
                    for tok in (ex.premise + " " + ex.hypothesis).split()}
                   | reserved | {w for forms in surfaces.values() for f in forms for w in f.split()} | {"."})
    vec_rng = np.random.default_rng([spec.seed, 11])
    vec_lines = []
    for tok in vocab:
        vec = vec_rng.normal(0.0, 1.0 / np.sqrt(max(spec.vector_dim, 1)), size=spec.vector_dim)
        vec_lines.append(tok + " " + " ".join(f"{v:.6f}" for v in vec))

    def jsonl(exs):
        buf = io.StringIO()
        write_jsonl(exs, buf)
        return buf.getvalue()

    def edgelist(source):
        return "".join(f"{t.head}\t{t.relation}\t{t.tail}\n" for t in triples if t.source == source)

    files = {
        "kg_metathesaurus.tsv": edgelist("metathesaurus"),
        "kg_semantic_network.tsv": edgelist("semantic-network"),
        "lexicon.tsv": "\n".join(lexicon_lines) + "\n",
        "triggers.txt": "\n".join(dict.fromkeys(cues + list(spec.heldout_cues))) + "\n",
        "vectors.txt": "\n".join(vec_lines) + "\n" if spec.vector_dim else "",
        "train.jsonl": jsonl(splits["train"]),
        "dev.jsonl": jsonl(splits["dev"]),
        "test.jsonl": jsonl(splits["test"]),
    }
    return SyntheticBundle(files, DatasetSplits(**splits), TripleSet(triples, True), surfaces)
