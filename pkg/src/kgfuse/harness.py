"""Datasets, accuracy, and the three-way fusion ablation."""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from . import esim
from .annotate import AlignedToken, Annotator
from .embed import ABLATIONS, ContextProvider, FusionConfig, fuse
from .esim import LABEL_INDEX, LABELS, EncodedPair, EsimConfig
from .kge import EmbeddingTable

log = logging.getLogger(__name__)


@dataclass
class NLIExample:
    premise: str
    hypothesis: str
    label: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.premise.strip() or not self.hypothesis.strip():
            raise ValueError("empty sentence")
        if self.label not in LABEL_INDEX:
            raise ValueError(f"unknown label {self.label!r}")

    def to_json(self) -> str:
        obj = {"sentence1": self.premise, "sentence2": self.hypothesis, "gold_label": self.label}
        obj.update(self.meta)
        return json.dumps(obj, sort_keys=True, ensure_ascii=False)


@dataclass
class DatasetSplits:
    train: list[NLIExample] = field(default_factory=list)
    dev: list[NLIExample] = field(default_factory=list)
    test: list[NLIExample] = field(default_factory=list)


def load_jsonl(stream: TextIO | str) -> list[NLIExample]:
    """Read ``sentence1``/``sentence2``/``gold_label`` records, one per line.

    Other fields are kept in ``meta``.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    out = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise ValueError(f"line {lineno}: expected a JSON object")
        try:
            premise, hypothesis, label = obj.pop("sentence1"), obj.pop("sentence2"), obj.pop("gold_label")
        except KeyError as exc:
            raise ValueError(f"line {lineno}: missing field {exc.args[0]}") from None
        try:
            out.append(NLIExample(premise, hypothesis, label, obj))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    return out


def write_jsonl(examples: Iterable[NLIExample], stream: TextIO) -> None:
    for ex in examples:
        stream.write(ex.to_json() + "\n")


def load_splits(directory: str | Path) -> DatasetSplits:
    d = Path(directory)
    parts = {}
    for name in ("train", "dev", "test"):
        path = d / f"{name}.jsonl"
        parts[name] = load_jsonl(path.read_text(encoding="utf-8")) if path.exists() else []
    return DatasetSplits(**parts)


def accuracy(predictions: Sequence[str], golds: Sequence[str]) -> float:
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds differ in length")
    if not golds:
        raise ValueError("accuracy of an empty set")
    return sum(p == g for p, g in zip(predictions, golds)) / len(golds)


# -- encoding ---------------------------------------------------------------

@dataclass
class Artifacts:
    annotator: Annotator
    context: ContextProvider
    kg: EmbeddingTable | None = None


def annotate_examples(examples: Sequence[NLIExample], annotator: Annotator):
    return [(annotator(ex.premise), annotator(ex.hypothesis)) for ex in examples]


def encode(aligned: Sequence[tuple[list[AlignedToken], list[AlignedToken]]], labels: Sequence[str],
           artifacts: Artifacts, fusion: FusionConfig) -> list[EncodedPair]:
    out = []
    for (p, h), label in zip(aligned, labels):
        fp = fuse(p, artifacts.context, artifacts.kg, fusion)
        fh = fuse(h, artifacts.context, artifacts.kg, fusion)
        out.append(EncodedPair(fp.matrix, fh.matrix, LABEL_INDEX[label]))
    return out


def encode_examples(examples: Sequence[NLIExample], artifacts: Artifacts, fusion: FusionConfig) -> list[EncodedPair]:
    return encode(annotate_examples(examples, artifacts.annotator), [e.label for e in examples],
                  artifacts, fusion)


def predict_labels(params: esim.EsimParams, pairs: Sequence[EncodedPair]) -> list[str]:
    _, _, probs = esim.evaluate(params, pairs)
    return [LABELS[i] for i in np.argmax(probs, axis=1)]


# -- ablation ---------------------------------------------------------------

@dataclass
class AblationReport:
    rows: list[tuple[str, float]] = field(default_factory=list)
    predictions: dict[str, list[str]] = field(default_factory=dict)
    train_reports: dict[str, esim.TrainReport] = field(default_factory=dict)
    params: dict[str, esim.EsimParams] = field(default_factory=dict)

    def accuracy_of(self, name: str) -> float:
        return dict(self.rows)[name]

    def subset_accuracy(self, name: str, examples: Sequence[NLIExample], keep) -> float:
        """Accuracy of one config restricted to test examples where ``keep(example)`` holds."""
        idx = [i for i, e in enumerate(examples) if keep(e)]
        return accuracy([self.predictions[name][i] for i in idx], [examples[i].label for i in idx])

    def to_csv(self) -> str:
        return "config,accuracy\n" + "".join(f"{n},{a:.6f}\n" for n, a in self.rows)

    def format_table(self) -> str:
        width = max(len(n) for n, _ in self.rows) if self.rows else 6
        lines = [f"{'config':<{width}}  accuracy", "-" * (width + 10)]
        lines += [f"{n:<{width}}  {100 * a:6.2f}%" for n, a in self.rows]
        return "\n".join(lines)


def run_ablation(splits: DatasetSplits, artifacts: Artifacts, config: EsimConfig,
                 configs: dict[str, FusionConfig] | None = None) -> AblationReport:
    """Train and test one ESIM per fusion configuration, all from the same seed."""
    configs = configs or ABLATIONS
    aligned = {name: annotate_examples(getattr(splits, name), artifacts.annotator)
               for name in ("train", "dev", "test")}
    labels = {name: [e.label for e in getattr(splits, name)] for name in ("train", "dev", "test")}
    report = AblationReport()
    for name, fusion in configs.items():
        enc = {s: encode(aligned[s], labels[s], artifacts, fusion) for s in aligned}
        params, train_report = esim.train_nli(enc["train"], enc["dev"], config)
        preds = predict_labels(params, enc["test"])
        acc = accuracy(preds, labels["test"])
        log.info("ablation %s: test accuracy %.4f", name, acc)
        report.rows.append((name, acc))
        report.predictions[name] = preds
        report.train_reports[name] = train_report
        report.params[name] = params
    return report
