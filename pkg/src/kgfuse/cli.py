"""Command-line entry point: ``kgfuse <command> [options]``.

Configuration is layered.  Built-in defaults are overridden by an INI file
(``--config``), then by ``KGFUSE_<SECTION>_<KEY>`` environment variables,
then by ``--<section>.<key>`` flags.  Every command writes
``run_manifest.json`` into its output directory.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

from . import __version__, esim, harness, kg, kge
from ._backend import BACKEND
from .annotate import DEFAULT_TRIGGERS, DEFAULT_WINDOW, Annotator, ConceptLexicon, load_triggers
from .embed import ABLATIONS, OOV_POLICIES, FusionConfig, load_word_vectors
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger("kgfuse")

ENV_PREFIX = "KGFUSE_"
MANIFEST = "run_manifest.json"


class UsageError(Exception):
    """Bad arguments, configuration or missing inputs (exit 2)."""


def _defaults() -> dict[str, dict]:
    kge_cfg = {k: v for k, v in asdict(kge.KgeTrainConfig()).items() if k not in ("seed", "exact")}
    esim_cfg = {k: v for k, v in asdict(esim.EsimConfig()).items() if k != "seed"}
    synth = {f.name: getattr(SyntheticSpec(), f.name) for f in fields(SyntheticSpec) if f.name != "seed"}
    return {
        "run": {"seed": 0},
        "kge": kge_cfg,
        "esim": esim_cfg,
        "fusion": {"use_kg": True, "use_sentiment": True, "oov": "zero"},
        "annotate": {"window": DEFAULT_WINDOW},
        "synth": synth,
    }


DEFAULTS = _defaults()

# config sections each command reads (``run`` is always included)
SECTIONS = {
    "build-kg": (),
    "train-kge": ("kge",),
    "eval-kge": (),
    "annotate": ("annotate",),
    "train-nli": ("esim", "fusion", "annotate"),
    "eval-nli": ("fusion", "annotate"),
    "predict": ("fusion", "annotate"),
    "synth": ("synth",),
    "ablate": ("esim", "fusion", "annotate"),
}


def _coerce(raw, default, key: str):
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(s) for s in items)
            return tuple(items)
    except ValueError:
        raise UsageError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None
    return raw


def resolve_config(sections, config_path: str | None, flag_values: dict, environ=os.environ) -> dict:
    """Merge defaults, config file, environment and flags for the given sections."""
    wanted = ("run", *sections)
    out = {s: dict(DEFAULTS[s]) for s in wanted}
    layers = []
    if config_path:
        if not Path(config_path).is_file():
            raise UsageError(f"config file not found: {config_path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(config_path, encoding="utf-8")
        except configparser.Error as exc:
            raise UsageError(f"config file: {exc}") from None
        for sec in parser.sections():
            if sec not in DEFAULTS:
                raise UsageError(f"config file: unknown section [{sec}]")
            for key, val in parser.items(sec):
                if key not in DEFAULTS[sec]:
                    raise UsageError(f"config file: unknown key {sec}.{key}")
        layers.append({s: dict(parser.items(s)) for s in parser.sections() if s in wanted})
    env_layer: dict = {}
    for s in wanted:
        for key in DEFAULTS[s]:
            name = f"{ENV_PREFIX}{s}_{key}".upper()
            if name in environ:
                env_layer.setdefault(s, {})[key] = environ[name]
    layers.append(env_layer)
    flag_layer: dict = {}
    for dotted, val in flag_values.items():
        if val is not None:
            s, key = dotted.split(".", 1)
            if s in wanted:
                flag_layer.setdefault(s, {})[key] = val
    layers.append(flag_layer)
    for layer in layers:
        for s, vals in layer.items():
            for key, val in vals.items():
                out[s][key] = _coerce(val, DEFAULTS[s][key], f"{s}.{key}")
    return out


def _digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Tracks inputs and outputs of one command and writes its manifest."""

    def __init__(self, command: str, out_dir: Path, config: dict):
        self.command = command
        self.out_dir = out_dir
        self.config = config
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []

    def input(self, path: str | Path | None, required: bool = True, flag: str = "") -> Path | None:
        if path is None:
            if required:
                raise UsageError(f"missing required input {flag}".rstrip())
            return None
        p = Path(path)
        if not p.is_file():
            raise UsageError(f"input not found: {p}")
        self.inputs[str(p)] = _digest(p)
        return p

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.out_dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text, encoding="utf-8")
        return p

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            "backend": BACKEND,
            "seed": self.config["run"]["seed"],
            "config": {s: {k: list(v) if isinstance(v, tuple) else v for k, v in vals.items()}
                       for s, vals in self.config.items()},
            "inputs": self.inputs,
            "outputs": {n: _digest(self.out_dir / n) for n in self.outputs},
        }
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")


# -- builders ---------------------------------------------------------------

def _build(cls, section: str, **kw):
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[{section}] {exc}") from None


def kge_config(cfg: dict) -> kge.KgeTrainConfig:
    return _build(kge.KgeTrainConfig, "kge", seed=cfg["run"]["seed"], **cfg["kge"])


def esim_config(cfg: dict) -> esim.EsimConfig:
    return _build(esim.EsimConfig, "esim", seed=cfg["run"]["seed"], **cfg["esim"])


def fusion_config(cfg: dict) -> FusionConfig:
    if cfg["fusion"]["oov"] not in OOV_POLICIES:
        raise UsageError(f"[fusion] oov must be one of {', '.join(OOV_POLICIES)}")
    return FusionConfig(cfg["fusion"]["use_kg"], cfg["fusion"]["use_sentiment"])


def _annotator(run: Run, args, cfg: dict) -> Annotator:
    lex_path = run.input(args.lexicon, flag="--lexicon")
    trig_path = run.input(args.triggers, required=False)
    lexicon = ConceptLexicon.from_tsv(lex_path.read_text(encoding="utf-8"))
    triggers = load_triggers(trig_path.read_text(encoding="utf-8")) if trig_path else DEFAULT_TRIGGERS
    return Annotator(lexicon, triggers, cfg["annotate"]["window"])


def _artifacts(run: Run, args, cfg: dict, need_kg: bool) -> harness.Artifacts:
    vec_path = run.input(args.vectors, flag="--vectors")
    kge_path = run.input(args.kge, required=need_kg, flag="--kge")
    annotator = _annotator(run, args, cfg)
    ctx = load_word_vectors(vec_path.read_text(encoding="utf-8"), oov=cfg["fusion"]["oov"],
                            seed=cfg["run"]["seed"])
    table = kge.load_table(kge_path.read_text(encoding="utf-8")) if kge_path else None
    return harness.Artifacts(annotator, ctx, table)


def _splits(run: Run, data_dir: str | None, names) -> harness.DatasetSplits:
    if data_dir is None:
        raise UsageError("--data is required")
    d = Path(data_dir)
    parts = {}
    for name in ("train", "dev", "test"):
        if name in names:
            parts[name] = harness.load_jsonl(run.input(d / f"{name}.jsonl").read_text(encoding="utf-8"))
        else:
            parts[name] = []
    return harness.DatasetSplits(**parts)


# -- commands ---------------------------------------------------------------

def cmd_build_kg(args, run: Run, cfg: dict) -> int:
    groups = [("metathesaurus", args.metathesaurus), ("semantic-network", args.semantic_network),
              ("other", args.edgelist)]
    paths = [(src, run.input(p)) for src, ps in groups for p in (ps or [])]
    concepts_path = run.input(args.concepts, required=False)
    if not paths:
        raise UsageError("no edgelists given")
    sets = []
    for src, p in paths:
        try:
            sets.append(kg.load_edgelist(p.read_text(encoding="utf-8"), src))
        except kg.EdgelistError as exc:
            raise UsageError(f"{p}: {exc}") from None
    merged = kg.merge(*sets)
    if concepts_path:
        wanted = {line.strip() for line in concepts_path.read_text(encoding="utf-8").splitlines() if line.strip()}
        merged = kg.extract_subgraph(merged, wanted)
    with open(run.path("kg.tsv"), "w", encoding="utf-8") as fh:
        kg.write_edgelist(merged, fh)
    st = kg.stats(merged)
    run.write_text("kg_stats.json", st.to_json() + "\n")
    print(st.to_json())
    return 0


def _load_graph(path: Path) -> kg.TripleSet:
    try:
        return kg.load_edgelist(path.read_text(encoding="utf-8"))
    except kg.EdgelistError as exc:
        raise UsageError(f"{path}: {exc}") from None


def cmd_train_kge(args, run: Run, cfg: dict) -> int:
    config = kge_config(cfg)
    g = _load_graph(run.input(args.kg))
    if len(g) == 0:
        raise UsageError(f"{args.kg}: empty graph")
    result = kge.train(g, config)
    with open(run.path("kge.txt"), "w", encoding="utf-8") as fh:
        kge.save_table(result.table, fh)
    with open(run.path("kge_loss.csv"), "w", encoding="utf-8") as fh:
        kge.write_loss_log(result.loss_log, fh)
    print(f"final mean loss {result.loss_log[-1]:.6f} over {len(result.loss_log)} epochs")
    return 0


def cmd_eval_kge(args, run: Run, cfg: dict) -> int:
    table = kge.load_table(run.input(args.checkpoint).read_text(encoding="utf-8"))
    test = _load_graph(run.input(args.test))
    known = [_load_graph(run.input(p)) for p in (args.known or [])]
    everything = kg.merge(test, *known)
    missing = {e for t in everything for e in (t.head, t.tail) if table.entity_vocab.get(e) is None}
    missing |= {t.relation for t in everything if table.relation_vocab.get(t.relation) is None}
    if missing:
        raise UsageError(f"identifiers not in checkpoint: {', '.join(sorted(missing)[:5])}")
    m = kge.evaluate_link_prediction(table, test.dedup(), everything)
    text = json.dumps(asdict(m), indent=2, sort_keys=True)
    run.write_text("kge_metrics.json", text + "\n")
    print(text)
    return 0


def cmd_annotate(args, run: Run, cfg: dict) -> int:
    source = run.input(args.input)
    annotator = _annotator(run, args, cfg)
    lines = [line for line in source.read_text(encoding="utf-8").splitlines() if line.strip()]
    run.write_text("annotations.jsonl", "".join(annotator.to_json(line) + "\n" for line in lines))
    print(f"annotated {len(lines)} sentences")
    return 0


def cmd_train_nli(args, run: Run, cfg: dict) -> int:
    fusion = fusion_config(cfg)
    config = esim_config(cfg)
    splits = _splits(run, args.data, ("train", "dev"))
    art = _artifacts(run, args, cfg, need_kg=fusion.use_kg)
    if not splits.train or not splits.dev:
        raise UsageError("train and dev splits must be non-empty")
    train = harness.encode_examples(splits.train, art, fusion)
    dev = harness.encode_examples(splits.dev, art, fusion)
    params, report = esim.train_nli(train, dev, config)
    with open(run.path("esim.txt"), "w", encoding="utf-8") as fh:
        esim.save_model(params, fh, config, {"fusion": asdict(fusion)})
    run.write_text("train_report.csv", report.to_csv())
    print(f"best epoch {report.best_epoch}: dev loss {report.dev_loss[report.best_epoch - 1]:.4f}, "
          f"dev accuracy {report.dev_accuracy[report.best_epoch - 1]:.4f}")
    return 0


def _model(run: Run, args):
    params, meta = esim.load_model(run.input(args.model).read_text(encoding="utf-8"))
    stored = (meta.get("extra") or {}).get("fusion")
    return params, FusionConfig(**stored) if stored else None


def cmd_eval_nli(args, run: Run, cfg: dict) -> int:
    params, fusion = _model(run, args)
    fusion = fusion or fusion_config(cfg)
    splits = _splits(run, args.data, (args.split,))
    examples = getattr(splits, args.split)
    if not examples:
        raise UsageError(f"{args.split} split is empty")
    art = _artifacts(run, args, cfg, need_kg=fusion.use_kg)
    pairs = harness.encode_examples(examples, art, fusion)
    if pairs[0].premise.shape[1] != params.input_dim:
        raise UsageError(f"encoded width {pairs[0].premise.shape[1]} does not match model width {params.input_dim}")
    preds = harness.predict_labels(params, pairs)
    acc = harness.accuracy(preds, [e.label for e in examples])
    result = {"split": args.split, "examples": len(examples), "accuracy": acc, "fusion": fusion.name}
    run.write_text("nli_metrics.json", json.dumps(result, indent=2, sort_keys=True) + "\n")
    run.write_text("predictions.txt", "".join(p + "\n" for p in preds))
    print(json.dumps(result, sort_keys=True))
    return 0


def cmd_predict(args, run: Run, cfg: dict) -> int:
    params, fusion = _model(run, args)
    fusion = fusion or fusion_config(cfg)
    art = _artifacts(run, args, cfg, need_kg=fusion.use_kg)
    ex = harness.NLIExample(args.premise, args.hypothesis, "neutral")
    pair = harness.encode_examples([ex], art, fusion)[0]
    if pair.premise.shape[1] != params.input_dim:
        raise UsageError(f"encoded width {pair.premise.shape[1]} does not match model width {params.input_dim}")
    label, probs = esim.predict(pair.premise, pair.hypothesis, params)
    result = {"label": label, "probabilities": dict(zip(esim.LABELS, probs.tolist()))}
    run.write_text("prediction.json", json.dumps(result, sort_keys=True) + "\n")
    print(label + "\t" + "\t".join(f"{n}={p:.6f}" for n, p in zip(esim.LABELS, probs)))
    return 0


def cmd_synth(args, run: Run, cfg: dict) -> int:
    spec = _build(SyntheticSpec, "synth", seed=cfg["run"]["seed"], **cfg["synth"])
    try:
        bundle = generate_synthetic(spec)
    except ValueError as exc:
        raise UsageError(f"synthetic spec: {exc}") from None
    for name, text in bundle.files.items():
        run.write_text(name, text)
    print(f"wrote {len(bundle.files)} files to {run.out_dir}")
    return 0


def cmd_ablate(args, run: Run, cfg: dict) -> int:
    names = args.configs.split(",") if args.configs else list(ABLATIONS)
    unknown = [n for n in names if n not in ABLATIONS]
    if unknown:
        raise UsageError(f"unknown ablation configs: {', '.join(unknown)}")
    configs = {n: ABLATIONS[n] for n in names}
    need_kg = any(c.use_kg for c in configs.values())
    config = esim_config(cfg)
    splits = _splits(run, args.data, ("train", "dev", "test"))
    art = _artifacts(run, args, cfg, need_kg=need_kg)
    report = harness.run_ablation(splits, art, config, configs)
    run.write_text("ablation.csv", report.to_csv())
    for name, rep in report.train_reports.items():
        run.write_text(f"train_report_{name.replace('/', '_').replace('+', '_')}.csv", rep.to_csv())
    print(report.format_table())
    def flipped(e):
        return bool(e.meta.get("flipped"))

    if any(flipped(e) for e in splits.test):
        rows = [(n, report.subset_accuracy(n, splits.test, flipped)) for n, _ in report.rows]
        run.write_text("ablation_flipped.csv", "config,accuracy\n" + "".join(f"{n},{a:.6f}\n" for n, a in rows))
        width = max(len(n) for n, _ in rows)
        print("negation-flipped test subset:")
        for n, a in rows:
            print(f"{n:<{width}}  {100 * a:6.2f}%")
    return 0


COMMANDS = {
    "build-kg": (cmd_build_kg, "merge and deduplicate edgelists into one graph"),
    "train-kge": (cmd_train_kge, "train DistMult embeddings on an edgelist"),
    "eval-kge": (cmd_eval_kge, "filtered link-prediction metrics for a checkpoint"),
    "annotate": (cmd_annotate, "concept and negation annotation of sentences"),
    "train-nli": (cmd_train_nli, "train ESIM on fused token vectors"),
    "eval-nli": (cmd_eval_nli, "accuracy of a trained ESIM on a split"),
    "predict": (cmd_predict, "label one premise/hypothesis pair"),
    "synth": (cmd_synth, "generate a synthetic KG-dependent NLI bundle"),
    "ablate": (cmd_ablate, "train and test base, w/KG and w/KG+sentiment"),
}


def _add_config_flags(p: argparse.ArgumentParser, sections) -> None:
    for s in ("run", *sections):
        group = p.add_argument_group(f"[{s}] settings")
        for key, default in DEFAULTS[s].items():
            shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
            group.add_argument(f"--{s}.{key}", dest=f"cfg:{s}.{key}", metavar="V", default=None,
                               help=f"default {shown}")


def _add_artifact_flags(p, vectors=True, kge_flag=True):
    p.add_argument("--lexicon", help="concept lexicon TSV")
    p.add_argument("--triggers", help="negation triggers, one per line")
    if vectors:
        p.add_argument("--vectors", help="word vectors, GloVe text format")
    if kge_flag:
        p.add_argument("--kge", help="DistMult checkpoint (needed when fusion.use_kg is on)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgfuse", description="Knowledge-graph and negation features for NLI.",
        epilog="Settings: defaults < --config INI < KGFUSE_<SECTION>_<KEY> env < --<section>.<key> flags.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=os.environ.get(ENV_PREFIX + "CONFIG"), help="INI config file")
        p.add_argument("-o", "--out", default=os.environ.get(ENV_PREFIX + "OUT", "out"),
                       help="output directory (default: out)")
        p.add_argument("-v", "--verbose", action="count", default=0)
        if name == "build-kg":
            p.add_argument("--metathesaurus", nargs="+", help="edgelists from the concept thesaurus")
            p.add_argument("--semantic-network", nargs="+", help="edgelists from the semantic network")
            p.add_argument("--edgelist", nargs="+", help="edgelists of other provenance")
            p.add_argument("--concepts", help="keep only triples among these concept ids")
        elif name == "train-kge":
            p.add_argument("--kg", required=True, help="edgelist to train on")
        elif name == "eval-kge":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--test", required=True, help="held-out triples")
            p.add_argument("--known", nargs="+", help="other true triples to filter out")
        elif name == "annotate":
            p.add_argument("--input", required=True, help="text file, one sentence per line")
            _add_artifact_flags(p, vectors=False, kge_flag=False)
        elif name in ("train-nli", "ablate"):
            p.add_argument("--data", required=True, help="directory with train/dev/test.jsonl")
            _add_artifact_flags(p)
            if name == "ablate":
                p.add_argument("--configs", help="comma-separated subset of: " + ", ".join(ABLATIONS))
        elif name == "eval-nli":
            p.add_argument("--model", required=True)
            p.add_argument("--data", required=True)
            p.add_argument("--split", default="test", choices=("train", "dev", "test"))
            _add_artifact_flags(p)
        elif name == "predict":
            p.add_argument("--model", required=True)
            p.add_argument("--premise", required=True)
            p.add_argument("--hypothesis", required=True)
            _add_artifact_flags(p)
        _add_config_flags(p, SECTIONS[name])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    func, _ = COMMANDS[args.command]
    flags = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg:")}
    try:
        cfg = resolve_config(SECTIONS[args.command], args.config, flags)
        run = Run(args.command, Path(args.out), cfg)
        status = func(args, run, cfg)
        run.finish()
        return status
    except UsageError as exc:
        print(f"kgfuse {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 -- report and map to the runtime exit code
        log.debug("failure", exc_info=True)
        print(f"kgfuse {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
