import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgfuse import esim
from kgfuse.annotate import Annotator, ConceptLexicon
from kgfuse.embed import ABLATIONS, StaticEmbeddingTable
from kgfuse.harness import (AblationReport, Artifacts, DatasetSplits, NLIExample, accuracy,
                            encode_examples, load_jsonl, load_splits, run_ablation, write_jsonl)
from kgfuse.kg import Vocab
from kgfuse.kge import EmbeddingTable

LINE = '{"sentence1": "patient has pain", "sentence2": "patient has angina", "gold_label": "neutral"}\n'


class TestJsonl:
    def test_one_line(self):
        exs = load_jsonl(LINE)
        assert len(exs) == 1 and exs[0].label == "neutral"

    def test_bad_label(self):
        with pytest.raises(ValueError, match="line 2"):
            load_jsonl(LINE + LINE.replace("neutral", "maybe"))

    def test_malformed(self):
        with pytest.raises(ValueError, match="line 1"):
            load_jsonl("{not json\n")

    def test_missing_field(self):
        with pytest.raises(ValueError, match="gold_label"):
            load_jsonl('{"sentence1": "a", "sentence2": "b"}\n')

    def test_extra_fields_kept(self):
        ex = load_jsonl(LINE.replace("}", ', "pairID": "7"}'))[0]
        assert ex.meta == {"pairID": "7"}

    @given(st.lists(st.tuples(st.text(min_size=1).filter(str.strip), st.text(min_size=1).filter(str.strip),
                              st.sampled_from(esim.LABELS)), max_size=8))
    def test_round_trip(self, rows):
        exs = [NLIExample(p, h, lab) for p, h, lab in rows]
        buf = io.StringIO()
        write_jsonl(exs, buf)
        assert load_jsonl(buf.getvalue()) == exs

    def test_load_splits(self, tmp_path):
        (tmp_path / "train.jsonl").write_text(LINE * 2)
        (tmp_path / "test.jsonl").write_text(LINE)
        s = load_splits(tmp_path)
        assert (len(s.train), len(s.dev), len(s.test)) == (2, 0, 1)


class TestAccuracy:
    def test_all_and_none(self):
        assert accuracy(["a", "b"], ["a", "b"]) == 1.0
        assert accuracy(["a", "b"], ["b", "a"]) == 0.0

    def test_three_of_four(self):
        assert accuracy(list("abcd"), list("abcx")) == 0.75

    def test_empty(self):
        with pytest.raises(ValueError):
            accuracy([], [])

    @given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1), st.randoms())
    def test_permutation_invariant(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        a = accuracy(*map(list, zip(*pairs)))
        b = accuracy(*map(list, zip(*shuffled)))
        assert a == b


def tiny_artifacts():
    lex = ConceptLexicon.from_tsv("pain\tP\nangina\tA\n")
    rng = np.random.default_rng(0)
    ctx = StaticEmbeddingTable({w: rng.normal(size=4) for w in ["patient", "has", "pain", "angina", "no"]}, 4)
    kg = EmbeddingTable(rng.normal(size=(2, 3)), rng.normal(size=(1, 3)), Vocab(["A", "P"]), Vocab(["r"]))
    return Artifacts(Annotator(lex, ["no"]), ctx, kg)


class TestEncoding:
    def test_widths(self):
        exs = load_jsonl(LINE)
        for name, cfg in ABLATIONS.items():
            pair = encode_examples(exs, tiny_artifacts(), cfg)[0]
            assert pair.premise.shape == (3, 4 + 3 * cfg.use_kg + cfg.use_sentiment)
            assert pair.label == esim.LABEL_INDEX["neutral"]


class TestAblation:
    def test_constant_label_ceiling(self):
        ex = [NLIExample("patient has pain", "patient has angina", "contradiction"),
              NLIExample("patient has no pain", "patient has angina", "contradiction")]
        splits = DatasetSplits(ex * 3, ex, ex)
        cfg = esim.EsimConfig(hidden=4, max_epochs=15, lr=0.05, optimizer="adam", dropout=0.0, batch_size=2)
        rep = run_ablation(splits, tiny_artifacts(), cfg)
        assert [n for n, _ in rep.rows] == list(ABLATIONS)
        assert all(acc == 1.0 for _, acc in rep.rows)

    def test_report_formats(self):
        rep = AblationReport([("base", 0.5), ("w/KG", 0.75)])
        assert rep.to_csv() == "config,accuracy\nbase,0.500000\nw/KG,0.750000\n"
        assert "75.00%" in rep.format_table()
        assert rep.accuracy_of("w/KG") == 0.75


def test_example_json_sorted():
    obj = NLIExample("a", "b", "neutral", {"flipped": False}).to_json()
    assert list(json.loads(obj)) == sorted(json.loads(obj))


def test_subset_accuracy():
    exs = [NLIExample("a", "b", lab, {"flipped": f}) for lab, f in
           (("entailment", True), ("neutral", False), ("contradiction", True))]
    rep = AblationReport(rows=[("x", 2 / 3)], predictions={"x": ["entailment", "neutral", "neutral"]})
    assert rep.subset_accuracy("x", exs, lambda e: e.meta["flipped"]) == 0.5
    with pytest.raises(ValueError):
        rep.subset_accuracy("x", exs, lambda e: False)
