import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from kgfuse.annotate import (Annotator, ConceptAnnotation, ConceptLexicon, LexiconEntry, align,
                             detect_negation, load_triggers, match_concepts, tokenize)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def lexicon():
    return ConceptLexicon.from_tsv((FIXTURES / "lexicon.tsv").read_text())


@pytest.fixture(scope="module")
def annotator(lexicon):
    return Annotator(lexicon, load_triggers((FIXTURES / "triggers.txt").read_text()))


class TestTokenize:
    @pytest.mark.parametrize("text,want", [
        ("", []),
        ("History of CVA.", ["History", "of", "CVA", "."]),
        ("no signs of pain", ["no", "signs", "of", "pain"]),
        ('"(pain)..."', ['"(', "pain", ')..."']),
        ("...", ["..."]),
        ("x-ray", ["x-ray"]),
    ])
    def test_cases(self, text, want):
        assert tokenize(text) == want

    @given(st.text())
    def test_no_empty_tokens_and_no_whitespace(self, text):
        toks = tokenize(text)
        assert all(toks) and not any(any(c.isspace() for c in t) for t in toks)
        assert "".join(toks) == "".join(text.split())


class TestLexicon:
    def test_preferred_defaults_to_concept(self, lexicon):
        assert lexicon.best(("angina",)).preferred_id == "C0002962"

    def test_duplicate_rejected(self):
        e = LexiconEntry(("a",), "C1", "C1")
        with pytest.raises(ValueError):
            ConceptLexicon([e, e])

    def test_empty_surface_rejected(self):
        with pytest.raises(ValueError):
            ConceptLexicon([LexiconEntry((), "C1", "C1")])

    def test_bad_line(self):
        with pytest.raises(ValueError, match="line 2"):
            ConceptLexicon.from_tsv("a\tC1\nonlyone\n")


class TestMatch:
    def test_blood_clots_to_thrombus(self, lexicon):
        anns = match_concepts(["blood", "clots"], lexicon)
        assert [(a.start, a.end, a.concept_id) for a in anns] == [(0, 2, "C0040053")]

    def test_chest_pain_to_angina(self, lexicon):
        anns = match_concepts(tokenize("Chest pain on exertion"), lexicon)
        assert anns[0].concept_id == "C0002962"
        assert (anns[0].start, anns[0].end) == (0, 2)

    def test_empty_lexicon(self):
        assert match_concepts(["pain"], ConceptLexicon()) == []

    def test_length_beats_score(self):
        lex = ConceptLexicon([LexiconEntry(("a", "b"), "C2", "C2", 1.0), LexiconEntry(("a",), "C1", "C1", 9.0)])
        assert [a.concept_id for a in match_concepts(["a", "b"], lex)] == ["C2"]

    def test_score_then_id(self):
        lex = ConceptLexicon([LexiconEntry(("a",), "C9", "C9", 2.0), LexiconEntry(("a",), "C1", "C1", 2.0),
                              LexiconEntry(("a",), "C0", "C0", 1.0)])
        assert match_concepts(["A"], lex)[0].concept_id == "C1"


class TestNegation:
    def test_no_signs_of_pain(self, annotator):
        tokens, anns = annotator.annotate("The patient showed no signs of pain")
        pain = [a for a in anns if a.concept_id == "C0030193"]
        assert len(pain) == 1 and (pain[0].start, pain[0].end) == (6, 7)
        assert pain[0].negated

    def test_no_trigger(self, annotator):
        _, anns = annotator.annotate("The patient reports pain")
        assert anns and not any(a.negated for a in anns)

    @pytest.mark.parametrize("gap,want", [(5, True), (6, False)])
    def test_window(self, gap, want):
        tokens = ["no"] + ["x"] * (gap - 1) + ["pain"]
        ann = ConceptAnnotation(gap, gap + 1, "P")
        assert detect_negation(tokens, [ann], ["no"], 5)[0].negated is want

    def test_sentence_end_blocks(self):
        tokens = ["no", "fever", ".", "pain"]
        ann = ConceptAnnotation(3, 4, "P")
        assert not detect_negation(tokens, [ann], ["no"])[0].negated

    def test_bigram_trigger(self):
        tokens = tokenize("clot ruled out")
        assert not detect_negation(tokens, [ConceptAnnotation(0, 1, "C")])[0].negated
        tokens = tokenize("ruled out clot")
        assert detect_negation(tokens, [ConceptAnnotation(2, 3, "C")])[0].negated


class TestAlign:
    def test_copy_concept_over_phrase(self, lexicon):
        toks = ["blood", "clots"]
        out = align(toks, match_concepts(toks, lexicon))
        assert [a.concept_id for a in out] == ["C0040053", "C0040053"]

    def test_no_annotations(self):
        out = align(["a", "b"], [])
        assert all(a.concept_id is None and a.sentiment == 0 for a in out)

    def test_negated_single_token(self):
        out = align(["x", "pain", "y"], [ConceptAnnotation(1, 2, "P", negated=True)])
        assert [a.sentiment for a in out] == [0, 1, 0]

    def test_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlapping"):
            align(["a", "b", "c"], [ConceptAnnotation(0, 2, "A"), ConceptAnnotation(1, 3, "B")])

    def test_bad_span(self):
        with pytest.raises(ValueError):
            align(["a"], [ConceptAnnotation(0, 2, "A")])


def test_json_output(annotator):
    obj = json.loads(annotator.to_json("no chest pain"))
    assert obj["tokens"] == ["no", "chest", "pain"]
    assert obj["annotations"] == [{"start": 1, "end": 3, "concept": "C0002962", "negated": True, "score": 0.95}]


WORDS = ["a", "b", "c", "no", "not", ".", "pain", "Pain", "x,", "(y)"]
lexicons = st.lists(
    st.tuples(st.lists(st.sampled_from(["a", "b", "c", "pain"]), min_size=1, max_size=3),
              st.sampled_from(["C1", "C2", "C3"]), st.floats(0, 10)),
    max_size=8, unique_by=lambda e: (tuple(e[0]), e[1]),
).map(lambda es: ConceptLexicon([LexiconEntry(tuple(s), c, c, sc) for s, c, sc in es]))


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from(WORDS), max_size=15).map(" ".join), lexicons)
def test_alignment_invariants(text, lex):
    ann = Annotator(lex)
    tokens, anns = ann.annotate(text)
    out = align(tokens, anns)
    assert len(out) == len(tokenize(text))
    assert [a.start for a in anns] == sorted(a.start for a in anns)
    for prev, nxt in zip(anns, anns[1:]):
        assert prev.end <= nxt.start
    for tok in out:
        assert tok.sentiment in (0, 1)
        if tok.concept_id is None:
            assert tok.sentiment == 0
    assert ann.annotate(text) == (tokens, anns)
