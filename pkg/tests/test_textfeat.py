from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmsched.textfeat import (
    FEATURE_NAMES,
    SCORERS,
    Diagnostics,
    FeatureVector,
    LexiconError,
    ScorerWeights,
    default_lexicon,
    lemma,
    multi_partness_score,
    open_endedness_score,
    parse_lexicon,
    rule_gen,
    semantic_ambiguity_score,
    single_rule_score,
    structural_ambiguity_score,
    syntactic_ambiguity_score,
    tokenize,
    vague_expression_score,
)

LEX = default_lexicon()

# one exemplar utterance per category, in feature order
EXEMPLARS = {
    "structural": "John saw a boy in the park with a telescope.",
    "syntactic": "Rice flies like sand.",
    "semantic": "What's the best way to deal with bats?",
    "vague": "Tell me about the history of art.",
    "open_ended": "What are the causes and consequences of poverty in developing countries?",
    "multi_part": "How do cats and dogs differ in behavior, diet, and social interaction?",
}

# a word (or two-word phrase) that triggers each scorer when appended
PLANTS = {
    "structural": " with a telescope",
    "syntactic": " flies",
    "semantic": " bat",
    "vague": " stuff",
    "open_ended": " Why do people lie?",
    "multi_part": " and more",
}

words = st.sampled_from(
    ["the", "boy", "park", "in", "with", "stuff", "bat", "flies", "like", "and", "or", "why", "how", "what",
     "are", "causes", "?", ",", ".", "history", "telescope", "bank", "do", "it", "n't", "Rice", "sand"]
)
texts = st.one_of(st.lists(words, max_size=40).map(" ".join), st.text(max_size=80))


def surfaces(text):
    return [t.surface for t in tokenize(text)]


# ---------------------------------------------------------------- tokenize


def test_tokenize_splits_punctuation():
    assert surfaces("Rice flies like sand.") == ["Rice", "flies", "like", "sand", "."]


def test_tokenize_empty():
    assert tokenize("") == []


def test_tokenize_contractions():
    assert surfaces("don't stop") == ["do", "n't", "stop"]
    assert surfaces("they're here") == ["they", "'re", "here"]


def test_punctuation_has_no_tags():
    toks = tokenize("flies, flies.")
    assert toks[0].pos_tags and not toks[1].pos_tags and not toks[3].pos_tags


def test_control_bytes_dropped_and_counted():
    diag = Diagnostics()
    toks = tokenize(b"rice\x00 flies\xff", diag=diag)
    assert [t.surface for t in toks] == ["rice", "flies"]
    assert diag.dropped == 2


def test_lemma_suffix_strip():
    assert lemma("Flies") == lemma("flies") == lemma("fly")
    assert lemma("bats") == "bat"
    assert lemma("is") == "is"  # stem too short to strip


@given(texts)
def test_tokenize_round_trip(text):
    joined = "".join(surfaces(text))
    kept = "".join(ch for ch in text if not ch.isspace())
    # dropped control characters are the only loss
    diag = Diagnostics()
    tokenize(text, diag=diag)
    assert len(kept) - len(joined) == diag.dropped
    assert all(t.surface and not any(c.isspace() for c in t.surface) for t in tokenize(text))


@given(texts)
def test_lemma_is_function_of_surface(text):
    for tok in tokenize(text):
        assert tok.lemma == lemma(tok.surface)


# ----------------------------------------------------------------- scorers


def test_vague_single_hit():
    assert vague_expression_score(tokenize("tell me about stuff")) == 1.0
    assert vague_expression_score([]) == 0.0


def test_vague_matches_linear_scan_oracle():
    import random

    rnd = random.Random(7)
    pool = ["the", "dog", "stuff", "thing", "ran", "general", "blue", "topic"]
    toks = tokenize(" ".join(rnd.choice(pool) for _ in range(200)))
    assert len(toks) == 200
    oracle = 0
    for t in toks:
        if t.lemma in LEX.vague_words:
            oracle += 1
    assert vague_expression_score(toks) == float(oracle)


def test_structural_examples():
    assert structural_ambiguity_score(tokenize(EXEMPLARS["structural"])) == 2.0
    assert structural_ambiguity_score(tokenize("Hello.")) == 0.0
    assert structural_ambiguity_score(tokenize("in the morning")) == 0.0


def test_syntactic_examples():
    assert LEX.pos(lemma("flies")) >= {"NOUN", "VERB"}
    assert LEX.pos(lemma("like")) >= {"VERB", "ADP"}
    assert syntactic_ambiguity_score(tokenize("Rice flies like sand.")) == 2.0
    assert syntactic_ambiguity_score(tokenize("zyzzyva")) == 0.0
    assert syntactic_ambiguity_score([]) == 0.0


def test_semantic_examples():
    assert LEX.polysemous_words["bat"] == 2
    assert semantic_ambiguity_score(tokenize("deal with bats")) == 1.0
    assert semantic_ambiguity_score(tokenize("the blue sky")) == 0.0
    assert semantic_ambiguity_score(tokenize("bats bats")) == 2.0


def test_open_ended_examples():
    assert open_endedness_score(tokenize(EXEMPLARS["open_ended"])) >= 1.0
    assert open_endedness_score(tokenize("The cat sat on the mat.")) == 0.0
    one = open_endedness_score(tokenize("Why do people tell lies?"))
    assert one > 0
    assert open_endedness_score(tokenize("Why do people tell lies? Why do people tell lies?")) == 2 * one


def test_multi_part_examples():
    assert multi_partness_score(tokenize(EXEMPLARS["multi_part"])) == 3.0
    assert multi_partness_score(tokenize("Where is the station?")) == 0.0
    assert multi_partness_score(tokenize("A? B? C?")) == 2.0


def test_rule_gen_empty():
    assert rule_gen("").as_tuple() == (0.0,) * 6


@pytest.mark.parametrize("category", FEATURE_NAMES)
def test_exemplar_positive_in_own_category(category):
    assert getattr(rule_gen(EXEMPLARS[category]), category) > 0


def test_single_rule_score():
    assert single_rule_score("The cat sat on the mat.") == 7.0  # 7 tokens, no rule fires
    assert single_rule_score("stuff stuff stuff") == 3.0
    assert single_rule_score("") == 0.0


# -------------------------------------------------------------- properties


@given(texts)
def test_scores_non_negative_and_deterministic(text):
    fv = rule_gen(text)
    assert all(v >= 0 for v in fv)
    assert rule_gen(text) == fv
    assert rule_gen(text.encode("utf-8")) == fv


@given(texts, st.floats(0, 100, allow_nan=False))
def test_weight_linearity(text, w):
    toks = tokenize(text)
    for scorer in SCORERS:
        assert scorer(toks, 2 * w) == pytest.approx(2 * scorer(toks, w), abs=1e-12)


def test_scorers_zero_on_empty():
    assert all(scorer([]) == 0.0 for scorer in SCORERS)


@settings(max_examples=60)
@given(st.lists(words, max_size=30).map(" ".join), st.sampled_from(FEATURE_NAMES))
def test_planted_insertion_never_decreases(text, category):
    idx = FEATURE_NAMES.index(category)
    before = rule_gen(text).as_tuple()[idx]
    after = rule_gen(text + PLANTS[category]).as_tuple()[idx]
    assert after >= before


def test_weights_scale_rule_gen():
    text = EXEMPLARS["multi_part"]
    base = rule_gen(text).as_tuple()
    w = (0.5, 1.0, 2.0, 3.0, 0.0, 4.0)
    assert rule_gen(text, ScorerWeights(w)).as_tuple() == tuple(a * b for a, b in zip(base, w))


def test_feature_vector_round_trip_and_order():
    fv = FeatureVector.from_sequence([1, 2, 3, 4, 5, 6])
    assert fv.as_tuple() == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert FeatureVector.from_sequence(fv.as_tuple()) == fv
    assert fv.vague == 4.0
    with pytest.raises(ValueError):
        FeatureVector(vague=-1.0)


# ----------------------------------------------------------------- lexicon


def test_lexicon_version_tracks_content():
    a = parse_lexicon("vague:\nstuff\n", "x")
    b = parse_lexicon("vague:\nstuff\nthing\n", "x")
    assert a.version != b.version
    assert LEX.version.startswith("lexicon_v1@")


def test_lexicon_rejects_bad_lines():
    with pytest.raises(LexiconError):
        parse_lexicon("polysemy:\nbat\t1\n")
    with pytest.raises(LexiconError):
        parse_lexicon("stuff\n")


def test_lexicon_lookup_case_insensitive():
    assert vague_expression_score(tokenize("STUFF Stuff stuff")) == 3.0
    assert all(v >= 2 for v in LEX.polysemous_words.values())
