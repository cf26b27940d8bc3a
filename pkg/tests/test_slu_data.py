"""Serialization formats, the total parser and its recovery rules, the
grammar generator, and part-of-speech tagging."""

import numpy as np
import pytest

from rnnt_slu.slu_data import (
    AnnotatedUtterance,
    DataError,
    EntitySpan,
    SerializationSetting,
    Template,
    GrammarSpec,
    default_asr_grammar,
    default_slu_grammar,
    generate_corpus,
    parse_hypothesis,
    pos_tag,
    required_label_symbols,
    serialize,
)
from rnnt_slu.vocab import char_vocab

TAGS = (
    "B-toloc.city_name", "B-fromloc.city_name", "B-stoploc.city_name",
    "I-stoploc.city_name", "INT-FLIGHT",
)

VOCAB = char_vocab().extend(TAGS)

FLIGHT_WORDS = "i want a flight to dallas from reno that makes a stop in las vegas".split()
FLIGHT = AnnotatedUtterance(
    uid="atis-like-0",
    words=FLIGHT_WORDS,
    entities=(
        EntitySpan("toloc.city_name", ("dallas",), position=5),
        EntitySpan("fromloc.city_name", ("reno",), position=7),
        EntitySpan("stoploc.city_name", ("las", "vegas"), position=13),
    ),
    intent="FLIGHT",
)


def render(ids, vocab=VOCAB):
    """Readable form: characters verbatim, SLU symbols bracketed."""
    out = []
    for sid in ids:
        sym = vocab.symbol_of(int(sid))
        out.append(sym if len(sym) == 1 else f"[{sym}]")
    return "".join(out)


def test_transcript_serialization():
    ids = serialize(FLIGHT, SerializationSetting.TRANSCRIPT, VOCAB)
    assert render(ids) == "i want a flight to dallas from reno that makes a stop in las vegas"


def test_transcript_entities_matches_inline_tag_format():
    ids = serialize(FLIGHT, SerializationSetting.TRANSCRIPT_ENTITIES, VOCAB)
    assert render(ids) == (
        "i want a flight to dallas[B-toloc.city_name]"
        " from reno[B-fromloc.city_name]"
        " that makes a stop in las[B-stoploc.city_name] vegas[I-stoploc.city_name]"
    )


def test_entities_spoken_order():
    ids = serialize(FLIGHT, SerializationSetting.ENTITIES_SPOKEN, VOCAB)
    assert render(ids) == (
        "dallas[B-toloc.city_name] reno[B-fromloc.city_name]"
        " las[B-stoploc.city_name] vegas[I-stoploc.city_name]"
    )


def test_entities_alphabetic_order():
    ids = serialize(FLIGHT, SerializationSetting.ENTITIES_ALPHA, VOCAB)
    assert render(ids) == (
        "reno[B-fromloc.city_name]"
        " las[B-stoploc.city_name] vegas[I-stoploc.city_name]"
        " dallas[B-toloc.city_name]"
    )


def test_alpha_is_group_permutation_of_spoken():
    spoken = parse_hypothesis(serialize(FLIGHT, SerializationSetting.ENTITIES_SPOKEN, VOCAB), VOCAB)
    alpha = parse_hypothesis(serialize(FLIGHT, SerializationSetting.ENTITIES_ALPHA, VOCAB), VOCAB)
    spoken_groups = sorted((e.label, e.value) for e in spoken.entities)
    alpha_groups = sorted((e.label, e.value) for e in alpha.entities)
    assert spoken_groups == alpha_groups


def test_intent_only_and_transcript_intent():
    ids = serialize(FLIGHT, SerializationSetting.INTENT_ONLY, VOCAB)
    assert render(ids) == "[INT-FLIGHT]"
    ids = serialize(FLIGHT, SerializationSetting.TRANSCRIPT_INTENT, VOCAB)
    assert render(ids).endswith("las vegas[INT-FLIGHT]")


def test_transcript_pos_tags_every_word():
    vocab = char_vocab().extend(("POS-PRON", "POS-VERB", "POS-DET", "POS-NOUN", "POS-PREP"))
    u = AnnotatedUtterance(uid="p0", words=("i", "want", "a", "flight", "to", "dallas"))
    ids = serialize(u, SerializationSetting.TRANSCRIPT_POS, vocab)
    assert render(ids, vocab) == (
        "i[POS-PRON] want[POS-VERB] a[POS-DET] flight[POS-NOUN] to[POS-PREP] dallas[POS-NOUN]"
    )


def test_missing_field_named_in_error():
    no_words = AnnotatedUtterance(uid="x", intent="FLIGHT")
    with pytest.raises(DataError, match="words"):
        serialize(no_words, SerializationSetting.TRANSCRIPT, VOCAB)
    no_intent = AnnotatedUtterance(uid="y", words=("hi",))
    with pytest.raises(DataError, match="intent"):
        serialize(no_intent, SerializationSetting.INTENT_ONLY, VOCAB)


def test_required_label_symbols_sorted_and_minimal():
    syms = required_label_symbols([FLIGHT], SerializationSetting.TRANSCRIPT_ENTITIES)
    assert syms == (
        "B-fromloc.city_name", "B-stoploc.city_name", "B-toloc.city_name",
        "I-stoploc.city_name",
    )
    assert required_label_symbols([FLIGHT], SerializationSetting.INTENT_ONLY) == ("INT-FLIGHT",)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def test_round_trip_transcript_entities():
    ids = serialize(FLIGHT, SerializationSetting.TRANSCRIPT_ENTITIES, VOCAB)
    parsed = parse_hypothesis(ids, VOCAB)
    assert parsed.words == FLIGHT.words
    assert parsed.entities == FLIGHT.entities
    assert parsed.intent is None
    assert parsed.recoveries == ()


def test_round_trip_every_setting():
    vocab = VOCAB.extend(required_label_symbols([FLIGHT], SerializationSetting.TRANSCRIPT_POS))
    for setting in SerializationSetting:
        ids = serialize(FLIGHT, setting, vocab)
        parsed = parse_hypothesis(ids, vocab)
        if setting in (SerializationSetting.TRANSCRIPT, SerializationSetting.TRANSCRIPT_ENTITIES,
                       SerializationSetting.TRANSCRIPT_INTENT):
            assert parsed.words == FLIGHT.words
        if setting in (SerializationSetting.ENTITIES_SPOKEN, SerializationSetting.ENTITIES_ALPHA,
                       SerializationSetting.TRANSCRIPT_ENTITIES):
            assert sorted((e.label, e.value) for e in parsed.entities) == \
                sorted((e.label, e.value) for e in FLIGHT.entities)
        if setting in (SerializationSetting.INTENT_ONLY, SerializationSetting.TRANSCRIPT_INTENT):
            assert parsed.intent == "FLIGHT"


def test_orphan_i_tag_promoted_and_bound_forward():
    # decoder garbage "[I-x] dallas" recovers to entity (x, dallas)
    vocab = char_vocab().extend(("I-x",))
    ids = [vocab.id_of("I-x")] + vocab.char_ids("dallas")
    parsed = parse_hypothesis(ids, vocab)
    assert [(e.label, e.value) for e in parsed.entities] == [("x", ("dallas",))]
    assert any("promoted" in r for r in parsed.recoveries)


def test_empty_value_tag_dropped():
    vocab = char_vocab().extend(("B-a", "B-b"))
    # two tags in a row: the first waiting tag is dropped as empty-valued
    ids = [vocab.id_of("B-a"), vocab.id_of("B-b")] + vocab.char_ids("reno")
    parsed = parse_hypothesis(ids, vocab)
    assert [(e.label, e.value) for e in parsed.entities] == [("b", ("reno",))]
    assert any("empty-value" in r for r in parsed.recoveries)
    # a tag at end of input with no word at all is also dropped
    parsed = parse_hypothesis(vocab.char_ids("reno ") + [vocab.id_of("B-a"), vocab.id_of("B-b")],
                              vocab)
    assert [(e.label, e.value) for e in parsed.entities] == [("a", ("reno",))]


def test_last_intent_wins():
    vocab = char_vocab().extend(("INT-A", "INT-B"))
    parsed = parse_hypothesis([vocab.id_of("INT-A"), vocab.id_of("INT-B")], vocab)
    assert parsed.intent == "B"
    assert any("multiple intents" in r for r in parsed.recoveries)


def test_parse_is_total_on_fuzzed_sequences():
    vocab = VOCAB.extend(("POS-NOUN",))
    rng = np.random.default_rng(42)
    n_fuzz = 100_000
    lengths = rng.integers(0, 24, size=n_fuzz)
    for length in lengths:
        ids = rng.integers(-2, len(vocab) + 2, size=int(length))
        parse_hypothesis(ids, vocab)  # must never raise


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def test_generate_zero_is_empty():
    assert generate_corpus(default_slu_grammar(), 0, seed=0) == []


def test_generate_deterministic():
    g = default_slu_grammar()
    a = generate_corpus(g, 50, seed=7)
    b = generate_corpus(g, 50, seed=7)
    assert [(u.uid, u.words, u.entities, u.intent) for u in a] == \
        [(u.uid, u.words, u.entities, u.intent) for u in b]
    c = generate_corpus(g, 50, seed=8)
    assert [u.words for u in a] != [u.words for u in c]


def test_generated_entities_occur_in_transcript_in_order():
    corpus = generate_corpus(default_slu_grammar(), 500, seed=3)
    for u in corpus:
        positions = []
        for ent in u.entities:
            for k, word in enumerate(ent.value):
                assert u.words[ent.position + k] == word
            positions.append(ent.position)
        assert positions == sorted(positions)


def test_generated_corpus_serializes_under_every_entity_setting():
    corpus = generate_corpus(default_slu_grammar(), 40, seed=4)
    vocab = char_vocab().extend(
        required_label_symbols(corpus, SerializationSetting.TRANSCRIPT_ENTITIES)
    ).extend(required_label_symbols(corpus, SerializationSetting.INTENT_ONLY))
    for u in corpus:
        for setting in (SerializationSetting.TRANSCRIPT_ENTITIES,
                        SerializationSetting.ENTITIES_SPOKEN,
                        SerializationSetting.ENTITIES_ALPHA,
                        SerializationSetting.TRANSCRIPT_INTENT):
            ids = serialize(u, setting, vocab)
            assert len(ids) > 0


def test_task_independent_grammar_has_no_labels():
    corpus = generate_corpus(default_asr_grammar(), 30, seed=5)
    for u in corpus:
        assert u.entities is None
        assert u.intent is None
        assert u.words


def test_empty_lexicon_rejected():
    with pytest.raises(DataError, match="empty lexicon"):
        GrammarSpec(name="bad", templates=(Template("go to {place}"),), slots={"place": ()})


def test_pos_tagger_rules():
    assert pos_tag("the") == "DET"
    assert pos_tag("i") == "PRON"
    assert pos_tag("want") == "VERB"
    assert pos_tag("to") == "PREP"
    assert pos_tag("dallas") == "NOUN"
