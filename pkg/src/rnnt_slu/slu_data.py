"""SLU label serialization formats, their total inverse parser, and the toy
grammar-based corpus generator.

Supported target serializations for one utterance:

  TRANSCRIPT            characters of the transcript
  TRANSCRIPT_ENTITIES   transcript with a BIO tag token after each entity word
  ENTITIES_SPOKEN       entity value words + tags only, in spoken order
  ENTITIES_ALPHA        same groups reordered alphabetically by label
  INTENT_ONLY           a single intent token
  TRANSCRIPT_INTENT     transcript followed by the intent token
  TRANSCRIPT_POS        transcript with a part-of-speech token after each word

Entity tags, intents, and POS tags are single atomic vocabulary symbols; words
are spelled in characters with a space symbol between words.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .vocab import Vocab, tag_kind


class DataError(ValueError):
    pass


class SerializationSetting(enum.Enum):
    TRANSCRIPT = "transcript"
    TRANSCRIPT_ENTITIES = "transcript-entities"
    ENTITIES_SPOKEN = "entities-spoken"
    ENTITIES_ALPHA = "entities-alpha"
    INTENT_ONLY = "intent-only"
    TRANSCRIPT_INTENT = "transcript-intent"
    TRANSCRIPT_POS = "transcript-pos"


@dataclass(frozen=True)
class EntitySpan:
    """One slot: label, its value words, and the spoken-order word position."""

    label: str
    value: tuple[str, ...]
    position: int = 0

    def __post_init__(self):
        object.__setattr__(self, "value", tuple(self.value))
        if not self.value:
            raise DataError(f"entity {self.label!r} has an empty value")

    @property
    def value_text(self) -> str:
        return " ".join(self.value)


@dataclass
class AnnotatedUtterance:
    uid: str
    speaker: str | None = None
    words: tuple[str, ...] | None = None
    entities: tuple[EntitySpan, ...] | None = None
    intent: str | None = None
    features: np.ndarray | None = None

    def __post_init__(self):
        if self.words is not None:
            self.words = tuple(self.words)
        if self.entities is not None:
            self.entities = tuple(self.entities)
        if self.words is None and self.entities is None and self.intent is None:
            raise DataError(f"utterance {self.uid}: no transcript, entities, or intent")

    @property
    def text(self) -> str | None:
        return None if self.words is None else " ".join(self.words)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _require(u: AnnotatedUtterance, fieldname: str):
    if getattr(u, fieldname) is None:
        raise DataError(f"utterance {u.uid}: serialization needs missing field {fieldname!r}")


def _entity_word_tags(u: AnnotatedUtterance) -> dict[int, str]:
    """word index -> tag symbol, from spoken-order entity positions."""
    tags = {}
    for ent in sorted(u.entities, key=lambda e: e.position):
        for k, word in enumerate(ent.value):
            idx = ent.position + k
            if idx >= len(u.words) or u.words[idx] != word:
                raise DataError(
                    f"utterance {u.uid}: entity value {ent.value_text!r} not found "
                    f"at word position {ent.position}"
                )
            tags[idx] = ("B-" if k == 0 else "I-") + ent.label
    return tags


def _emit_words(vocab: Vocab, out: list[int], words, tags: dict[int, str] | None = None,
                first: bool = True):
    space = vocab.id_of(" ")
    for idx, word in enumerate(words):
        if not first or idx > 0:
            out.append(space)
        out.extend(vocab.char_ids(word))
        if tags and idx in tags:
            out.append(vocab.id_of(tags[idx]))


def _entity_groups(u: AnnotatedUtterance):
    groups = []
    for ent in sorted(u.entities, key=lambda e: e.position):
        tags = {k: ("B-" if k == 0 else "I-") + ent.label for k in range(len(ent.value))}
        groups.append((ent, tags))
    return groups


def serialize(u: AnnotatedUtterance, setting: SerializationSetting, vocab: Vocab) -> np.ndarray:
    """Target symbol ids for one utterance under the given serialization."""
    out: list[int] = []
    s = SerializationSetting(setting)
    if s in (SerializationSetting.TRANSCRIPT, SerializationSetting.TRANSCRIPT_INTENT):
        _require(u, "words")
        _emit_words(vocab, out, u.words)
        if s is SerializationSetting.TRANSCRIPT_INTENT:
            _require(u, "intent")
            out.append(vocab.id_of(f"INT-{u.intent}"))
    elif s is SerializationSetting.TRANSCRIPT_ENTITIES:
        _require(u, "words")
        _require(u, "entities")
        _emit_words(vocab, out, u.words, _entity_word_tags(u))
    elif s in (SerializationSetting.ENTITIES_SPOKEN, SerializationSetting.ENTITIES_ALPHA):
        _require(u, "entities")
        groups = _entity_groups(u)
        if s is SerializationSetting.ENTITIES_ALPHA:
            groups = sorted(groups, key=lambda g: g[0].label)  # stable for equal labels
        first = True
        for ent, tags in groups:
            _emit_words(vocab, out, ent.value, tags, first=first)
            first = False
    elif s is SerializationSetting.INTENT_ONLY:
        _require(u, "intent")
        out.append(vocab.id_of(f"INT-{u.intent}"))
    elif s is SerializationSetting.TRANSCRIPT_POS:
        _require(u, "words")
        pos = {i: f"POS-{pos_tag(w)}" for i, w in enumerate(u.words)}
        _emit_words(vocab, out, u.words, pos)
    else:  # pragma: no cover
        raise DataError(f"unknown setting {setting!r}")
    return np.asarray(out, dtype=np.int64)


def required_label_symbols(corpus, setting: SerializationSetting) -> tuple[str, ...]:
    """Sorted SLU symbols a vocabulary needs before serializing `corpus` under `setting`."""
    s = SerializationSetting(setting)
    symbols: set[str] = set()
    for u in corpus:
        if s in (SerializationSetting.TRANSCRIPT_ENTITIES, SerializationSetting.ENTITIES_SPOKEN,
                 SerializationSetting.ENTITIES_ALPHA) and u.entities:
            for ent in u.entities:
                symbols.add(f"B-{ent.label}")
                if len(ent.value) > 1:
                    symbols.add(f"I-{ent.label}")
        if s in (SerializationSetting.INTENT_ONLY, SerializationSetting.TRANSCRIPT_INTENT) \
                and u.intent is not None:
            symbols.add(f"INT-{u.intent}")
        if s is SerializationSetting.TRANSCRIPT_POS and u.words:
            for w in u.words:
                symbols.add(f"POS-{pos_tag(w)}")
    return tuple(sorted(symbols))


# ---------------------------------------------------------------------------
# parsing (total on arbitrary decoder output)
# ---------------------------------------------------------------------------

@dataclass
class ParsedHypothesis:
    words: tuple[str, ...]
    entities: tuple[EntitySpan, ...]
    intent: str | None
    recoveries: tuple[str, ...] = ()


def parse_hypothesis(symbol_ids, vocab: Vocab) -> ParsedHypothesis:
    """Structured inverse of serialize; never raises on decoder garbage.

    Recovery rules, applied in order and reported:
      * an I- tag with no matching open entity is promoted to B-;
      * a tag arriving before any taggable word waits for the next word, and a
        tag still waiting when another arrives (or at end of input) is dropped
        as empty-valued;
      * when several intent tokens appear, the last one wins.
    """
    words: list[str] = []
    entities: list[EntitySpan] = []
    recoveries: list[str] = []
    intent: str | None = None
    saw_intent = False

    buf: list[str] = []
    last_word_index: int | None = None   # index into words of the newest unclaimed word
    open_label: str | None = None        # label of the entity accepting I- continuations
    pending_tag: str | None = None       # B-label waiting for its forward-bound word

    def flush_word():
        nonlocal last_word_index
        if buf:
            words.append("".join(buf))
            buf.clear()
            last_word_index = len(words) - 1
            claim_pending()

    def claim_pending():
        nonlocal pending_tag, last_word_index, open_label
        if pending_tag is not None and last_word_index is not None:
            label = pending_tag
            pending_tag = None
            entities.append(EntitySpan(label=label, value=(words[last_word_index],),
                                       position=last_word_index))
            open_label = label
            last_word_index = None

    def attach(label: str, begin: bool):
        nonlocal open_label, last_word_index, pending_tag
        if pending_tag is not None:
            recoveries.append(f"dropped empty-value tag {pending_tag}")
            pending_tag = None
        if not begin and open_label == label and entities and last_word_index is not None:
            prev = entities[-1]
            entities[-1] = EntitySpan(label=prev.label,
                                      value=prev.value + (words[last_word_index],),
                                      position=prev.position)
            last_word_index = None
            return
        if not begin:
            recoveries.append(f"promoted orphan I-{label} to B-{label}")
        if last_word_index is None:
            pending_tag = label
            return
        entities.append(EntitySpan(label=label, value=(words[last_word_index],),
                                   position=last_word_index))
        open_label = label
        last_word_index = None

    for sid in symbol_ids:
        sid = int(sid)
        if not 0 <= sid < len(vocab):
            recoveries.append(f"skipped out-of-range symbol id {sid}")
            continue
        sym = vocab.symbol_of(sid)
        kind = tag_kind(sym)
        if kind == "char":
            if sym == " ":
                flush_word()
            else:
                buf.append(sym)
        elif kind in ("b-tag", "i-tag"):
            flush_word()
            attach(sym[2:], begin=(kind == "b-tag"))
        elif kind == "intent":
            flush_word()
            if saw_intent:
                recoveries.append(f"multiple intents; keeping last ({sym[4:]})")
            intent = sym[4:]
            saw_intent = True
        elif kind == "pos":
            flush_word()
        else:  # blank or unknown multi-character symbol
            recoveries.append(f"ignored symbol {sym!r}")
    flush_word()
    if pending_tag is not None:
        recoveries.append(f"dropped empty-value tag {pending_tag}")

    return ParsedHypothesis(words=tuple(words), entities=tuple(entities),
                            intent=intent, recoveries=tuple(recoveries))


# ---------------------------------------------------------------------------
# rule-based part-of-speech tagging
# ---------------------------------------------------------------------------

_POS_LEXICON = {
    "DET": {"a", "an", "the", "some", "more", "that", "this"},
    "PRON": {"i", "we", "they", "you", "it", "me", "us"},
    "VERB": {"need", "want", "see", "make", "take", "like", "is", "are", "fly",
             "flies", "stops", "show", "list", "does", "book", "find", "get",
             "makes", "leaving", "check", "cancel", "pay", "report", "reset"},
    "PREP": {"to", "from", "in", "on", "at", "with", "by", "for", "about"},
    "ADV": {"today", "now", "soon", "later", "tomorrow", "please"},
}
_POS_BY_WORD = {w: tag for tag, ws in _POS_LEXICON.items() for w in ws}


def pos_tag(word: str) -> str:
    """Closed-class lookup; everything else is a NOUN."""
    return _POS_BY_WORD.get(word.lower(), "NOUN")


# ---------------------------------------------------------------------------
# grammar-based corpus generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Template:
    """Carrier phrase: words plus {slot} placeholders, with an optional intent."""

    text: str
    intent: str | None = None

    def tokens(self) -> tuple[str, ...]:
        return tuple(self.text.split())


@dataclass(frozen=True)
class GrammarSpec:
    name: str
    templates: tuple[Template, ...]
    slots: dict[str, tuple[str, ...]] = field(default_factory=dict)
    labeled: bool = True   # False: slot fills are plain words, not entities

    def __post_init__(self):
        if not self.templates:
            raise DataError(f"grammar {self.name!r} has no templates")
        for slot, values in self.slots.items():
            if not values:
                raise DataError(f"grammar {self.name!r}: slot {slot!r} has an empty lexicon")


def generate_corpus(grammar: GrammarSpec, n: int, seed: int) -> list[AnnotatedUtterance]:
    """Deterministically sample n annotated utterances from the grammar."""
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(n):
        template = grammar.templates[rng.integers(len(grammar.templates))]
        words: list[str] = []
        entities: list[EntitySpan] = []
        for token in template.tokens():
            if token.startswith("{") and token.endswith("}"):
                slot = token[1:-1]
                if slot not in grammar.slots:
                    raise DataError(f"grammar {grammar.name!r}: undefined slot {slot!r}")
                values = grammar.slots[slot]
                value_words = tuple(values[rng.integers(len(values))].split())
                if grammar.labeled:
                    entities.append(EntitySpan(label=slot, value=value_words,
                                               position=len(words)))
                words.extend(value_words)
            else:
                words.append(token)
        corpus.append(AnnotatedUtterance(
            uid=f"{grammar.name}-{i:04d}",
            words=tuple(words),
            entities=tuple(entities) if grammar.labeled else None,
            intent=template.intent,
        ))
    return corpus


def default_slu_grammar() -> GrammarSpec:
    """Toy travel-domain grammar with entities and intents."""
    return GrammarSpec(
        name="travel",
        templates=(
            Template("flight to {toloc.city_name} from {fromloc.city_name}", "FLIGHT"),
            Template("flights from {fromloc.city_name} to {toloc.city_name}", "FLIGHT"),
            Template("flight to {toloc.city_name} stop in {stoploc.city_name}", "FLIGHT"),
            Template("fares from {fromloc.city_name} to {toloc.city_name}", "AIRFARE"),
            Template("a ticket to {toloc.city_name}", "AIRFARE"),
            Template("does {airline_name} fly to {toloc.city_name}", "AIRLINE"),
            Template("which airline flies from {fromloc.city_name}", "AIRLINE"),
            Template("need a car at {toloc.city_name}", "GROUND"),
        ),
        slots={
            "toloc.city_name": ("dallas", "reno", "boston", "denver", "austin",
                                "omaha", "las vegas", "new york"),
            "fromloc.city_name": ("dallas", "reno", "boston", "denver", "austin",
                                  "omaha", "las vegas", "new york"),
            "stoploc.city_name": ("tucson", "fresno", "salt lake"),
            "airline_name": ("delta", "united", "lufthansa"),
        },
    )


def default_intent_grammar() -> GrammarSpec:
    """Call-center style corpus: transcripts and intents, no entities."""
    return GrammarSpec(
        name="callcenter",
        templates=(
            Template("i want to pay my bill now", "BILLING"),
            Template("there is a mistake on my bill", "BILLING"),
            Template("i need to check my balance", "BALANCE"),
            Template("what is the balance on my account", "BALANCE"),
            Template("please cancel my service today", "CANCEL"),
            Template("i want to cancel my order", "CANCEL"),
            Template("i need to reset my password", "SUPPORT"),
            Template("my internet stops working", "SUPPORT"),
        ),
        slots={},
        labeled=False,
    )


def default_asr_grammar() -> GrammarSpec:
    """Task-independent sentences for ASR pre-training; no SLU labels."""
    return GrammarSpec(
        name="general",
        templates=(
            Template("{subj} {verb} {obj}"),
            Template("{subj} {verb} {obj} {when}"),
            Template("{subj} {verb} that {subj2} {verb2} {obj}"),
            Template("please {verb} {obj} {when}"),
        ),
        slots={
            "subj": ("i", "we", "they", "you", "the team", "my friend"),
            "subj2": ("i", "we", "they", "people"),
            "verb": ("need", "want", "see", "make", "take", "like", "check", "find"),
            "verb2": ("need", "want", "like", "take"),
            "obj": ("a plan", "the report", "some water", "a break", "the answer",
                    "more time", "a new car", "the keys"),
            "when": ("today", "now", "soon", "later", "tomorrow"),
        },
        labeled=False,
    )
