"""Evaluation measures: label-filtered WER, order-insensitive slot F1, and
intent accuracy.

WER strips every SLU symbol from the hypothesis before aligning words.
Slot F1 matches (label, value) pairs with multiset semantics, so a duplicated
reference entity must be produced twice to score two hits. Values are
compared case-insensitively after whitespace normalization.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .vocab import BLANK_ID, Vocab


class MetricsError(ValueError):
    pass


@dataclass
class WerCounts:
    hits: int = 0
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0
    ref_words: int = 0

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer(self) -> float:
        return 100.0 * self.errors / self.ref_words

    def add(self, other: "WerCounts"):
        self.hits += other.hits
        self.substitutions += other.substitutions
        self.deletions += other.deletions
        self.insertions += other.insertions
        self.ref_words += other.ref_words


def levenshtein_counts(ref_words, hyp_words) -> WerCounts:
    """Minimum-edit alignment with unit costs; ties prefer hits/substitutions."""
    ref = list(ref_words)
    hyp = list(hyp_words)
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            dist[i][j] = min(sub, dist[i - 1][j] + 1, dist[i][j - 1] + 1)
    counts = WerCounts(ref_words=n)
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] == hyp[j - 1]:
                counts.hits += 1
            else:
                counts.substitutions += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            counts.deletions += 1
            i -= 1
        else:
            counts.insertions += 1
            j -= 1
    return counts


def strip_labels(symbol_ids, vocab: Vocab) -> list[str]:
    """Hypothesis words after removing every SLU symbol and BLANK."""
    chars = []
    for sid in symbol_ids:
        sid = int(sid)
        if sid == BLANK_ID or not 0 <= sid < len(vocab) or vocab.is_label(sid):
            continue
        chars.append(vocab.symbol_of(sid))
    return "".join(chars).split()


def wer_filtered(hyp_symbol_ids, ref_words, vocab: Vocab) -> WerCounts:
    """Word error rate of the label-filtered hypothesis against the reference transcript."""
    ref = [w.lower() for w in ref_words]
    if not ref:
        raise MetricsError("empty reference transcript")
    return levenshtein_counts(ref, strip_labels(hyp_symbol_ids, vocab))


def _normalize_value(value) -> str:
    if not isinstance(value, str):
        value = " ".join(value)
    return " ".join(value.lower().split())


def entity_key(entity) -> tuple[str, str]:
    label = entity[0] if isinstance(entity, tuple) else entity.label
    value = entity[1] if isinstance(entity, tuple) else entity.value
    return (label, _normalize_value(value))


@dataclass
class SlotCounts:
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0

    @property
    def precision(self) -> float:
        found = self.true_positives + self.false_positives
        return self.true_positives / found if found else 0.0

    @property
    def recall(self) -> float:
        ref = self.true_positives + self.false_negatives
        return self.true_positives / ref if ref else 0.0

    @property
    def f1(self) -> float:
        if self.true_positives + self.false_positives + self.false_negatives == 0:
            return 1.0  # both sides empty: vacuously perfect
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def add(self, other: "SlotCounts"):
        self.true_positives += other.true_positives
        self.false_positives += other.false_positives
        self.false_negatives += other.false_negatives


def slot_counts(hyp_entities, ref_entities) -> SlotCounts:
    hyp = Counter(entity_key(e) for e in hyp_entities)
    ref = Counter(entity_key(e) for e in ref_entities)
    tp = sum((hyp & ref).values())
    return SlotCounts(
        true_positives=tp,
        false_positives=sum(hyp.values()) - tp,
        false_negatives=sum(ref.values()) - tp,
    )


def slot_f1(hyp_entities, ref_entities) -> tuple[float, float, float]:
    """(precision, recall, f1) for one entity multiset pair."""
    c = slot_counts(hyp_entities, ref_entities)
    return c.precision, c.recall, c.f1


def intent_accuracy(hyp_intents, ref_intents) -> float:
    """Exact-match percentage; a missing (None) hypothesis intent counts as wrong."""
    hyp, ref = list(hyp_intents), list(ref_intents)
    if len(hyp) != len(ref):
        raise MetricsError(f"intent list lengths differ: {len(hyp)} vs {len(ref)}")
    if not ref:
        raise MetricsError("no reference intents")
    correct = sum(1 for h, r in zip(hyp, ref) if h is not None and h == r)
    return 100.0 * correct / len(ref)


@dataclass
class ScoreReport:
    """Aggregated corpus-level scores; absent measures stay None."""

    utterances: int = 0
    wer: WerCounts | None = None
    slots: SlotCounts | None = None
    intents_scored: int = 0
    intents_correct: int = 0
    per_utterance: list[dict] = field(default_factory=list, repr=False)

    @property
    def intent_accuracy(self) -> float | None:
        if not self.intents_scored:
            return None
        return 100.0 * self.intents_correct / self.intents_scored

    def to_dict(self) -> dict:
        out: dict = {"utterances": self.utterances}
        if self.wer is not None and self.wer.ref_words:
            out["wer"] = {
                "percent": self.wer.wer,
                "hits": self.wer.hits,
                "substitutions": self.wer.substitutions,
                "deletions": self.wer.deletions,
                "insertions": self.wer.insertions,
                "reference_words": self.wer.ref_words,
            }
        if self.slots is not None:
            out["slots"] = {
                "f1": self.slots.f1,
                "precision": self.slots.precision,
                "recall": self.slots.recall,
                "true_positives": self.slots.true_positives,
                "false_positives": self.slots.false_positives,
                "false_negatives": self.slots.false_negatives,
            }
        if self.intents_scored:
            out["intents"] = {
                "accuracy": self.intent_accuracy,
                "scored": self.intents_scored,
                "correct": self.intents_correct,
            }
        return out


def score_corpus(parsed_hyps, references, vocab: Vocab, hyp_symbol_ids=None,
                 keep_per_utterance: bool = False) -> ScoreReport:
    """Score parsed hypotheses against reference utterances, in corpus order.

    WER is computed only when raw hypothesis symbol ids are supplied and the
    reference has a transcript; slots/intents are scored wherever the
    reference carries them.
    """
    if len(parsed_hyps) != len(references):
        raise MetricsError(f"{len(parsed_hyps)} hypotheses vs {len(references)} references")
    report = ScoreReport(utterances=len(references))
    wer_total = WerCounts()
    slots_total = SlotCounts()
    saw_wer = saw_slots = False
    for idx, (hyp, ref) in enumerate(zip(parsed_hyps, references)):
        row = {"id": ref.uid}
        if hyp_symbol_ids is not None and ref.words:
            counts = wer_filtered(hyp_symbol_ids[idx], ref.words, vocab)
            wer_total.add(counts)
            saw_wer = True
            row["wer_errors"] = counts.errors
        if ref.entities is not None:
            counts = slot_counts(hyp.entities, ref.entities)
            slots_total.add(counts)
            saw_slots = True
            row["slot_tp"] = counts.true_positives
            row["slot_fp"] = counts.false_positives
            row["slot_fn"] = counts.false_negatives
        if ref.intent is not None:
            report.intents_scored += 1
            hit = hyp.intent == ref.intent
            report.intents_correct += int(hit)
            row["intent_hyp"] = hyp.intent
            row["intent_ref"] = ref.intent
            row["intent_correct"] = int(hit)
        if keep_per_utterance:
            report.per_utterance.append(row)
    if saw_wer:
        report.wer = wer_total
    if saw_slots:
        report.slots = slots_total
    return report
