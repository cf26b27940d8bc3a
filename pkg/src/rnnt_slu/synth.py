"""Template-based feature synthesis standing in for real speech and TTS voices.

A character bank maps every character to a base feature vector; a speaker is
the bank plus a per-speaker offset, additive noise, and a frames-per-character
range. Features for an utterance are the concatenation of repeated per
character vectors. Everything derives from seeds and the text itself, so one
(speaker, text) pair always synthesizes identical features.

Speaker pools model the experimental splits: "real" training voices, held-out
test voices, and single- or multi-voice TTS surrogates.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .slu_data import AnnotatedUtterance, DataError


@dataclass(frozen=True)
class CharacterBank:
    """Shared per-character base vectors so the same character sounds alike across speakers."""

    charset: str
    feature_dim: int
    seed: int

    def vectors(self) -> np.ndarray:
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, len(self.charset)]))
        return rng.normal(0.0, 1.0, size=(len(self.charset), self.feature_dim)).astype(np.float32)


@dataclass(frozen=True)
class SpeakerTemplate:
    speaker_id: str
    bank: CharacterBank
    offset: tuple[float, ...]            # per-speaker shift applied to every frame
    noise_scale: float = 0.05
    frames_per_char: tuple[int, int] = (1, 2)   # inclusive range
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.frames_per_char
        if lo < 1 or hi < lo:
            raise DataError(f"invalid frames-per-char range {self.frames_per_char}")
        if len(self.offset) != self.bank.feature_dim:
            raise DataError("speaker offset does not match the feature dimension")


def _utterance_rng(template: SpeakerTemplate, text: str) -> np.random.Generator:
    digest = hashlib.sha256(
        f"{template.seed}|{template.speaker_id}|{text}".encode()
    ).digest()
    return np.random.default_rng(int.from_bytes(digest[:16], "little"))


def synthesize_features(u: AnnotatedUtterance, template: SpeakerTemplate) -> np.ndarray:
    """Feature matrix [T, F] for the utterance text under one speaker template."""
    text = u.text
    if not text:
        raise DataError(f"utterance {u.uid}: cannot synthesize features without a transcript")
    bank_vectors = template.bank.vectors()
    char_index = {ch: i for i, ch in enumerate(template.bank.charset)}
    rng = _utterance_rng(template, text)
    lo, hi = template.frames_per_char
    offset = np.asarray(template.offset, dtype=np.float32)
    frames = []
    for ch in text:
        if ch not in char_index:
            raise DataError(f"character {ch!r} not covered by the character bank")
        reps = int(rng.integers(lo, hi + 1))
        base = bank_vectors[char_index[ch]] + offset
        block = np.repeat(base[None, :], reps, axis=0)
        if template.noise_scale > 0:
            block = block + rng.normal(
                0.0, template.noise_scale, size=block.shape
            ).astype(np.float32)
        frames.append(block)
    return np.concatenate(frames, axis=0).astype(np.float32)


def make_speaker_pool(prefix: str, count: int, bank: CharacterBank, seed: int,
                      offset_scale: float = 0.75, noise_scale: float = 0.05,
                      frames_per_char: tuple[int, int] = (1, 2)) -> list[SpeakerTemplate]:
    """Deterministic pool of speaker templates sharing one character bank."""
    seeds = np.random.SeedSequence([seed, count]).spawn(count)
    pool = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        offset = rng.normal(0.0, offset_scale, size=bank.feature_dim)
        pool.append(SpeakerTemplate(
            speaker_id=f"{prefix}-{i:02d}",
            bank=bank,
            offset=tuple(float(x) for x in offset),
            noise_scale=noise_scale,
            frames_per_char=frames_per_char,
            seed=seed * 1000 + i,
        ))
    return pool


def attach_features(corpus, pool) -> list[AnnotatedUtterance]:
    """Assign speakers round-robin over the pool and synthesize their features."""
    if not pool:
        raise DataError("speaker pool is empty")
    out = []
    for i, u in enumerate(corpus):
        template = pool[i % len(pool)]
        out.append(AnnotatedUtterance(
            uid=u.uid,
            speaker=template.speaker_id,
            words=u.words,
            entities=u.entities,
            intent=u.intent,
            features=synthesize_features(u, template),
        ))
    return out
