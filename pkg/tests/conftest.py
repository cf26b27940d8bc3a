"""Shared fixtures: small corpora with synthesized features and compact configs."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rnnt_slu.network import ModelConfig
from rnnt_slu.slu_data import default_intent_grammar, default_slu_grammar, generate_corpus
from rnnt_slu.synth import CharacterBank, attach_features, make_speaker_pool
from rnnt_slu.vocab import DEFAULT_CHARSET, char_vocab


def small_config(**kw):
    """Compact topology for fast training unit tests."""
    defaults = dict(vocab=char_vocab(), feature_dim=8, enc_layers=1, enc_cells=8,
                    pred_embed_dim=6, pred_cells=10, joint_dim=10, dtype="float32")
    defaults.update(kw)
    return ModelConfig(**defaults)


def bank(feature_dim=8, seed=17):
    return CharacterBank(charset=DEFAULT_CHARSET, feature_dim=feature_dim, seed=seed)


@pytest.fixture(scope="session")
def intent_corpus_16():
    corpus = generate_corpus(default_intent_grammar(), 16, seed=101)
    pool = make_speaker_pool("real", 4, bank(), seed=11)
    return attach_features(corpus, pool)


@pytest.fixture(scope="session")
def entity_corpus_12():
    corpus = generate_corpus(default_slu_grammar(), 12, seed=102)
    pool = make_speaker_pool("real", 4, bank(), seed=12)
    return attach_features(corpus, pool)
