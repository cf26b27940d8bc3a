"""Desk-scale RNN-T spoken language understanding toolkit.

Builds sequence-transducer SLU models end to end: ASR pre-training on
synthetic corpora, output-vocabulary surgery for SLU symbols, staged
adaptation with parameter freezing, synthetic-speech surrogate voices,
greedy decoding, and slot/intent/WER scoring.
"""

from .vocab import BLANK_ID, BLANK_SYMBOL, Vocab, char_vocab
from .lattice import JointLogProbs, Lattice, forward_loss, logit_gradients, oracle_loss
from .network import (
    Model,
    ModelConfig,
    encode,
    init_model,
    joint,
    predict,
    utterance_loss,
    utterance_loss_and_grads,
)
from .surgery import VocabExtension, extend_vocab, logit_preservation_check
from .training import AdaptationPlan, Stage, TrainReport, run_plan, run_stage, sgd_step
from .decode import Hypothesis, decode_corpus, greedy_decode
from .slu_data import (
    AnnotatedUtterance,
    EntitySpan,
    GrammarSpec,
    SerializationSetting,
    generate_corpus,
    parse_hypothesis,
    serialize,
)
from .synth import CharacterBank, SpeakerTemplate, attach_features, make_speaker_pool, synthesize_features
from .metrics import ScoreReport, intent_accuracy, score_corpus, slot_f1, wer_filtered
from .checkpoint import Provenance, load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
