"""Named desk-scale trend experiments.

Each experiment rebuilds its world (corpora, speaker pools, models) from the
seed alone, trains the arms being compared, and scores them on a held-out
test set with unseen speakers. Every published number is a pure function of
(experiment name, seed, scale), so re-running with the same seed reproduces
the artifacts byte for byte.

Experiments:

  pretrain-vs-scratch   slot F1 of from-scratch vs pre-trained-then-adapted
                        models (small and large pre-training corpora, equal
                        update budgets) on the entity task with transcripts.
  spoken-vs-alpha       slot F1 after adapting on entity targets in spoken
                        order vs alphabetic order (no transcripts).
  ss-vs-ms              intent accuracy after adapting on single-voice vs
                        multi-voice synthesized speech, full-network vs
                        prediction+joint-only updates, tested on real voices.

The entity experiments run in a mild acoustic regime (small voice offsets) so
their scores saturate and the compared mechanisms stand out; the synthesized
speech experiment deliberately uses strong voice offsets because acoustic
mismatch is the very mechanism it measures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .checkpoint import Provenance, save_checkpoint
from .decode import decode_corpus
from .metrics import score_corpus
from .network import Model, ModelConfig, TRANSCRIPTION, init_model
from .slu_data import (
    SerializationSetting,
    default_asr_grammar,
    default_intent_grammar,
    default_slu_grammar,
    generate_corpus,
    parse_hypothesis,
)
from .synth import CharacterBank, attach_features, make_speaker_pool
from .training import Stage, run_stage
from .vocab import DEFAULT_CHARSET, char_vocab


@dataclass(frozen=True)
class TrendScale:
    """Corpus sizes, budgets, and acoustic regime for the trend experiments."""

    feature_dim: int = 16
    frames_per_char: tuple[int, int] = (1, 2)
    train_speakers: int = 48
    test_speakers: int = 6
    tts_speakers: int = 6

    # entity-task regime (pretrain-vs-scratch, spoken-vs-alpha)
    offset_scale: float = 0.25
    noise_scale: float = 0.02
    pretrain_small: int = 96
    pretrain_large: int = 192
    pretrain_updates: int = 240          # optimizer steps, equal across tiers
    pretrain_lr: float = 0.02
    slu_train: int = 128
    slu_test: int = 96
    slu_epochs: int = 30
    slu_lr: float = 0.02

    # intent-task regime (ss-vs-ms): strong voice offsets on purpose
    intent_offset_scale: float = 0.75
    intent_noise_scale: float = 0.05
    intent_train: int = 48
    intent_test: int = 64
    intent_epochs: int = 20
    intent_lr: float = 0.02

    momentum: float = 0.9
    batch_size: int = 8


DEFAULT_SCALE = TrendScale()
FAST_SCALE = TrendScale(pretrain_small=32, pretrain_large=64, pretrain_updates=60,
                        slu_train=32, slu_test=24, slu_epochs=8,
                        intent_train=24, intent_test=24, intent_epochs=6,
                        train_speakers=12, test_speakers=3)


@dataclass
class ExperimentResult:
    name: str
    seeds: tuple[int, ...]
    metric: str
    rows: list[dict] = field(default_factory=list)   # {"seed", "arm", "value"}

    def value(self, arm: str, seed: int) -> float:
        for row in self.rows:
            if row["arm"] == arm and row["seed"] == seed:
                return row["value"]
        raise KeyError(f"no value for arm {arm!r}, seed {seed}")

    def arms(self) -> list[str]:
        seen = []
        for row in self.rows:
            if row["arm"] not in seen:
                seen.append(row["arm"])
        return seen

    def table(self) -> str:
        arms = self.arms()
        width = max(len(a) for a in arms) + 2
        lines = [f"experiment: {self.name} ({self.metric})",
                 " " * width + "".join(f"seed {s:>4} " for s in self.seeds)]
        for arm in arms:
            cells = "".join(f"{self.value(arm, s):9.2f} " for s in self.seeds)
            lines.append(f"{arm:<{width}}" + cells)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"experiment": self.name, "metric": self.metric,
                "seeds": list(self.seeds), "rows": self.rows}


class _World:
    """Seed-derived corpora, speaker pools, and the base model for one run."""

    def __init__(self, seed: int, scale: TrendScale, offset_scale=None, noise_scale=None):
        self.seed = seed
        self.scale = scale
        self.threads = 1
        offset_scale = offset_scale if offset_scale is not None else scale.offset_scale
        noise_scale = noise_scale if noise_scale is not None else scale.noise_scale
        ss = np.random.SeedSequence([seed, 0xD5C])
        (self.bank_seed, self.pool_seed, self.corpus_seed,
         self.model_seed, self.stage_seed) = (int(s.generate_state(1)[0]) for s in ss.spawn(5))
        self.bank = CharacterBank(DEFAULT_CHARSET, scale.feature_dim, seed=self.bank_seed)
        pool = lambda prefix, count, sub: make_speaker_pool(
            prefix, count, self.bank, seed=self.pool_seed + sub,
            offset_scale=offset_scale, noise_scale=noise_scale,
            frames_per_char=scale.frames_per_char)
        self.train_pool = pool("train", scale.train_speakers, 0)
        self.test_pool = pool("test", scale.test_speakers, 1)
        self.tts_pool = pool("tts", scale.tts_speakers, 2)

    def config(self) -> ModelConfig:
        return ModelConfig(vocab=char_vocab(), feature_dim=self.scale.feature_dim)

    def fresh_model(self) -> Model:
        return init_model(self.config(), seed=self.model_seed)

    def asr_corpus(self, n: int, tag: int):
        corpus = generate_corpus(default_asr_grammar(), n, seed=self.corpus_seed + tag)
        return attach_features(corpus, self.train_pool)

    def entity_corpora(self):
        train = generate_corpus(default_slu_grammar(), self.scale.slu_train,
                                seed=self.corpus_seed + 10)
        test = generate_corpus(default_slu_grammar(), self.scale.slu_test,
                               seed=self.corpus_seed + 11)
        return attach_features(train, self.train_pool), attach_features(test, self.test_pool)

    def intent_corpora(self):
        train = generate_corpus(default_intent_grammar(), self.scale.intent_train,
                                seed=self.corpus_seed + 20)
        test = generate_corpus(default_intent_grammar(), self.scale.intent_test,
                               seed=self.corpus_seed + 21)
        return train, attach_features(test, self.test_pool)

    def pretrained(self, corpus_size: int) -> Model:
        """ASR pre-training at a fixed update budget regardless of corpus size."""
        epochs = math.ceil(self.scale.pretrain_updates /
                           max(1, corpus_size // self.scale.batch_size))
        stage = Stage(name="asr-pt", corpus="asr", setting=SerializationSetting.TRANSCRIPT,
                      epochs=epochs, lr=self.scale.pretrain_lr, momentum=self.scale.momentum,
                      batch_size=self.scale.batch_size, seed=self.stage_seed)
        model, _ = run_stage(self.fresh_model(), stage, self.asr_corpus(corpus_size, tag=1),
                             threads=self.threads)
        return model

    def slu_stage(self, name, setting, epochs, lr, freeze=frozenset()) -> Stage:
        return Stage(name=name, corpus="slu", setting=setting, epochs=epochs, lr=lr,
                     momentum=self.scale.momentum, batch_size=self.scale.batch_size,
                     seed=self.stage_seed + 1, lr_decay=0.7,
                     lr_decay_every=max(2, math.ceil(epochs * 0.27)),
                     freeze=freeze, auto_extend=True)


def _slot_f1(model, test_corpus) -> float:
    hyps = decode_corpus(model, test_corpus)
    parsed = [parse_hypothesis(h.symbols, model.vocab) for h in hyps]
    report = score_corpus(parsed, test_corpus, model.vocab)
    return 100.0 * report.slots.f1


def _intent_acc(model, test_corpus) -> float:
    hyps = decode_corpus(model, test_corpus)
    parsed = [parse_hypothesis(h.symbols, model.vocab) for h in hyps]
    report = score_corpus(parsed, test_corpus, model.vocab)
    return report.intent_accuracy


# one pre-trained model per (seed, scale, regime, size), reused across
# experiments inside a process; results are unchanged because training is
# deterministic in the inputs
_PRETRAIN_CACHE: dict = {}


def _pretrained(world: _World, regime: str, n: int) -> Model:
    key = (world.seed, world.scale, regime, n)
    if key not in _PRETRAIN_CACHE:
        _PRETRAIN_CACHE[key] = world.pretrained(n)
    return _PRETRAIN_CACHE[key]


def run_pretrain_vs_scratch(seeds, scale=DEFAULT_SCALE, threads=1,
                            arms_out=None) -> ExperimentResult:
    """Slot F1 on the entity task: no pre-training vs small/large pre-training."""
    result = ExperimentResult("pretrain-vs-scratch", tuple(seeds), "slot F1")
    for seed in seeds:
        world = _World(seed, scale)
        world.threads = threads
        train, test = world.entity_corpora()
        stage = world.slu_stage("slu-adapt", SerializationSetting.TRANSCRIPT_ENTITIES,
                                scale.slu_epochs, scale.slu_lr)
        arms = {
            "scratch": world.fresh_model(),
            "pt-small": _pretrained(world, "entity", scale.pretrain_small),
            "pt-large": _pretrained(world, "entity", scale.pretrain_large),
        }
        for arm, base in arms.items():
            adapted, _ = run_stage(base, stage, train, threads=threads)
            result.rows.append({"seed": seed, "arm": arm, "value": _slot_f1(adapted, test)})
            if arms_out is not None:
                arms_out[(arm, seed)] = adapted
    return result


def run_spoken_vs_alpha(seeds, scale=DEFAULT_SCALE, threads=1,
                        arms_out=None) -> ExperimentResult:
    """Slot F1 after adapting on spoken-order vs alphabetic entity targets."""
    result = ExperimentResult("spoken-vs-alpha", tuple(seeds), "slot F1")
    for seed in seeds:
        world = _World(seed, scale)
        world.threads = threads
        train, test = world.entity_corpora()
        base = _pretrained(world, "entity", scale.pretrain_large)
        for arm, setting in (("spoken", SerializationSetting.ENTITIES_SPOKEN),
                             ("alpha", SerializationSetting.ENTITIES_ALPHA)):
            stage = world.slu_stage(f"slu-{arm}", setting, scale.slu_epochs, scale.slu_lr)
            adapted, _ = run_stage(base, stage, train, threads=threads)
            result.rows.append({"seed": seed, "arm": arm, "value": _slot_f1(adapted, test)})
            if arms_out is not None:
                arms_out[(arm, seed)] = adapted
    return result


def run_ss_vs_ms(seeds, scale=DEFAULT_SCALE, threads=1, arms_out=None) -> ExperimentResult:
    """Intent accuracy on real test voices after synthesized-speech adaptation.

    Arms: single-voice full-network, single-voice prediction+joint-only
    (transcription frozen), and multi-voice full-network.
    """
    result = ExperimentResult("ss-vs-ms", tuple(seeds), "intent accuracy")
    for seed in seeds:
        world = _World(seed, scale, offset_scale=scale.intent_offset_scale,
                       noise_scale=scale.intent_noise_scale)
        world.threads = threads
        train_text, test = world.intent_corpora()
        ss_train = attach_features(train_text, world.tts_pool[:1])
        ms_train = attach_features(train_text, world.tts_pool)
        base = _pretrained(world, "intent", scale.pretrain_large)
        arms = (
            ("ss-all", ss_train, frozenset()),
            ("ss-prjoint", ss_train, frozenset({TRANSCRIPTION})),
            ("ms-all", ms_train, frozenset()),
        )
        for arm, train, freeze in arms:
            stage = world.slu_stage(f"slu-{arm}", SerializationSetting.INTENT_ONLY,
                                    scale.intent_epochs, scale.intent_lr, freeze=freeze)
            adapted, _ = run_stage(base, stage, train, threads=threads)
            result.rows.append({"seed": seed, "arm": arm, "value": _intent_acc(adapted, test)})
            if arms_out is not None:
                arms_out[(arm, seed)] = adapted
    return result


EXPERIMENTS = {
    "pretrain-vs-scratch": run_pretrain_vs_scratch,
    "spoken-vs-alpha": run_spoken_vs_alpha,
    "ss-vs-ms": run_ss_vs_ms,
}


def run_experiment(name: str, seeds, scale=DEFAULT_SCALE, threads: int = 1,
                   out_dir=None) -> ExperimentResult:
    """Run one named experiment; optionally write results, table, and checkpoints."""
    if name not in EXPERIMENTS:
        raise KeyError(f"unknown experiment {name!r}; have {sorted(EXPERIMENTS)}")
    arms_out = {} if out_dir is not None else None
    result = EXPERIMENTS[name](seeds, scale=scale, threads=threads, arms_out=arms_out)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.json").write_text(
            json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        (out / "table.txt").write_text(result.table() + "\n", encoding="utf-8")
        for (arm, seed), model in arms_out.items():
            save_checkpoint(model, out / f"{arm}-seed{seed}.ckpt.json",
                            Provenance(stage=f"{name}/{arm}", seed=seed))
    return result
