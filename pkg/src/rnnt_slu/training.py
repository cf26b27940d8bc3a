"""SGD with momentum, parameter freezing, and the staged adaptation runner.

A stage trains one serialization setting on one corpus, optionally growing
the vocabulary first; a plan threads a model through an ordered list of
stages (pre-training, optional in-domain ASR adaptation, SLU adaptation).
Given identical seeds and single-threaded execution, a run is bit-for-bit
reproducible.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .compute import NonFiniteInput
from .lattice import LatticeError
from .network import (
    Model,
    SUBNETWORKS,
    subnetwork_of,
    utterance_loss,
    utterance_loss_and_grads,
    with_params,
)
from .slu_data import SerializationSetting, required_label_symbols, serialize
from .surgery import VocabExtension, extend_vocab


class TrainingError(RuntimeError):
    pass


class TrainingDiverged(TrainingError):
    """Loss went non-finite; carries the offending utterance and epoch."""


def validate_freeze_mask(freeze, params) -> frozenset[str]:
    freeze = frozenset(freeze)
    for prefix in freeze:
        if not any(name == prefix or name.startswith(prefix + ".") for name in params):
            raise TrainingError(f"freeze prefix {prefix!r} matches no parameter")
    return freeze


def _is_frozen(name: str, freeze) -> bool:
    return any(name == p or name.startswith(p + ".") for p in freeze)


def sgd_step(model: Model, grads: dict, lr: float, momentum: float = 0.0,
             freeze=frozenset(), velocity: dict | None = None):
    """One update w <- w - lr * v with v <- momentum * v + g on unfrozen parameters.

    Returns (new_model, velocity). Frozen parameters keep their exact arrays.
    """
    params = {}
    velocity = dict(velocity) if velocity else {}
    for name, w in model.params.items():
        if _is_frozen(name, freeze):
            params[name] = w
            continue
        g = grads[name]
        if g.shape != w.shape:
            raise TrainingError(f"gradient shape {g.shape} != parameter {name} shape {w.shape}")
        v = velocity.get(name)
        v = g if v is None or momentum == 0.0 else momentum * v + g
        velocity[name] = v
        params[name] = w - np.asarray(lr * v, dtype=w.dtype)
    return with_params(model, params), velocity


@dataclass(frozen=True)
class Stage:
    """One curriculum stage: what to train on, what to grow, what to freeze."""

    name: str
    corpus: str
    setting: SerializationSetting
    epochs: int
    lr: float
    momentum: float = 0.9
    batch_size: int = 8
    seed: int = 0
    lr_decay: float = 1.0        # multiplicative, applied every lr_decay_every epochs
    lr_decay_every: int = 1
    freeze: frozenset = frozenset()
    extend: tuple[str, ...] | None = None   # explicit new symbols
    auto_extend: bool = False               # derive new symbols from corpus + setting
    holdout: str | None = None              # optional corpus key for held-out loss


@dataclass(frozen=True)
class AdaptationPlan:
    stages: tuple[Stage, ...]

    def __post_init__(self):
        seen: set[str] = set()
        for stage in self.stages:
            if stage.extend:
                dup = seen.intersection(stage.extend)
                if dup:
                    raise TrainingError(f"vocab extensions overlap across stages: {sorted(dup)}")
                seen.update(stage.extend)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    holdout_loss: float | None
    wall_clock_s: float
    lr: float

    def to_dict(self) -> dict:
        d = {"epoch": self.epoch, "train_loss": self.train_loss, "lr": self.lr,
             "wall_clock_s": self.wall_clock_s}
        if self.holdout_loss is not None:
            d["holdout_loss"] = self.holdout_loss
        return d


@dataclass
class TrainReport:
    stage: str
    epochs: list[EpochStats] = field(default_factory=list)
    updates: dict[str, int] = field(default_factory=lambda: {k: 0 for k in SUBNETWORKS})
    new_symbols: tuple[str, ...] = ()

    def to_dict(self, with_timing: bool = True) -> dict:
        epochs = [e.to_dict() for e in self.epochs]
        if not with_timing:
            for e in epochs:
                e.pop("wall_clock_s", None)
        return {"stage": self.stage, "epochs": epochs, "updates": dict(self.updates),
                "new_symbols": list(self.new_symbols)}


def _prepared(corpus, setting, vocab):
    """Precompute (uid, features, target ids) for a whole corpus."""
    prepared = []
    for u in corpus:
        if u.features is None:
            raise TrainingError(f"utterance {u.uid} has no features")
        prepared.append((u.uid, u.features, serialize(u, setting, vocab)))
    return prepared


def _checked_loss_and_grads(model, item):
    uid, feats, targets = item
    try:
        loss, grads = utterance_loss_and_grads(model, feats, targets)
    except (NonFiniteInput, LatticeError) as e:
        raise TrainingDiverged(f"utterance {uid}: {e}") from None
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss on utterance {uid}")
    return loss, grads


def _batch_grads(model, batch, threads):
    """Mean loss and mean gradients over a batch, accumulated in submission order."""
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda item: _checked_loss_and_grads(model, item), batch))
    else:
        results = [_checked_loss_and_grads(model, item) for item in batch]
    scale = 1.0 / len(batch)
    total: dict[str, np.ndarray] = {}
    loss_sum = 0.0
    for loss, grads in results:
        loss_sum += loss
        for name, g in grads.items():
            if name in total:
                total[name] += g
            else:
                total[name] = g.copy()
    for name in total:
        total[name] *= scale
    return loss_sum * scale, total


def run_stage(model: Model, stage: Stage, corpus, holdout=None, threads: int = 1):
    """Train one stage; returns (model, TrainReport). Deterministic given the stage seed."""
    ext_seed, shuffle_seed = (int(s.generate_state(1)[0])
                              for s in np.random.SeedSequence(stage.seed).spawn(2))
    new_symbols: tuple[str, ...] = ()
    if stage.extend is not None or stage.auto_extend:
        symbols = stage.extend if stage.extend is not None else \
            required_label_symbols(corpus, stage.setting)
        new_symbols = tuple(s for s in symbols if s not in model.vocab)
        if new_symbols:
            model = extend_vocab(model, VocabExtension(new_symbols, init_seed=ext_seed))

    freeze = validate_freeze_mask(stage.freeze, model.params)
    prepared = _prepared(corpus, stage.setting, model.vocab)
    holdout_prepared = _prepared(holdout, stage.setting, model.vocab) if holdout else None

    report = TrainReport(stage=stage.name, new_symbols=new_symbols)
    rng = np.random.default_rng(shuffle_seed)
    velocity: dict | None = None
    unfrozen = [n for n in model.params if not _is_frozen(n, freeze)]

    for epoch in range(stage.epochs):
        t0 = time.perf_counter()
        lr = stage.lr * (stage.lr_decay ** (epoch // stage.lr_decay_every))
        order = rng.permutation(len(prepared))
        epoch_loss = 0.0
        for start in range(0, len(order), stage.batch_size):
            batch = [prepared[i] for i in order[start:start + stage.batch_size]]
            try:
                mean_loss, grads = _batch_grads(model, batch, threads)
            except TrainingDiverged as e:
                raise TrainingDiverged(f"{e} (stage {stage.name!r}, epoch {epoch})") from None
            epoch_loss += mean_loss * len(batch)
            model, velocity = sgd_step(model, grads, lr, stage.momentum, freeze, velocity)
            for name in unfrozen:
                report.updates[subnetwork_of(name)] += 1
        holdout_loss = None
        if holdout_prepared:
            holdout_loss = float(np.mean(
                [utterance_loss(model, feats, tgt) for _, feats, tgt in holdout_prepared]))
        report.epochs.append(EpochStats(
            epoch=epoch,
            train_loss=epoch_loss / len(prepared),
            holdout_loss=holdout_loss,
            wall_clock_s=time.perf_counter() - t0,
            lr=lr,
        ))
    return model, report


def run_plan(model: Model, plan: AdaptationPlan, corpora: dict, threads: int = 1,
             stage_callback=None):
    """Thread a model through the plan's stages in order.

    `stage_callback(index, stage, model, report)` runs after each stage (the
    CLI uses it to write checkpoints); a stage failure aborts the plan and
    leaves earlier callbacks' effects in place.
    """
    reports = []
    for idx, stage in enumerate(plan.stages):
        if stage.corpus not in corpora:
            raise TrainingError(f"stage {stage.name!r} references unknown corpus {stage.corpus!r}")
        holdout = corpora.get(stage.holdout) if stage.holdout else None
        model, report = run_stage(model, stage, corpora[stage.corpus],
                                  holdout=holdout, threads=threads)
        reports.append(report)
        if stage_callback is not None:
            stage_callback(idx, stage, model, report)
    return model, reports
