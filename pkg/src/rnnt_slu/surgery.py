"""Output-vocabulary extension for adapting a trained model to new SLU symbols.

Only the joint output projection (rows + bias entries) and the prediction
embedding grow; every pre-existing parameter is carried over bit-exactly and
new ids are appended after all old ones.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import compute
from .network import JOINT, PREDICTION, Model, joint_logits, encode, predict
from .vocab import Vocab, VocabError


class SurgeryError(ValueError):
    pass


@dataclass(frozen=True)
class VocabExtension:
    new_symbols: tuple[str, ...]
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "new_symbols", tuple(self.new_symbols))
        seen = set()
        for sym in self.new_symbols:
            if sym in seen:
                raise SurgeryError(f"duplicate symbol {sym!r} in extension")
            seen.add(sym)


GROWN_PARAMS = (f"{PREDICTION}.embed", f"{JOINT}.out_w", f"{JOINT}.out_b")


def extend_vocab(m: Model, ext: VocabExtension) -> Model:
    """New model with ext.new_symbols appended; only the new rows are (seeded) random."""
    for sym in ext.new_symbols:
        if sym in m.vocab:
            raise SurgeryError(f"symbol {sym!r} already present in the model vocabulary")
    if not ext.new_symbols:
        return Model(config=m.config, params=dict(m.params))
    try:
        new_vocab = m.vocab.extend(ext.new_symbols)
    except VocabError as e:
        raise SurgeryError(str(e)) from e

    n_new = len(ext.new_symbols)
    dtype = m.config.np_dtype
    rng = np.random.default_rng(ext.init_seed)
    embed_dim = m.config.pred_embed_dim
    joint_dim = m.config.joint_dim

    params = dict(m.params)
    params[f"{PREDICTION}.embed"] = np.concatenate(
        [m.params[f"{PREDICTION}.embed"],
         compute.uniform_init(rng, (n_new, embed_dim), embed_dim, dtype)], axis=0)
    params[f"{JOINT}.out_w"] = np.concatenate(
        [m.params[f"{JOINT}.out_w"],
         compute.uniform_init(rng, (n_new, joint_dim), joint_dim, dtype)], axis=0)
    params[f"{JOINT}.out_b"] = np.concatenate(
        [m.params[f"{JOINT}.out_b"],
         compute.uniform_init(rng, (n_new,), joint_dim, dtype)], axis=0)

    return Model(config=replace(m.config, vocab=new_vocab), params=params)


@dataclass
class PreservationReport:
    """Outcome of probing an extended model against its parent."""

    probes: int
    max_logit_deviation: float          # pre-softmax, old symbols; must be exactly 0
    max_logprob_shift: float            # post-softmax, old symbols; nonzero is expected
    logprob_shift_expected: bool

    @property
    def preserved(self) -> bool:
        return self.max_logit_deviation == 0.0


def _check_surgery_related(old: Model, new: Model):
    n_old, n_new = len(old.vocab), len(new.vocab)
    if n_new < n_old or new.vocab.symbols[:n_old] != old.vocab.symbols:
        raise SurgeryError("new model vocabulary does not extend the old one")
    for name, arr in old.params.items():
        if name not in new.params:
            raise SurgeryError(f"parameter {name} missing from the new model")
        new_arr = new.params[name]
        if name in GROWN_PARAMS:
            new_arr = new_arr[: arr.shape[0]]
        if new_arr.shape != arr.shape or new_arr.tobytes() != arr.tobytes():
            raise SurgeryError(f"parameter {name} differs; models are not surgery-related")


def logit_preservation_check(old: Model, new: Model, probes) -> PreservationReport:
    """Verify old-symbol pre-softmax logits are bit-identical on probe utterances.

    Each probe is a (features, targets) pair whose targets contain no new
    symbols. Old-symbol log-probabilities shift after the extension because
    the partition now runs over a larger set; the report flags that shift as
    expected rather than as a defect.
    """
    _check_surgery_related(old, new)
    n_old = len(old.vocab)
    worst_logit = 0.0
    worst_logprob = 0.0
    count = 0
    for feats, targets in probes:
        targets = np.asarray(targets, dtype=np.int64)
        if targets.size and targets.max() >= n_old:
            raise SurgeryError("probe targets must not contain new symbols")
        logits_old = joint_logits(old, encode(old, feats), predict(old, targets))
        logits_new = joint_logits(new, encode(new, feats), predict(new, targets))
        dev = np.abs(logits_new[:, :, :n_old] - logits_old)
        worst_logit = max(worst_logit, float(dev.max()))
        lp_old = compute.log_softmax(logits_old)
        lp_new = compute.log_softmax(logits_new)
        worst_logprob = max(worst_logprob, float(np.abs(lp_new[:, :, :n_old] - lp_old).max()))
        count += 1
    return PreservationReport(
        probes=count,
        max_logit_deviation=worst_logit,
        max_logprob_shift=worst_logprob,
        logprob_shift_expected=len(new.vocab) > n_old,
    )
