"""Exact transducer loss over the (T+1) x (U+1) emission lattice.

Works in the log domain throughout. The per-row recursions are expressed as
prefix/suffix log-sum-exp scans so a whole target row is one vectorized
sweep; internals run in float64 regardless of the model dtype.

Conventions (0-indexed): alpha[t, u] is the log-mass of all partial
alignments that consumed frames 0..t-1's blanks appropriately and emitted u
target symbols before frame t finishes, with

    alpha[0, 0] = 0
    alpha[t, u] = LSE(alpha[t-1, u] + blank[t-1, u], alpha[t, u-1] + label[t, u-1])
    loss        = -(alpha[T-1, U] + blank[T-1, U])

beta is the mirror image and includes the mandatory final blank, so
beta[0, 0] == -loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vocab import BLANK_ID

MAX_ORACLE_FRAMES = 6
MAX_ORACLE_TARGETS = 5

NEG_INF = -np.inf


class LatticeError(ValueError):
    pass


@dataclass
class JointLogProbs:
    """Per-position log-distributions over the output vocabulary plus the target ids.

    logp has shape [T, U+1, V] with BLANK at vocabulary index 0; every
    [t, u, :] slice must normalize, and no target id may be BLANK.
    """

    logp: np.ndarray
    targets: np.ndarray
    _checked: bool = field(default=True, repr=False)

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.logp.ndim != 3:
            raise LatticeError(f"logp must be [T, U+1, V], got shape {self.logp.shape}")
        t, u1, v = self.logp.shape
        if t < 1:
            raise LatticeError("at least one frame is required")
        if self.targets.shape != (u1 - 1,):
            raise LatticeError(
                f"targets of length {self.targets.shape} do not match logp rows {u1}"
            )
        if self.targets.size:
            if self.targets.min() <= BLANK_ID:
                raise LatticeError("BLANK may not appear in the target sequence")
            if self.targets.max() >= v:
                raise LatticeError(f"target id {self.targets.max()} outside vocabulary of {v}")
        if self._checked:
            if not np.isfinite(self.logp).all():
                raise LatticeError("non-finite log-probabilities")
            slack = _logsumexp_last(self.logp)
            worst = float(np.abs(slack).max())
            if worst > 1e-5:
                raise LatticeError(f"log-probabilities do not normalize (|logsumexp| = {worst:.2e})")

    @property
    def frames(self) -> int:
        return self.logp.shape[0]

    @property
    def num_targets(self) -> int:
        return self.logp.shape[1] - 1

    @property
    def vocab_size(self) -> int:
        return self.logp.shape[2]


@dataclass
class Lattice:
    """Forward/backward log-mass tables and the negative log-likelihood in nats."""

    alpha: np.ndarray  # [T, U+1]
    beta: np.ndarray   # [T, U+1]
    loss: float


def _logsumexp_last(x: np.ndarray) -> np.ndarray:
    m = x.max(axis=-1)
    return m + np.log(np.exp(x - m[..., None]).sum(axis=-1))


def _blank_and_label(j: JointLogProbs):
    """float64 copies: blank scores [T, U+1] and label-emission scores [T, U]."""
    blank = j.logp[:, :, BLANK_ID].astype(np.float64)
    if j.num_targets:
        label = j.logp[:, :-1, :][:, np.arange(j.num_targets), j.targets].astype(np.float64)
    else:
        label = np.zeros((j.frames, 0), dtype=np.float64)
    return blank, label


def forward_loss(j: JointLogProbs) -> Lattice:
    """Log-domain forward/backward over the emission lattice; loss in nats."""
    frames, nsym = j.frames, j.num_targets
    blank, label = _blank_and_label(j)

    # cum[t, u] = sum of label scores emitted to reach column u within row t
    cum = np.concatenate(
        [np.zeros((frames, 1)), np.cumsum(label, axis=1)], axis=1
    )

    alpha = np.empty((frames, nsym + 1))
    entry = np.full(nsym + 1, NEG_INF)
    entry[0] = 0.0  # alpha[0, 0]
    for t in range(frames):
        alpha[t] = np.logaddexp.accumulate(entry - cum[t]) + cum[t]
        if t + 1 < frames:
            entry = alpha[t] + blank[t]

    beta = np.empty((frames, nsym + 1))
    exit_ = np.full(nsym + 1, NEG_INF)
    exit_[nsym] = 0.0  # mass after the mandatory final blank
    for t in range(frames - 1, -1, -1):
        scored = exit_ + blank[t]
        rel = cum[t][-1] - cum[t]  # suffix label mass from column u to the end of the row
        beta[t] = np.logaddexp.accumulate((scored - rel)[::-1])[::-1] + rel
        exit_ = beta[t]

    loss = -(alpha[frames - 1, nsym] + blank[frames - 1, nsym])
    return Lattice(alpha=alpha, beta=beta, loss=float(loss))


def logit_gradients(j: JointLogProbs, lat: Lattice) -> np.ndarray:
    """Gradient of the loss with respect to pre-softmax logits, shape [T, U+1, V].

    Posterior edge occupancies exp(alpha + edge + beta_next + loss) are pushed
    through the softmax Jacobian, so each [t, u, :] slice sums to zero.
    """
    frames, nsym = j.frames, j.num_targets
    if lat.alpha.shape != (frames, nsym + 1) or lat.beta.shape != lat.alpha.shape:
        raise LatticeError(
            f"lattice tables {lat.alpha.shape} do not match log-probs {j.logp.shape[:2]}"
        )
    blank, label = _blank_and_label(j)
    if not (
        abs(lat.alpha[0, 0] + lat.beta[0, 0] + lat.loss) <= 1e-6 * max(1.0, abs(lat.loss))
        and abs(lat.alpha[-1, -1] + blank[-1, -1] + lat.loss) <= 1e-6 * max(1.0, abs(lat.loss))
    ):
        raise LatticeError("lattice was not produced from these log-probabilities")

    dtype = j.logp.dtype
    occupancy = np.exp(lat.alpha + lat.beta + lat.loss)

    beta_after_blank = np.full((frames, nsym + 1), NEG_INF)
    beta_after_blank[:-1] = lat.beta[1:]
    beta_after_blank[-1, nsym] = 0.0
    gamma_blank = np.exp(lat.alpha + blank + beta_after_blank + lat.loss)

    grad = np.exp(j.logp) * occupancy[:, :, None].astype(dtype)
    grad[:, :, BLANK_ID] -= gamma_blank.astype(dtype)
    if nsym:
        gamma_label = np.exp(lat.alpha[:, :-1] + label + lat.beta[:, 1:] + lat.loss)
        cols = np.arange(nsym)
        grad[:, cols, j.targets] -= gamma_label.astype(dtype)
    return grad


def oracle_loss(j: JointLogProbs) -> float:
    """Exact negative log-likelihood by explicit enumeration of every monotone path.

    Only for instances small enough to enumerate (frames <= 6, targets <= 5);
    exists as an independent check on forward_loss.
    """
    frames, nsym = j.frames, j.num_targets
    if frames > MAX_ORACLE_FRAMES or nsym > MAX_ORACLE_TARGETS:
        raise LatticeError(
            f"instance {frames}x{nsym} too large to enumerate "
            f"(limit {MAX_ORACLE_FRAMES}x{MAX_ORACLE_TARGETS})"
        )
    logp = j.logp.astype(np.float64, copy=False)
    targets = j.targets
    scores: list[float] = []

    def walk(t: int, u: int, acc: float):
        if t == frames:
            if u == nsym:
                scores.append(acc)
            return
        walk(t + 1, u, acc + logp[t, u, BLANK_ID])
        if u < nsym:
            walk(t, u + 1, acc + logp[t, u, targets[u]])

    walk(0, 0, 0.0)
    return float(-np.logaddexp.reduce(np.array(scores)))
