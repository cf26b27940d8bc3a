"""Transducer loss: enumeration oracle, structural identities, gradient checks."""

import math

import numpy as np
import pytest

from rnnt_slu.compute import finite_difference, log_softmax
from rnnt_slu.lattice import (
    JointLogProbs,
    LatticeError,
    forward_loss,
    logit_gradients,
    oracle_loss,
)
from rnnt_slu.verify import random_joint_logprobs, relative_deviation


def uniform_logprobs(frames, num_targets, vocab_size, targets=None):
    logp = np.full((frames, num_targets + 1, vocab_size), -math.log(vocab_size))
    if targets is None:
        targets = np.arange(1, num_targets + 1)
    return JointLogProbs(logp=logp, targets=targets)


def test_single_forced_blank_uniform():
    j = uniform_logprobs(1, 0, 3)
    assert abs(forward_loss(j).loss - math.log(3.0)) < 1e-12


def test_certain_blank_zero_loss():
    logp = np.full((1, 1, 3), -1e3)
    logp[0, 0, 0] = 0.0
    # slice is super-normalized only negligibly; renormalize exactly
    logp = log_softmax(logp)
    j = JointLogProbs(logp=logp, targets=np.zeros(0, dtype=np.int64))
    assert abs(forward_loss(j).loss) < 1e-6


def test_two_path_enumeration_t2_u1():
    rng = np.random.default_rng(10)
    logp = log_softmax(rng.normal(0, 2, size=(2, 2, 3)))
    targets = np.array([2])
    j = JointLogProbs(logp=logp, targets=targets)
    b = logp[:, :, 0]
    y = logp[:, :, 2]
    # two monotone paths: blank first or label first, both end in the final blank
    expected = -np.logaddexp(
        b[0, 0] + y[1, 0] + b[1, 1],
        y[0, 0] + b[0, 1] + b[1, 1],
    )
    assert abs(forward_loss(j).loss - expected) < 1e-12
    assert abs(oracle_loss(j) - expected) < 1e-12


def test_oracle_trivial_single_blank():
    rng = np.random.default_rng(11)
    logp = log_softmax(rng.normal(size=(1, 1, 4)))
    j = JointLogProbs(logp=logp, targets=np.zeros(0, dtype=np.int64))
    assert abs(oracle_loss(j) + logp[0, 0, 0]) < 1e-12


def test_oracle_agreement_200_random_instances():
    rng = np.random.default_rng(12)
    for _ in range(200):
        j = random_joint_logprobs(rng)
        dp = forward_loss(j).loss
        exact = oracle_loss(j)
        assert abs(dp - exact) <= 1e-10 * max(1.0, abs(exact))


def test_oracle_refuses_large_instances():
    j = uniform_logprobs(7, 0, 2)
    with pytest.raises(LatticeError, match="too large"):
        oracle_loss(j)


def test_blank_in_targets_rejected():
    logp = log_softmax(np.zeros((2, 2, 3)))
    with pytest.raises(LatticeError, match="BLANK"):
        JointLogProbs(logp=logp, targets=np.array([0]))


def test_unnormalized_logp_rejected():
    logp = np.zeros((1, 1, 3))
    with pytest.raises(LatticeError, match="normalize"):
        JointLogProbs(logp=logp, targets=np.zeros(0, dtype=np.int64))


def test_zero_frames_rejected():
    with pytest.raises(LatticeError, match="frame"):
        JointLogProbs(logp=np.zeros((0, 1, 3)), targets=np.zeros(0, dtype=np.int64))


# ---------------------------------------------------------------------------
# structural identities
# ---------------------------------------------------------------------------

def test_alpha_beta_and_cut_identities():
    rng = np.random.default_rng(13)
    for _ in range(100):
        j = random_joint_logprobs(rng, max_frames=5, max_targets=4, max_vocab=5)
        lat = forward_loss(j)
        assert abs(lat.alpha[0, 0] + lat.beta[0, 0] + lat.loss) <= 1e-8
        blank = j.logp[:, :, 0].astype(np.float64)
        for t in range(j.frames - 1):
            cut = np.logaddexp.reduce(lat.alpha[t] + blank[t] + lat.beta[t + 1])
            assert abs(cut + lat.loss) <= 1e-8


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------

def test_gradients_sum_to_zero_over_vocab():
    rng = np.random.default_rng(14)
    for _ in range(20):
        j = random_joint_logprobs(rng)
        grad = logit_gradients(j, forward_loss(j))
        assert np.abs(grad.sum(axis=-1)).max() < 1e-10


def test_single_frame_closed_form():
    # T=1, U=0: gradient is softmax(z) - onehot(BLANK)
    rng = np.random.default_rng(15)
    z = rng.normal(size=(1, 1, 4))
    j = JointLogProbs(logp=log_softmax(z), targets=np.zeros(0, dtype=np.int64))
    grad = logit_gradients(j, forward_loss(j))
    want = np.exp(log_softmax(z))
    want[0, 0, 0] -= 1.0
    assert np.abs(grad - want).max() < 1e-12


def test_gradients_match_finite_differences_100_instances():
    rng = np.random.default_rng(16)
    worst = 0.0
    for _ in range(100):
        frames = int(rng.integers(1, 5))
        num_targets = int(rng.integers(0, 4))
        vocab = int(rng.integers(2, 5))
        logits = rng.normal(0, 1.5, size=(frames, num_targets + 1, vocab))
        targets = rng.integers(1, vocab, size=num_targets)
        j = JointLogProbs(logp=log_softmax(logits), targets=targets)
        got = logit_gradients(j, forward_loss(j))

        def loss_of(z):
            return forward_loss(JointLogProbs(logp=log_softmax(z), targets=targets)).loss

        want = finite_difference(loss_of, logits.copy(), step=1e-5)
        worst = max(worst, relative_deviation(got, want))
    assert worst <= 1e-4, f"worst relative error {worst:.3e}"


def test_mismatched_lattice_rejected():
    rng = np.random.default_rng(17)
    j1 = random_joint_logprobs(rng, frames=3, num_targets=2, vocab_size=4)
    j2 = random_joint_logprobs(rng, frames=3, num_targets=2, vocab_size=4)
    lat = forward_loss(j1)
    with pytest.raises(LatticeError):
        logit_gradients(j2, lat)


def test_raising_target_mass_never_hurts_when_blank_is_preserved():
    # Renormalized raise of a target symbol that takes its mass only from
    # unused symbols (blank probability held fixed): every alignment path
    # either gains or is untouched, so the loss cannot increase.
    rng = np.random.default_rng(18)
    for _ in range(50):
        frames = int(rng.integers(1, 5))
        num_targets = int(rng.integers(1, 4))
        vocab = int(rng.integers(3, 6))
        logits = rng.normal(0, 1.5, size=(frames, num_targets + 1, vocab))
        targets = rng.integers(1, vocab, size=num_targets)
        j = JointLogProbs(logp=log_softmax(logits), targets=targets)
        base = forward_loss(j).loss

        t = int(rng.integers(frames))
        u = int(rng.integers(num_targets))
        y = int(targets[u])
        probs = np.exp(j.logp).astype(np.float64)
        slice_ = probs[t, u].copy()
        others = [k for k in range(vocab) if k not in (0, y)]
        moved = 0.5 * slice_[others].sum()
        slice_[others] *= 0.5
        slice_[y] += moved
        probs[t, u] = slice_ / slice_.sum()
        raised = JointLogProbs(logp=np.log(probs), targets=targets)
        assert forward_loss(raised).loss <= base + 1e-10
