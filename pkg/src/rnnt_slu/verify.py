"""Numerical verification suites: oracle equivalence and gradient checks.

Each suite returns a small result record; the CLI surfaces them through the
gradcheck subcommand and the acceptance tests assert on them directly. All
checks run in float64, where central differences are trustworthy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import compute, network
from .lattice import JointLogProbs, forward_loss, logit_gradients, oracle_loss
from .vocab import Vocab, BLANK_SYMBOL


@dataclass
class SuiteResult:
    name: str
    trials: int
    worst: float      # worst relative deviation observed
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst <= self.tolerance

    def line(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (f"[{status}] {self.name}: {self.trials} trials, "
                f"worst {self.worst:.3e} (tolerance {self.tolerance:.0e})")


def relative_deviation(got: np.ndarray, want: np.ndarray) -> float:
    """max |got - want| / max(1, |want|), elementwise."""
    got = np.asarray(got, dtype=np.float64)
    want = np.asarray(want, dtype=np.float64)
    denom = np.maximum(1.0, np.abs(want))
    return float((np.abs(got - want) / denom).max()) if got.size else 0.0


def random_joint_logprobs(rng, frames=None, num_targets=None, vocab_size=None,
                          max_frames=4, max_targets=3, max_vocab=4) -> JointLogProbs:
    t = frames if frames is not None else int(rng.integers(1, max_frames + 1))
    u = num_targets if num_targets is not None else int(rng.integers(0, max_targets + 1))
    v = vocab_size if vocab_size is not None else int(rng.integers(2, max_vocab + 1))
    logits = rng.normal(0.0, 2.0, size=(t, u + 1, v))
    targets = rng.integers(1, v, size=u)
    return JointLogProbs(logp=compute.log_softmax(logits), targets=targets)


def lattice_oracle_suite(trials: int = 200, seed: int = 0) -> SuiteResult:
    """forward_loss against exhaustive alignment enumeration on small instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        j = random_joint_logprobs(rng)
        dp = forward_loss(j).loss
        exact = oracle_loss(j)
        worst = max(worst, abs(dp - exact) / max(1.0, abs(exact)))
    return SuiteResult("lattice-oracle", trials, worst, 1e-10)


def lattice_gradient_suite(trials: int = 100, seed: int = 1) -> SuiteResult:
    """Analytic logit gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        t = int(rng.integers(1, 5))
        u = int(rng.integers(0, 4))
        v = int(rng.integers(2, 5))
        logits = rng.normal(0.0, 1.5, size=(t, u + 1, v))
        targets = rng.integers(1, v, size=u)

        j = JointLogProbs(logp=compute.log_softmax(logits), targets=targets)
        got = logit_gradients(j, forward_loss(j))

        def loss_of(z):
            jj = JointLogProbs(logp=compute.log_softmax(z), targets=targets)
            return forward_loss(jj).loss

        want = compute.finite_difference(loss_of, logits.copy(), step=1e-5)
        worst = max(worst, relative_deviation(got, want))
    return SuiteResult("lattice-gradients", trials, worst, 1e-4)


def tiny_config(vocab_size: int = 5) -> network.ModelConfig:
    """Every width <= 4; float64 so finite differences are meaningful."""
    symbols = (BLANK_SYMBOL,) + tuple(chr(ord("a") + i) for i in range(vocab_size - 1))
    return network.ModelConfig(
        vocab=Vocab(symbols), feature_dim=3, enc_layers=2, enc_cells=3,
        pred_embed_dim=3, pred_cells=4, joint_dim=4, dtype="float64")


def model_gradient_suite(seeds: int = 20, seed0: int = 100) -> SuiteResult:
    """Full utterance_loss_and_grads against finite differences over every parameter."""
    worst = 0.0
    cfg = tiny_config()
    for k in range(seeds):
        rng = np.random.default_rng(seed0 + k)
        model = network.init_model(cfg, seed=seed0 + k)
        frames = int(rng.integers(2, 5))
        num_targets = int(rng.integers(0, 4))
        feats = rng.normal(0.0, 1.0, size=(frames, cfg.feature_dim))
        targets = rng.integers(1, len(cfg.vocab), size=num_targets)
        _, grads = network.utterance_loss_and_grads(model, feats, targets)
        for name, arr in model.params.items():
            def loss_of(w, _name=name):
                trial = network.with_params(model, {**model.params, _name: w})
                return network.utterance_loss(trial, feats, targets)

            want = compute.finite_difference(loss_of, arr.copy(), step=1e-5)
            worst = max(worst, relative_deviation(grads[name], want))
    return SuiteResult("model-gradients", seeds, worst, 1e-3)


def lattice_identity_suite(trials: int = 100, seed: int = 2) -> SuiteResult:
    """Structural lattice identities: frontier cuts and alpha/beta agreement."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        j = random_joint_logprobs(rng, max_frames=5, max_targets=4, max_vocab=5)
        lat = forward_loss(j)
        blank = j.logp[:, :, 0].astype(np.float64)
        worst = max(worst, abs(lat.alpha[0, 0] + lat.beta[0, 0] + lat.loss))
        for t in range(j.frames - 1):
            cut = np.logaddexp.reduce(lat.alpha[t] + blank[t] + lat.beta[t + 1])
            worst = max(worst, abs(cut + lat.loss))
    return SuiteResult("lattice-identities", trials, worst, 1e-8)


def run_all(fast: bool = False) -> list[SuiteResult]:
    if fast:
        return [
            lattice_oracle_suite(trials=50),
            lattice_identity_suite(trials=25),
            lattice_gradient_suite(trials=25),
            model_gradient_suite(seeds=3),
        ]
    return [
        lattice_oracle_suite(),
        lattice_identity_suite(),
        lattice_gradient_suite(),
        model_gradient_suite(),
    ]
