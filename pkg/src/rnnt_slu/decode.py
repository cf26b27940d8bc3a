"""Greedy transducer decoding: argmax over the joint distribution, advancing
one frame per BLANK and one label-history step per emitted symbol.

Ties pick the lowest symbol id, so an exactly uniform joint output emits
nothing (BLANK is id 0). A per-frame emission cap bounds the loop on
pathological models; hitting the cap advances the frame without scoring a
blank edge.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import compute
from .network import JOINT, PREDICTION, Model, encode
from .vocab import BLANK_ID


@dataclass(frozen=True)
class Hypothesis:
    """Emitted non-BLANK symbols, their emission frames, and the path log-score."""

    symbols: tuple[int, ...]
    frames: tuple[int, ...]
    score: float

    def __post_init__(self):
        if BLANK_ID in self.symbols:
            raise ValueError("hypothesis contains BLANK")
        if any(b < a for a, b in zip(self.frames, self.frames[1:])):
            raise ValueError("emission frames must be non-decreasing")


class _PredictionStepper:
    """Incremental prediction-network state for decoding."""

    def __init__(self, model: Model):
        self._params = compute.LstmParams(
            w_ih=model.params[f"{PREDICTION}.w_ih"],
            w_hh=model.params[f"{PREDICTION}.w_hh"],
            b=model.params[f"{PREDICTION}.b"],
        )
        self._embed = model.params[f"{PREDICTION}.embed"]
        hsz = self._params.hidden_size
        dtype = model.config.np_dtype
        self.h = np.zeros(hsz, dtype=dtype)
        self.c = np.zeros(hsz, dtype=dtype)
        self._step(model.params[f"{PREDICTION}.start"])

    def _step(self, x):
        self.h, self.c, _ = compute.lstm_cell_forward(x, self.h, self.c, self._params)

    def consume(self, symbol_id: int):
        self._step(self._embed[symbol_id])


def greedy_decode(m: Model, feats: np.ndarray, max_symbols_per_frame: int = 5) -> Hypothesis:
    """Best-first pass over the lattice; deterministic for a given model and features."""
    if max_symbols_per_frame < 1:
        raise ValueError("max_symbols_per_frame must be >= 1")
    p = m.params
    enc_proj = encode(m, feats) @ p[f"{JOINT}.enc_w"].T
    out_w, out_b, joint_b = p[f"{JOINT}.out_w"], p[f"{JOINT}.out_b"], p[f"{JOINT}.b"]
    pred_w = p[f"{JOINT}.pred_w"]

    stepper = _PredictionStepper(m)
    pred_proj = stepper.h @ pred_w.T

    symbols: list[int] = []
    frames: list[int] = []
    score = 0.0
    t = 0
    emitted_here = 0
    while t < enc_proj.shape[0]:
        logits = np.tanh(enc_proj[t] + pred_proj + joint_b) @ out_w.T + out_b
        logp = compute.log_softmax(logits)
        best = int(np.argmax(logp))  # argmax takes the first maximum: lowest symbol id
        if best == BLANK_ID:
            score += float(logp[BLANK_ID])
            t += 1
            emitted_here = 0
            continue
        symbols.append(best)
        frames.append(t)
        score += float(logp[best])
        stepper.consume(best)
        pred_proj = stepper.h @ pred_w.T
        emitted_here += 1
        if emitted_here >= max_symbols_per_frame:
            t += 1          # forced advance, no blank edge scored
            emitted_here = 0
    return Hypothesis(symbols=tuple(symbols), frames=tuple(frames), score=score)


def decode_corpus(m: Model, corpus, max_symbols_per_frame: int = 5) -> list[Hypothesis]:
    return [greedy_decode(m, u.features, max_symbols_per_frame) for u in corpus]
