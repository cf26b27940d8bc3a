"""Transducer model: bidirectional recurrent encoder, label-conditioned
prediction network, and an additive joint network producing per-position
log-distributions.

Parameters live in a flat name -> array tree whose names partition into the
prefixes ``transcription.``, ``prediction.`` and ``joint.``; everything that
trains, freezes, or serializes the model keys off those names.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import compute
from .compute import LstmParams, ShapeMismatch
from .lattice import JointLogProbs, forward_loss, logit_gradients
from .vocab import BLANK_ID, Vocab

TRANSCRIPTION = "transcription"
PREDICTION = "prediction"
JOINT = "joint"
SUBNETWORKS = (TRANSCRIPTION, PREDICTION, JOINT)


@dataclass(frozen=True)
class ModelConfig:
    """Desk-scale topology knobs; the joint output width always equals the vocabulary."""

    vocab: Vocab
    feature_dim: int = 16
    enc_layers: int = 2
    enc_cells: int = 32          # per direction
    pred_embed_dim: int = 16
    pred_cells: int = 48
    joint_dim: int = 32
    dtype: str = "float32"       # "float64" for gradient-check builds

    def __post_init__(self):
        for name in ("feature_dim", "enc_layers", "enc_cells", "pred_embed_dim",
                     "pred_cells", "joint_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    @property
    def enc_out_dim(self) -> int:
        return 2 * self.enc_cells


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray] = field(repr=False)

    @property
    def vocab(self) -> Vocab:
        return self.config.vocab


def _param_specs(config: ModelConfig):
    """(name, shape, fan_in) for every parameter, in creation order.

    The seeded initializer consumes randomness in exactly this order, so the
    order is part of the reproducibility contract.
    """
    specs = []
    width = config.feature_dim
    for layer in range(config.enc_layers):
        h = config.enc_cells
        for direction in ("fwd", "bwd"):
            base = f"{TRANSCRIPTION}.l{layer}.{direction}"
            specs.append((f"{base}.w_ih", (4 * h, width), width))
            specs.append((f"{base}.w_hh", (4 * h, h), h))
            specs.append((f"{base}.b", (4 * h,), h))
        width = 2 * h
    v, de, p = len(config.vocab), config.pred_embed_dim, config.pred_cells
    specs.append((f"{PREDICTION}.embed", (v, de), de))
    specs.append((f"{PREDICTION}.start", (de,), de))
    specs.append((f"{PREDICTION}.w_ih", (4 * p, de), de))
    specs.append((f"{PREDICTION}.w_hh", (4 * p, p), p))
    specs.append((f"{PREDICTION}.b", (4 * p,), p))
    jd = config.joint_dim
    specs.append((f"{JOINT}.enc_w", (jd, config.enc_out_dim), config.enc_out_dim))
    specs.append((f"{JOINT}.pred_w", (jd, p), p))
    specs.append((f"{JOINT}.b", (jd,), jd))
    specs.append((f"{JOINT}.out_w", (v, jd), jd))
    specs.append((f"{JOINT}.out_b", (v,), jd))
    return specs


def init_model(config: ModelConfig, seed: int) -> Model:
    """Fresh model with uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] parameters."""
    rng = np.random.default_rng(seed)
    dtype = config.np_dtype
    params = {
        name: compute.uniform_init(rng, shape, fan_in, dtype)
        for name, shape, fan_in in _param_specs(config)
    }
    return Model(config=config, params=params)


def zero_model(config: ModelConfig) -> Model:
    """All-zero parameters; useful for fixed-point checks and rigged fixtures."""
    dtype = config.np_dtype
    params = {name: np.zeros(shape, dtype=dtype) for name, shape, _ in _param_specs(config)}
    return Model(config=config, params=params)


def subnetwork_of(param_name: str) -> str:
    head = param_name.split(".", 1)[0]
    if head not in SUBNETWORKS:
        raise ValueError(f"parameter {param_name!r} has no known sub-network prefix")
    return head


def _lstm_params(params: dict, base: str) -> LstmParams:
    return LstmParams(w_ih=params[f"{base}.w_ih"], w_hh=params[f"{base}.w_hh"], b=params[f"{base}.b"])


# ---------------------------------------------------------------------------
# transcription network
# ---------------------------------------------------------------------------

def _encode_with_tape(m: Model, feats: np.ndarray):
    cfg = m.config
    if feats.ndim != 2 or feats.shape[1] != cfg.feature_dim:
        raise ShapeMismatch(
            f"features {feats.shape} do not match feature_dim {cfg.feature_dim}"
        )
    if feats.shape[0] < 1:
        raise ShapeMismatch("at least one feature frame is required")
    x = feats.astype(cfg.np_dtype, copy=False)
    tapes = []
    for layer in range(cfg.enc_layers):
        x, tape = compute.lstm_bidirectional_forward(
            x,
            _lstm_params(m.params, f"{TRANSCRIPTION}.l{layer}.fwd"),
            _lstm_params(m.params, f"{TRANSCRIPTION}.l{layer}.bwd"))
        tapes.append(tape)
    return x, tapes


def encode(m: Model, feats: np.ndarray) -> np.ndarray:
    """Per-frame encodings [T, 2 * enc_cells]: forward and backward states concatenated."""
    enc, _ = _encode_with_tape(m, feats)
    return enc


def _encode_backward(m: Model, tapes, denc: np.ndarray, grads: dict):
    d = denc
    for layer in range(m.config.enc_layers - 1, -1, -1):
        d, g_f, g_b = compute.lstm_bidirectional_backward(tapes[layer], d)
        for direction, g in (("fwd", g_f), ("bwd", g_b)):
            base = f"{TRANSCRIPTION}.l{layer}.{direction}"
            grads[f"{base}.w_ih"] = g.w_ih
            grads[f"{base}.w_hh"] = g.w_hh
            grads[f"{base}.b"] = g.b
    return d


# ---------------------------------------------------------------------------
# prediction network
# ---------------------------------------------------------------------------

def _predict_with_tape(m: Model, targets):
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size and (targets.min() <= BLANK_ID or targets.max() >= len(m.vocab)):
        raise ShapeMismatch("targets must be non-BLANK vocabulary ids")
    emb, emb_tape = compute.embedding_forward(targets, m.params[f"{PREDICTION}.embed"])
    inputs = np.concatenate([m.params[f"{PREDICTION}.start"][None, :], emb], axis=0)
    states, seq_tape = compute.lstm_sequence_forward(inputs, _lstm_params(m.params, PREDICTION))
    return states, (emb_tape, seq_tape)


def predict(m: Model, targets) -> np.ndarray:
    """Label-history states [U+1, pred_cells]; row u follows y_1..y_u, row 0 is the start state."""
    states, _ = _predict_with_tape(m, targets)
    return states


def _predict_backward(m: Model, tapes, dstates: np.ndarray, grads: dict):
    emb_tape, seq_tape = tapes
    dinputs, g = compute.lstm_sequence_backward(seq_tape, dstates)
    grads[f"{PREDICTION}.w_ih"] = g.w_ih
    grads[f"{PREDICTION}.w_hh"] = g.w_hh
    grads[f"{PREDICTION}.b"] = g.b
    grads[f"{PREDICTION}.start"] = dinputs[0]
    grads[f"{PREDICTION}.embed"] = compute.embedding_backward(emb_tape, dinputs[1:])


# ---------------------------------------------------------------------------
# joint network
# ---------------------------------------------------------------------------

def _joint_with_tape(m: Model, enc: np.ndarray, pred: np.ndarray, targets):
    cfg = m.config
    if enc.shape[1] != cfg.enc_out_dim:
        raise ShapeMismatch(f"encoder width {enc.shape[1]} != {cfg.enc_out_dim}")
    if pred.shape[1] != cfg.pred_cells:
        raise ShapeMismatch(f"prediction width {pred.shape[1]} != {cfg.pred_cells}")
    p = m.params
    enc_proj = enc @ p[f"{JOINT}.enc_w"].T
    pred_proj = pred @ p[f"{JOINT}.pred_w"].T
    hidden = np.tanh(enc_proj[:, None, :] + pred_proj[None, :, :] + p[f"{JOINT}.b"])
    logits = hidden @ p[f"{JOINT}.out_w"].T + p[f"{JOINT}.out_b"]
    logp = compute.log_softmax(logits)
    return JointLogProbs(logp=logp, targets=targets), (enc, pred, hidden)


def joint(m: Model, enc: np.ndarray, pred: np.ndarray, targets=()) -> JointLogProbs:
    """log p over the vocabulary at every (frame, label-history) lattice position."""
    j, _ = _joint_with_tape(m, enc, pred, targets)
    return j


def joint_logits(m: Model, enc: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Pre-softmax logits [T, U+1, V]; the surgery probes compare these bitwise."""
    p = m.params
    hidden = np.tanh(
        (enc @ p[f"{JOINT}.enc_w"].T)[:, None, :]
        + (pred @ p[f"{JOINT}.pred_w"].T)[None, :, :]
        + p[f"{JOINT}.b"]
    )
    return hidden @ p[f"{JOINT}.out_w"].T + p[f"{JOINT}.out_b"]


def _joint_backward(m: Model, cache, dlogits: np.ndarray, grads: dict):
    enc, pred, hidden = cache
    p = m.params
    v, jd = dlogits.shape[-1], hidden.shape[-1]
    dl2 = dlogits.reshape(-1, v)
    grads[f"{JOINT}.out_w"] = dl2.T @ hidden.reshape(-1, jd)
    grads[f"{JOINT}.out_b"] = dl2.sum(axis=0)
    dpre = (dlogits @ p[f"{JOINT}.out_w"]) * (1.0 - hidden * hidden)
    grads[f"{JOINT}.b"] = dpre.sum(axis=(0, 1))
    denc_proj = dpre.sum(axis=1)
    dpred_proj = dpre.sum(axis=0)
    grads[f"{JOINT}.enc_w"] = denc_proj.T @ enc
    grads[f"{JOINT}.pred_w"] = dpred_proj.T @ pred
    denc = denc_proj @ p[f"{JOINT}.enc_w"]
    dpred = dpred_proj @ p[f"{JOINT}.pred_w"]
    return denc, dpred


# ---------------------------------------------------------------------------
# full forward/backward for one utterance
# ---------------------------------------------------------------------------

def utterance_logprobs(m: Model, feats: np.ndarray, targets) -> JointLogProbs:
    enc = encode(m, feats)
    pred = predict(m, targets)
    return joint(m, enc, pred, targets)


def utterance_loss(m: Model, feats: np.ndarray, targets) -> float:
    return forward_loss(utterance_logprobs(m, feats, targets)).loss


def utterance_loss_and_grads(m: Model, feats: np.ndarray, targets):
    """Loss plus the full parameter-gradient tree for one (features, target) pair."""
    enc, enc_tapes = _encode_with_tape(m, feats)
    pred, pred_tapes = _predict_with_tape(m, targets)
    j, joint_cache = _joint_with_tape(m, enc, pred, targets)
    lat = forward_loss(j)
    dlogits = logit_gradients(j, lat)
    grads: dict[str, np.ndarray] = {}
    denc, dpred = _joint_backward(m, joint_cache, dlogits, grads)
    _predict_backward(m, pred_tapes, dpred, grads)
    _encode_backward(m, enc_tapes, denc, grads)
    return lat.loss, grads


def with_params(m: Model, params: dict[str, np.ndarray]) -> Model:
    return replace(m, params=params)
