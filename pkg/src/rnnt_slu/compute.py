"""Dense-array layer primitives with explicit tapes and manual backward passes.

Every forward returns its output together with a tape caching the
intermediates its backward needs. A tape may be consumed exactly once.
Arrays are float32 in training builds; passing float64 arrays switches the
whole stack to 64-bit, which the finite-difference checks rely on.

All parameters are initialized uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]
from a caller-provided seeded generator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible; message names both shapes."""


class NonFiniteInput(ValueError):
    pass


class TapeConsumed(RuntimeError):
    """backward() was called twice on the same tape."""


def uniform_init(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function; clipping keeps exp in range (exact to ~1e-26 at the clip)."""
    return 1.0 / (1.0 + np.exp(np.maximum(np.minimum(x, 60.0), -60.0) * -1.0))


class _Tape:
    __slots__ = ("_consumed",)

    def __init__(self):
        self._consumed = False

    def consume(self):
        if self._consumed:
            raise TapeConsumed(f"{type(self).__name__} already consumed by a backward pass")
        self._consumed = True


# ---------------------------------------------------------------------------
# affine: y = x @ W.T + b
# ---------------------------------------------------------------------------

class AffineTape(_Tape):
    __slots__ = ("x", "weight")

    def __init__(self, x, weight):
        super().__init__()
        self.x = x
        self.weight = weight


def affine_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Row-wise affine map y = x W^T + b; x is [n, in], W is [out, in], b is [out]."""
    if x.shape[-1] != weight.shape[1] or weight.shape[0] != bias.shape[0]:
        raise ShapeMismatch(
            f"affine shapes disagree: x {x.shape}, weight {weight.shape}, bias {bias.shape}"
        )
    y = x @ weight.T + bias
    return y, AffineTape(x, weight)


def affine_backward(tape: AffineTape, dy: np.ndarray):
    """Gradients (dx, dweight, dbias) for the cached affine forward."""
    tape.consume()
    x, weight = tape.x, tape.weight
    if dy.shape[-1] != weight.shape[0]:
        raise ShapeMismatch(f"upstream {dy.shape} does not match output width {weight.shape[0]}")
    dx = dy @ weight
    dweight = dy.reshape(-1, weight.shape[0]).T @ x.reshape(-1, weight.shape[1])
    dbias = dy.reshape(-1, weight.shape[0]).sum(axis=0)
    return dx, dweight, dbias


# ---------------------------------------------------------------------------
# embedding lookup
# ---------------------------------------------------------------------------

class EmbeddingTape(_Tape):
    __slots__ = ("ids", "table_shape", "dtype")

    def __init__(self, ids, table_shape, dtype):
        super().__init__()
        self.ids = ids
        self.table_shape = table_shape
        self.dtype = dtype


def embedding_forward(ids, table: np.ndarray):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeMismatch(f"embedding ids outside table of {table.shape[0]} rows")
    rows = table[ids]
    return rows, EmbeddingTape(ids, table.shape, table.dtype)


def embedding_backward(tape: EmbeddingTape, drows: np.ndarray) -> np.ndarray:
    tape.consume()
    dtable = np.zeros(tape.table_shape, dtype=tape.dtype)
    np.add.at(dtable, tape.ids, drows)
    return dtable


# ---------------------------------------------------------------------------
# LSTM cell and sequence scan
# ---------------------------------------------------------------------------

@dataclass
class LstmParams:
    """Gate order along the leading axis of w_ih/w_hh/b is [input, forget, cell, output]."""

    w_ih: np.ndarray  # [4H, in]
    w_hh: np.ndarray  # [4H, H]
    b: np.ndarray     # [4H]

    @property
    def hidden_size(self) -> int:
        return self.w_hh.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_ih.shape[1]


@dataclass
class LstmGrads:
    w_ih: np.ndarray
    w_hh: np.ndarray
    b: np.ndarray


def init_lstm(rng: np.random.Generator, input_size: int, hidden_size: int, dtype=np.float32) -> LstmParams:
    return LstmParams(
        w_ih=uniform_init(rng, (4 * hidden_size, input_size), input_size, dtype),
        w_hh=uniform_init(rng, (4 * hidden_size, hidden_size), hidden_size, dtype),
        b=uniform_init(rng, (4 * hidden_size,), hidden_size, dtype),
    )


def _lstm_step(xproj_t, h_prev, c_prev, w_hh, b):
    """One gated update from a precomputed input projection. Returns (h, c, acts, tanh_c)."""
    h = w_hh.shape[1]
    pre = xproj_t + h_prev @ w_hh.T + b
    i = sigmoid(pre[..., :h])
    f = sigmoid(pre[..., h:2 * h])
    g = np.tanh(pre[..., 2 * h:3 * h])
    o = sigmoid(pre[..., 3 * h:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    return o * tc, c, (i, f, g, o), tc


def _lstm_step_backward(dh, dc_in, acts, tc, c_prev, out_dpre=None):
    """Invert one gated update. Returns (dpre [.,4H], dc_prev)."""
    i, f, g, o = acts
    hsz = tc.shape[-1]
    do = dh * tc
    dc = dc_in + dh * o * (1.0 - tc * tc)
    if out_dpre is None:
        out_dpre = np.empty(dh.shape[:-1] + (4 * hsz,), dtype=dh.dtype)
    out_dpre[..., :hsz] = dc * g * i * (1.0 - i)
    out_dpre[..., hsz:2 * hsz] = dc * c_prev * f * (1.0 - f)
    out_dpre[..., 2 * hsz:3 * hsz] = dc * i * (1.0 - g * g)
    out_dpre[..., 3 * hsz:] = do * o * (1.0 - o)
    return out_dpre, dc * f


class LstmCellTape(_Tape):
    __slots__ = ("x", "h_prev", "c_prev", "acts", "tc", "params")

    def __init__(self, x, h_prev, c_prev, acts, tc, params):
        super().__init__()
        self.x = x
        self.h_prev = h_prev
        self.c_prev = c_prev
        self.acts = acts
        self.tc = tc
        self.params = params


def lstm_cell_forward(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: LstmParams):
    """Single gated recurrent update; returns (h_t, c_t, tape)."""
    hsz = params.hidden_size
    if h_prev.shape[-1] != hsz or c_prev.shape[-1] != hsz:
        raise ShapeMismatch(
            f"state widths {h_prev.shape}/{c_prev.shape} do not match hidden size {hsz}"
        )
    if x.shape[-1] != params.input_size:
        raise ShapeMismatch(f"input {x.shape} does not match input size {params.input_size}")
    for name, arr in (("x", x), ("h_prev", h_prev), ("c_prev", c_prev)):
        if not np.isfinite(arr).all():
            raise NonFiniteInput(f"non-finite values in {name}")
    xproj = x @ params.w_ih.T
    h, c, acts, tc = _lstm_step(xproj, h_prev, c_prev, params.w_hh, params.b)
    return h, c, LstmCellTape(x, h_prev, c_prev, acts, tc, params)


def lstm_cell_backward(tape: LstmCellTape, dh: np.ndarray, dc: np.ndarray):
    """Gradients (dx, dh_prev, dc_prev, LstmGrads) for one cached cell update."""
    tape.consume()
    p = tape.params
    dpre, dc_prev = _lstm_step_backward(dh, dc, tape.acts, tape.tc, tape.c_prev)
    dh_prev = dpre @ p.w_hh
    dpre2 = dpre.reshape(-1, dpre.shape[-1])
    x2 = tape.x.reshape(-1, p.input_size)
    h2 = tape.h_prev.reshape(-1, p.hidden_size)
    grads = LstmGrads(w_ih=dpre2.T @ x2, w_hh=dpre2.T @ h2, b=dpre2.sum(axis=0))
    dx = dpre @ p.w_ih
    return dx, dh_prev, dc_prev, grads


class _ScanTape(_Tape):
    """Caches for a stack of independently-parameterized sequence scans."""

    __slots__ = ("xs", "hs_prev", "cs_prev", "acts", "tcs", "w_ih", "w_hh", "w_hh_t")

    def __init__(self, xs, hs_prev, cs_prev, acts, tcs, w_ih, w_hh, w_hh_t):
        super().__init__()
        self.xs = xs             # [B, T, in]
        self.hs_prev = hs_prev   # [B, T, H], step t holds h_{t-1}
        self.cs_prev = cs_prev
        self.acts = acts         # [B, T, 4H] post-activation gates
        self.tcs = tcs           # [B, T, H] tanh(c_t)
        self.w_ih = w_ih         # [B, 4H, in]
        self.w_hh = w_hh         # [B, 4H, H]
        self.w_hh_t = w_hh_t


def _scan_forward(xs, w_ih, w_hh, b):
    """Lockstep scan of B sequences, each with its own parameters.

    xs is [B, T, in]; weights are stacked [B, ...]. The input projections for
    all steps are one batched matmul; only the recurrence steps in Python.
    """
    nseq, steps, _ = xs.shape
    hsz = w_hh.shape[2]
    dtype = xs.dtype
    xproj = np.matmul(xs, w_ih.transpose(0, 2, 1))
    xproj += b[:, None, :]
    w_hh_t = np.ascontiguousarray(w_hh.transpose(0, 2, 1))
    hs = np.empty((nseq, steps, hsz), dtype=dtype)
    hs_prev = np.empty_like(hs)
    cs_prev = np.empty_like(hs)
    acts = np.empty((nseq, steps, 4 * hsz), dtype=dtype)
    tcs = np.empty_like(hs)
    h = np.zeros((nseq, hsz), dtype=dtype)
    c = np.zeros((nseq, hsz), dtype=dtype)
    for t in range(steps):
        hs_prev[:, t] = h
        cs_prev[:, t] = c
        pre = xproj[:, t] + np.matmul(h[:, None, :], w_hh_t)[:, 0]
        a = acts[:, t]
        a[:, :2 * hsz] = sigmoid(pre[:, :2 * hsz])      # input and forget gates
        a[:, 2 * hsz:3 * hsz] = np.tanh(pre[:, 2 * hsz:3 * hsz])
        a[:, 3 * hsz:] = sigmoid(pre[:, 3 * hsz:])
        c = a[:, hsz:2 * hsz] * c + a[:, :hsz] * a[:, 2 * hsz:3 * hsz]
        tc = np.tanh(c)
        h = a[:, 3 * hsz:] * tc
        tcs[:, t] = tc
        hs[:, t] = h
    return hs, _ScanTape(xs, hs_prev, cs_prev, acts, tcs, w_ih, w_hh, w_hh_t)


def _scan_backward(tape: _ScanTape, dhs):
    """Gradients for a stacked scan: (dxs [B,T,in], dw_ih, dw_hh, db)."""
    tape.consume()
    nseq, steps, hsz = dhs.shape
    dpre_all = np.empty((nseq, steps, 4 * hsz), dtype=dhs.dtype)
    dh_carry = np.zeros((nseq, hsz), dtype=dhs.dtype)
    dc_carry = np.zeros((nseq, hsz), dtype=dhs.dtype)
    for t in range(steps - 1, -1, -1):
        a = tape.acts[:, t]
        gates = (a[:, :hsz], a[:, hsz:2 * hsz], a[:, 2 * hsz:3 * hsz], a[:, 3 * hsz:])
        dpre, dc_carry = _lstm_step_backward(
            dhs[:, t] + dh_carry, dc_carry, gates, tape.tcs[:, t], tape.cs_prev[:, t],
            out_dpre=dpre_all[:, t])
        dh_carry = np.matmul(dpre[:, None, :], tape.w_hh)[:, 0]
    dpre_t = dpre_all.transpose(0, 2, 1)
    dw_ih = np.matmul(dpre_t, tape.xs)
    dw_hh = np.matmul(dpre_t, tape.hs_prev)
    db = dpre_all.sum(axis=1)
    dxs = np.matmul(dpre_all, tape.w_ih)
    return dxs, dw_ih, dw_hh, db


class LstmSequenceTape(_Tape):
    __slots__ = ("scan",)

    def __init__(self, scan):
        super().__init__()
        self.scan = scan


def lstm_sequence_forward(xs: np.ndarray, params: LstmParams):
    """Scan a whole sequence from zero initial state; returns (hs [T, H], tape)."""
    if xs.ndim != 2 or xs.shape[1] != params.input_size:
        raise ShapeMismatch(f"sequence input {xs.shape} does not match input size {params.input_size}")
    if not np.isfinite(xs).all():
        raise NonFiniteInput("non-finite values in sequence input")
    hs, scan = _scan_forward(xs[None], params.w_ih[None], params.w_hh[None], params.b[None])
    return hs[0], LstmSequenceTape(scan)


def lstm_sequence_backward(tape: LstmSequenceTape, dhs: np.ndarray):
    """Gradients (dxs, LstmGrads) for a cached sequence scan."""
    tape.consume()
    dxs, dw_ih, dw_hh, db = _scan_backward(tape.scan, dhs[None])
    return dxs[0], LstmGrads(w_ih=dw_ih[0], w_hh=dw_hh[0], b=db[0])


class BidirectionalTape(_Tape):
    __slots__ = ("scan",)

    def __init__(self, scan):
        super().__init__()
        self.scan = scan


def lstm_bidirectional_forward(xs: np.ndarray, fwd: LstmParams, bwd: LstmParams):
    """One bidirectional layer: both directions scanned in lockstep.

    Returns ([T, 2H] forward/backward concatenation, tape).
    """
    if xs.ndim != 2 or xs.shape[1] != fwd.input_size:
        raise ShapeMismatch(f"sequence input {xs.shape} does not match input size {fwd.input_size}")
    if not np.isfinite(xs).all():
        raise NonFiniteInput("non-finite values in sequence input")
    stacked = np.stack([xs, xs[::-1]])
    w_ih = np.stack([fwd.w_ih, bwd.w_ih])
    w_hh = np.stack([fwd.w_hh, bwd.w_hh])
    b = np.stack([fwd.b, bwd.b])
    hs, scan = _scan_forward(stacked, w_ih, w_hh, b)
    out = np.concatenate([hs[0], hs[1][::-1]], axis=1)
    return out, BidirectionalTape(scan)


def lstm_bidirectional_backward(tape: BidirectionalTape, dout: np.ndarray):
    """Gradients (dxs, fwd LstmGrads, bwd LstmGrads) for a bidirectional layer."""
    tape.consume()
    hsz = tape.scan.w_hh.shape[2]
    dhs = np.stack([dout[:, :hsz], dout[:, hsz:][::-1]])
    dxs, dw_ih, dw_hh, db = _scan_backward(tape.scan, dhs)
    grads_f = LstmGrads(w_ih=dw_ih[0], w_hh=dw_hh[0], b=db[0])
    grads_b = LstmGrads(w_ih=dw_ih[1], w_hh=dw_hh[1], b=db[1])
    return dxs[0] + dxs[1][::-1], grads_f, grads_b


# ---------------------------------------------------------------------------
# log-softmax and tanh
# ---------------------------------------------------------------------------

def log_softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted log-softmax along `axis`; each slice satisfies logsumexp(out) = 0."""
    zmax = z.max(axis=axis, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


class LogSoftmaxTape(_Tape):
    __slots__ = ("out", "axis")

    def __init__(self, out, axis):
        super().__init__()
        self.out = out
        self.axis = axis


def log_softmax_forward(z: np.ndarray, axis: int = -1):
    out = log_softmax(z, axis=axis)
    return out, LogSoftmaxTape(out, axis)


def log_softmax_backward(tape: LogSoftmaxTape, dout: np.ndarray) -> np.ndarray:
    tape.consume()
    return dout - np.exp(tape.out) * dout.sum(axis=tape.axis, keepdims=True)


class TanhTape(_Tape):
    __slots__ = ("out",)

    def __init__(self, out):
        super().__init__()
        self.out = out


def tanh_forward(z: np.ndarray):
    out = np.tanh(z)
    return out, TanhTape(out)


def tanh_backward(tape: TanhTape, dout: np.ndarray) -> np.ndarray:
    tape.consume()
    return dout * (1.0 - tape.out * tape.out)


# ---------------------------------------------------------------------------
# finite differences (verification substrate)
# ---------------------------------------------------------------------------

def finite_difference(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar f with respect to array x.

    Reliable only in 64-bit; callers pass float64 arrays.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = grad.reshape(-1)
    xflat = x.reshape(-1)
    for k in range(xflat.size):
        orig = xflat[k]
        xflat[k] = orig + step
        fp = f(x)
        xflat[k] = orig - step
        fm = f(x)
        xflat[k] = orig
        flat[k] = (fp - fm) / (2.0 * step)
    return grad
