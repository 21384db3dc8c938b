"""Reverse-mode automatic differentiation on dense numpy arrays.

A :class:`Tensor` wraps a numpy array plus an optional gradient buffer.
Primitive operations execute eagerly and append an entry to the active
:class:`Tape` (one per thread, rebuilt on every forward pass).  Calling
:func:`backward` on a scalar loss walks the tape once in reverse execution
order, accumulating gradients into every reachable tensor that has
``requires_grad`` set, then consumes the tape.

float32 is the working precision; float64 tensors are supported everywhere
for gradient testing.  Binary ops require matching dtypes — silent mixed
precision is a bug class this library refuses to have.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)


class NumericsError(Exception):
    """Base class for numerics failures."""


class ShapeError(NumericsError):
    """Operands have incompatible shapes or ranks."""


class NonFiniteError(NumericsError):
    """A forward op produced NaN or Inf."""


class GradientError(NumericsError):
    """Gradient bookkeeping was violated (e.g. missing grad at step time)."""


# --------------------------------------------------------------------------
# Tape machinery
# --------------------------------------------------------------------------


class _Entry:
    __slots__ = ("out", "inputs", "fn")

    def __init__(self, out, inputs, fn):
        self.out = out
        self.inputs = inputs
        self.fn = fn


class Tape:
    """Ordered record of executed primitive ops.

    Execution order is a topological order by construction: an op can only
    consume tensors that already exist.  ``backward`` therefore walks the
    entry list exactly once, in reverse.
    """

    def __init__(self):
        self.entries: list[_Entry] = []

    def record(self, out: "Tensor", inputs: tuple, fn) -> None:
        self.entries.append(_Entry(out, inputs, fn))

    def __len__(self) -> int:
        return len(self.entries)

    def clear(self) -> None:
        self.entries.clear()


class _ThreadState(threading.local):
    def __init__(self):
        self.tape = Tape()
        self.grad_enabled = True
        self.finite_checks = True


_STATE = _ThreadState()


def active_tape() -> Tape:
    """The tape recording ops on the current thread."""
    return _STATE.tape


def reset_tape() -> None:
    _STATE.tape = Tape()


@contextmanager
def no_grad():
    """Disable tape recording (evaluation / finite-difference probes)."""
    prev = _STATE.grad_enabled
    _STATE.grad_enabled = False
    try:
        yield
    finally:
        _STATE.grad_enabled = prev


@contextmanager
def use_tape(tape: Tape):
    """Route recording to an explicit tape (independent tapes per thread)."""
    prev = _STATE.tape
    _STATE.tape = tape
    try:
        yield tape
    finally:
        _STATE.tape = prev


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/Inf detection after every forward op (default on)."""
    _STATE.finite_checks = bool(enabled)


def finite_checks_enabled() -> bool:
    return _STATE.finite_checks


def _check_finite(data: np.ndarray, op: str) -> None:
    if _STATE.finite_checks and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")


# --------------------------------------------------------------------------
# Tensor
# --------------------------------------------------------------------------


class Tensor:
    """Dense n-dimensional array participating in reverse-mode AD.

    ``data`` is treated as immutable once produced by an op.  In-place
    mutation is reserved for optimizers updating parameters between steps.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("wrap raw arrays, not Tensors")
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    # -- inspection ---------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_err()

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_wrap(other, self.dtype), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_wrap(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    # -- method forms of shape/reduction ops --------------------------------

    def reshape(self, shape) -> "Tensor":
        return reshape(self, shape)

    def transpose(self, axes) -> "Tensor":
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def _scalar_err():
    raise ShapeError("item() requires a single-element tensor")


def _wrap(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype), requires_grad=False)


def tensor(data, requires_grad: bool = False, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def zeros(shape, dtype=DEFAULT_DTYPE, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def init_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=DEFAULT_DTYPE,
                 gain: float = 1.0) -> Tensor:
    """Parameter init: uniform in +-gain/sqrt(fan_in)."""
    bound = gain / float(np.sqrt(fan_in))
    data = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return Tensor(data, requires_grad=True)


# --------------------------------------------------------------------------
# Op plumbing
# --------------------------------------------------------------------------


def _make(out_data: np.ndarray, inputs: tuple, fn, op: str) -> Tensor:
    _check_finite(out_data, op)
    req = _STATE.grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = req
    out.grad = None
    if req:
        _STATE.tape.record(out, inputs, fn)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach ``grad.shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.dtype != b.dtype:
        raise NumericsError(f"{op}: dtype mismatch {a.dtype} vs {b.dtype}")


# --------------------------------------------------------------------------
# Elementwise arithmetic
# --------------------------------------------------------------------------


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _wrap(b, a.dtype)
    if isinstance(b, Tensor):
        return _wrap(a, b.dtype), b
    raise TypeError("binary op needs at least one Tensor operand")


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _binary_check(a, b, "add")
    out = a.data + b.data

    def fn(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(g, b.shape) if b.requires_grad else None)

    return _make(out, (a, b), fn, "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _binary_check(a, b, "sub")
    out = a.data - b.data

    def fn(g):
        return (_unbroadcast(g, a.shape) if a.requires_grad else None,
                _unbroadcast(-g, b.shape) if b.requires_grad else None)

    return _make(out, (a, b), fn, "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _binary_check(a, b, "mul")
    out = a.data * b.data

    def fn(g):
        return (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                _unbroadcast(g * a.data, b.shape) if b.requires_grad else None)

    return _make(out, (a, b), fn, "mul")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


# --------------------------------------------------------------------------
# Linear algebra
# --------------------------------------------------------------------------


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Fused x[B,m] @ w[m,k] + b[k]; one tape entry instead of two."""
    _binary_check(x, w, "affine")
    _binary_check(x, b, "affine")
    if x.ndim != 2 or w.ndim != 2 or b.ndim != 1:
        raise ShapeError(f"affine expects x[B,m], w[m,k], b[k]; got {x.shape}, {w.shape}, {b.shape}")
    if x.shape[1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ShapeError(f"affine dims disagree: {x.shape} @ {w.shape} + {b.shape}")
    out = x.data @ w.data
    out += b.data

    def fn(g):
        return (g @ w.data.T if x.requires_grad else None,
                x.data.T @ g if w.requires_grad else None,
                g.sum(axis=0) if b.requires_grad else None)

    return _make(out, (x, w, b), fn, "affine")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if not isinstance(b, Tensor):
        raise TypeError("matmul expects two Tensors")
    _binary_check(a, b, "matmul")
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def fn(g):
        return (g @ b.data.T if a.requires_grad else None,
                a.data.T @ g if b.requires_grad else None)

    return _make(out, (a, b), fn, "matmul")


# --------------------------------------------------------------------------
# Activations
# --------------------------------------------------------------------------


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)

    def fn(g):
        return (g * (out * (1.0 - out)),)

    return _make(out, (x,), fn, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def fn(g):
        return (g * (1.0 - out * out),)

    return _make(out, (x,), fn, "tanh")


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def fn(g):
        return (g * (x.data > 0),)

    return _make(out, (x,), fn, "relu")


def _stable_sigmoid(d: np.ndarray) -> np.ndarray:
    # sigma(x) = (tanh(x/2) + 1) / 2: one ufunc pass, no overflow anywhere.
    out = np.tanh(d * 0.5)
    out += 1.0
    out *= 0.5
    return out


GATE_ACTS = ("sigmoid", "tanh", "relu", "identity")


def gate_blend(z: Tensor, h_prev: Tensor, act: str) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Fused cell-vertex update.

    Splits z[B,2n] into gate and candidate halves, applies sigmoid to the
    gate and ``act`` to the candidate, and blends convexly with the previous
    state: h = (1-c)*h_prev + c*h_tilde.  Returns the new state tensor plus
    the raw gate/candidate arrays for inspection (values only; gradients
    flow through the returned tensor).
    """
    if act not in GATE_ACTS:
        raise ValueError(f"act must be one of {GATE_ACTS}, got {act!r}")
    _binary_check(z, h_prev, "gate_blend")
    n = h_prev.shape[-1]
    if z.ndim != 2 or h_prev.ndim != 2 or z.shape != (h_prev.shape[0], 2 * n):
        raise ShapeError(f"gate_blend expects z[B,2n] with h_prev[B,n]; got {z.shape}, {h_prev.shape}")
    z1 = z.data[:, :n]
    z2 = z.data[:, n:]
    c = _stable_sigmoid(z1)
    if act == "sigmoid":
        ht = _stable_sigmoid(z2)
    elif act == "tanh":
        ht = np.tanh(z2)
    elif act == "relu":
        ht = np.maximum(z2, 0)
    else:
        ht = z2
    out = (1.0 - c) * h_prev.data + c * ht

    def fn(g):
        gz = None
        if z.requires_grad:
            gz = np.empty_like(z.data)
            gz[:, :n] = g * (ht - h_prev.data) * (c * (1.0 - c))
            gzh = g * c
            if act == "sigmoid":
                gzh = gzh * (ht * (1.0 - ht))
            elif act == "tanh":
                gzh = gzh * (1.0 - ht * ht)
            elif act == "relu":
                gzh = gzh * (z2 > 0)
            gz[:, n:] = gzh
        gh = g * (1.0 - c) if h_prev.requires_grad else None
        return (gz, gh)

    return _make(out, (z, h_prev), fn, "gate_blend"), c, ht


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilized softmax along ``axis``; outputs sum to 1 there."""
    d = x.data
    m = d.max(axis=axis, keepdims=True)
    e = np.exp(d - m)
    out = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _make(out, (x,), fn, "softmax")


# --------------------------------------------------------------------------
# Convolution (cross-correlation semantics, NCHW layout)
# --------------------------------------------------------------------------


def conv2d(x: Tensor, w: Tensor, b: Tensor | None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D convolution of x[N,C,H,W] with w[O,C,kh,kw] plus per-channel bias.

    Output spatial size is floor((H + 2p - k)/s) + 1 per axis.  Gradients
    flow to x, w and b.  im2col + one big matmul keeps this BLAS-bound.
    """
    _binary_check(x, w, "conv2d")
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects x[N,C,H,W] and w[O,C,kh,kw]")
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d channel mismatch: input {c}, kernel {cw}")
    if stride < 1:
        raise ShapeError("conv2d stride must be >= 1")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if kh > h + 2 * padding or kw > wd + 2 * padding or ho < 1 or wo < 1:
        raise ShapeError(f"conv2d kernel {kh}x{kw} does not fit padded input {h + 2 * padding}x{wd + 2 * padding}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = np.empty((n, c, kh, kw, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    cols2 = cols.reshape(n, c * kh * kw, ho * wo)
    w2 = w.data.reshape(o, c * kh * kw)
    out = np.matmul(w2[None], cols2)  # (N, O, Ho*Wo)
    if b is not None:
        _binary_check(x, b, "conv2d")
        if b.shape != (o,):
            raise ShapeError(f"conv2d bias must have shape ({o},), got {b.shape}")
        out += b.data[None, :, None]
    out = out.reshape(n, o, ho, wo)

    def fn(g):
        g2 = g.reshape(n, o, ho * wo)
        gx = None
        if x.requires_grad:
            colg = np.matmul(w2.T[None], g2).reshape(n, c, kh, kw, ho, wo)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += colg[:, :, i, j]
            gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        gw = None
        if w.requires_grad:
            gw = np.matmul(g2, cols2.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        gb = None
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        return (gx, gw) if b is None else (gx, gw, gb)

    inputs = (x, w) if b is None else (x, w, b)
    return _make(out, inputs, fn, "conv2d")


# --------------------------------------------------------------------------
# Loss
# --------------------------------------------------------------------------


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over the batch of -log softmax(logits)[label], via stable LSE."""
    if logits.ndim != 2:
        raise ShapeError(f"cross_entropy expects logits[N,K], got {logits.shape}")
    n, k = logits.shape
    if k < 2:
        raise ShapeError("cross_entropy needs at least 2 classes")
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(f"label out of range [0, {k})")
    d = logits.data
    m = d.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(d - m).sum(axis=1))
    picked = d[np.arange(n), labels]
    out = np.asarray((lse - picked).mean(), dtype=d.dtype)

    def fn(g):
        p = np.exp(d - lse[:, None])
        p[np.arange(n), labels] -= 1.0
        return (p * (g / n),)

    return _make(out, (logits,), fn, "cross_entropy")


# --------------------------------------------------------------------------
# Reductions and shape ops
# --------------------------------------------------------------------------


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, x.shape),)

    return _make(np.asarray(out), (x,), fn, "sum")


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    out = x.data.mean(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g / count, x.shape),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, x.shape),)

    return _make(np.asarray(out), (x,), fn, "mean")


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def fn(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), fn, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = x.data.transpose(axes)

    def fn(g):
        return (g.transpose(inv),)

    return _make(out, (x,), fn, "transpose")


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat of zero tensors")
    for t in tensors[1:]:
        _binary_check(tensors[0], t, "concat")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def fn(g):
        pieces = np.split(g, splits, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(pieces, tensors))

    return _make(out, tuple(tensors), fn, "concat")


def stack(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("stack of zero tensors")
    out = np.stack([t.data for t in tensors], axis=axis)

    def fn(g):
        pieces = np.moveaxis(g, axis, 0)
        return tuple(pieces[i] if t.requires_grad else None for i, t in enumerate(tensors))

    return _make(out, tuple(tensors), fn, "stack")


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` elements from ``start`` along ``axis``."""
    if start < 0 or start + length > x.shape[axis]:
        raise ShapeError(f"narrow [{start}:{start + length}] outside axis of extent {x.shape[axis]}")
    idx = tuple(slice(None) if d != axis else slice(start, start + length) for d in range(x.ndim))
    out = x.data[idx]

    def fn(g):
        full = np.zeros(x.shape, dtype=x.dtype)
        full[idx] = g
        return (full,)

    return _make(out, (x,), fn, "narrow")


def pad_hw(x: Tensor, pad_h: int, pad_w: int) -> Tensor:
    """Zero-pad the bottom/right of the two trailing spatial axes of NCHW."""
    if pad_h == 0 and pad_w == 0:
        return x
    out = np.pad(x.data, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)))

    def fn(g):
        return (g[:, :, :x.shape[2], :x.shape[3]],)

    return _make(out, (x,), fn, "pad_hw")


# --------------------------------------------------------------------------
# Backward pass
# --------------------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor.

    The loss must be a scalar recorded on the current tape.  The tape is
    consumed: entries are dropped after the single reverse sweep.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
    tape = _STATE.tape
    loss.grad = np.ones_like(loss.data)
    try:
        for entry in reversed(tape.entries):
            g = entry.out.grad
            if g is None:
                continue
            grads = entry.fn(g)
            for t, gi in zip(entry.inputs, grads):
                if gi is None or not t.requires_grad:
                    continue
                if gi.dtype != t.dtype:
                    gi = gi.astype(t.dtype)
                # Non-inplace accumulation: first assignment may alias the
                # upstream grad, so never mutate an accumulated buffer.
                t.grad = gi if t.grad is None else t.grad + gi
    finally:
        tape.clear()


def zero_grads(tensors) -> None:
    """Give every tensor a zero grad buffer (dead parameters stay zero)."""
    for t in tensors:
        t.grad = np.zeros_like(t.data)
