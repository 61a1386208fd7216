"""Dense float tensors with reverse-mode differentiation.

A single module-level tape records every primitive executed while gradient
tracking is on.  ``backward`` on a scalar replays the tape in reverse
(execution order is already topological), accumulates gradients into every
leaf that requires them, and then marks the tape consumed.  Tensors are
numpy arrays under the hood; float32 is the working precision for training,
float64 exists for gradient verification.
"""

from __future__ import annotations

import numpy as np

float32 = np.float32
float64 = np.float64
DEFAULT_DTYPE = float32


class AutodiffError(RuntimeError):
    pass


class TapeConsumedError(AutodiffError):
    pass


class _Tape:
    __slots__ = ("entries", "consumed")

    def __init__(self):
        self.entries = []
        self.consumed = False


_tape = _Tape()
_grad_enabled = True


class no_grad:
    """Context manager that suspends tape recording (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def reset_tape():
    """Discard any recorded-but-unused entries and start a fresh tape."""
    global _tape
    _tape = _Tape()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_entry", "_tape")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._entry = None
        self._tape = None

    # -- introspection ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    # -- operators ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def __pow__(self, p):
        return power(self, p)

    # -- method sugar for the common unaries/reductions --------------------
    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def max(self, axis, keepdims=False):
        return max_(self, axis, keepdims)

    def softmax(self, axis):
        return softmax(self, axis)

    def backward(self):
        backward(self)


def astensor(data, requires_grad=False, dtype=DEFAULT_DTYPE):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


class Parameter:
    """A named, trainable tensor; names are dotted paths unique per model."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data, dtype=DEFAULT_DTYPE):
        self.name = name
        self.tensor = Tensor(np.asarray(data, dtype=dtype), requires_grad=True)

    @property
    def data(self):
        return self.tensor.data

    @data.setter
    def data(self, value):
        self.tensor.data = value

    @property
    def grad(self):
        return self.tensor.grad

    def zero_grad(self):
        self.tensor.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


# -- tape machinery ---------------------------------------------------------

def _coerce(x, like):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _record(out, inputs, backward_fn):
    """Attach ``out`` to the active tape if any input is being tracked."""
    if not _grad_enabled:
        return out
    if not any(t.requires_grad for t in inputs):
        return out
    out.requires_grad = True
    out._entry = (inputs, backward_fn)
    out._tape = _tape
    _tape.entries.append(out)
    return out


def _unbroadcast(g, shape):
    """Reduce gradient ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(loss):
    """Populate ``grad`` on every tracked leaf reachable from ``loss``.

    Repeated rounds of forward+backward accumulate into leaf grads; replaying
    the same tape twice is an error.
    """
    global _tape
    if not isinstance(loss, Tensor):
        raise AutodiffError("backward expects a Tensor")
    if loss.data.ndim != 0:
        raise AutodiffError(f"backward expects a scalar, got shape {loss.shape}")
    if loss._tape is None:
        raise AutodiffError("loss was not produced by recorded primitives")
    tape = loss._tape
    if tape.consumed:
        raise TapeConsumedError("tape already consumed")
    loss.grad = np.ones((), dtype=loss.dtype)
    for out in reversed(tape.entries):
        if out.grad is None:
            out._entry = None
            continue
        inputs, fn = out._entry
        grads = fn(out.grad)
        for inp, g in zip(inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            if inp.grad is None:
                inp.grad = g.astype(inp.dtype, copy=True) if g.dtype != inp.dtype else np.array(g, copy=True)
            else:
                inp.grad += g
        # intermediate values never keep their gradient past the walk
        out.grad = None
        out._entry = None
    tape.consumed = True
    tape.entries = []
    if _tape is tape:
        _tape = _Tape()


# -- elementwise arithmetic --------------------------------------------------

def add(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _coerce(b, a)
    out = Tensor(a.data + b.data)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), bwd)


def sub(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _coerce(b, a)
    out = Tensor(a.data - b.data)

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), bwd)


def mul(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _coerce(b, a)
    out = Tensor(a.data * b.data)

    def bwd(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def div(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = _coerce(b, a)
    out = Tensor(a.data / b.data)

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


def neg(a):
    out = Tensor(-a.data)

    def bwd(g):
        return (-g,)

    return _record(out, (a,), bwd)


# -- matmul ------------------------------------------------------------------

def matmul(a, b):
    """Matrix product with numpy broadcasting on leading axes (operands >= 2-D)."""
    if a.ndim < 2 or b.ndim < 2:
        raise AutodiffError("matmul operands must be at least 2-D")
    if a.shape[-1] != b.shape[-2]:
        raise AutodiffError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        ga = _unbroadcast(g @ b.data.swapaxes(-1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(a.data.swapaxes(-1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), bwd)


# -- shape ops -----------------------------------------------------------------

def reshape(a, shape):
    out = Tensor(a.data.reshape(shape))
    old = a.shape

    def bwd(g):
        return (g.reshape(old),)

    return _record(out, (a,), bwd)


def transpose(a, axes=None):
    out = Tensor(a.data.transpose(axes))
    inv = None if axes is None else tuple(np.argsort(axes))

    def bwd(g):
        return (g.transpose(inv),)

    return _record(out, (a,), bwd)


def swapaxes(a, ax1, ax2):
    out = Tensor(a.data.swapaxes(ax1, ax2))

    def bwd(g):
        return (g.swapaxes(ax1, ax2),)

    return _record(out, (a,), bwd)


def concat(tensors, axis=0):
    tensors = list(tensors)
    if not tensors:
        raise AutodiffError("concat of an empty list")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), bwd)


def getitem(a, key):
    out = Tensor(a.data[key])
    shape = a.shape

    def bwd(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gx[key] += g
        return (gx,)

    return _record(out, (a,), bwd)


# -- unaries -------------------------------------------------------------------

def tanh(a):
    y = np.tanh(a.data)
    out = Tensor(y)

    def bwd(g):
        return (g * (1.0 - y * y),)

    return _record(out, (a,), bwd)


def sigmoid(a):
    # 1/(1+exp(-x)) computed in two branches so large |x| cannot overflow
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y)

    def bwd(g):
        return (g * y * (1.0 - y),)

    return _record(out, (a,), bwd)


def relu(a):
    out = Tensor(np.maximum(a.data, 0))
    mask = a.data > 0

    def bwd(g):
        return (g * mask,)

    return _record(out, (a,), bwd)


def exp(a):
    y = np.exp(a.data)
    out = Tensor(y)

    def bwd(g):
        return (g * y,)

    return _record(out, (a,), bwd)


def log(a):
    out = Tensor(np.log(a.data))
    x = a.data

    def bwd(g):
        return (g / x,)

    return _record(out, (a,), bwd)


def sqrt(a):
    y = np.sqrt(a.data)
    out = Tensor(y)

    def bwd(g):
        return (g / (2.0 * y),)

    return _record(out, (a,), bwd)


def absolute(a):
    out = Tensor(np.abs(a.data))
    s = np.sign(a.data)

    def bwd(g):
        return (g * s,)

    return _record(out, (a,), bwd)


def sin(a):
    out = Tensor(np.sin(a.data))
    x = a.data

    def bwd(g):
        return (g * np.cos(x),)

    return _record(out, (a,), bwd)


def power(a, p):
    """Elementwise a**p for a python-float exponent."""
    x = a.data
    out = Tensor(x ** p)

    def bwd(g):
        return (g * p * x ** (p - 1.0),)

    return _record(out, (a,), bwd)


def clip(a, lo=None, hi=None):
    """Clamp; gradient passes only through strictly interior entries."""
    out = Tensor(np.clip(a.data, lo, hi))
    mask = np.ones(a.shape, dtype=bool)
    if lo is not None:
        mask &= a.data > lo
    if hi is not None:
        mask &= a.data < hi

    def bwd(g):
        return (g * mask,)

    return _record(out, (a,), bwd)


# -- reductions ----------------------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))
    shape = a.shape

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(g.dtype, copy=True),)

    return _record(out, (a,), bwd)


def mean(a, axis=None, keepdims=False):
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    shape = a.shape
    n = a.data.size if axis is None else np.prod([shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])

    def bwd(g):
        if axis is None:
            gg = np.broadcast_to(g, shape)
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            gg = np.broadcast_to(gg, shape)
        return ((gg / n).astype(g.dtype, copy=False),)

    return _record(out, (a,), bwd)


def max_(a, axis, keepdims=False):
    """Max over one axis; gradient routes to the first argmax per slice."""
    y = a.data.max(axis=axis, keepdims=keepdims)
    out = Tensor(y)
    idx = np.expand_dims(a.data.argmax(axis=axis), axis)
    shape = a.shape

    def bwd(g):
        gx = np.zeros(shape, dtype=g.dtype)
        gg = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, idx, gg, axis=axis)
        return (gx,)

    return _record(out, (a,), bwd)


# -- softmax / loss ------------------------------------------------------------

def softmax(a, axis):
    """Max-shifted softmax along ``axis``; slices sum to one."""
    if not -a.ndim <= axis < a.ndim:
        raise AutodiffError(f"softmax axis {axis} out of range for rank {a.ndim}")
    if not np.all(np.isfinite(a.data)):
        raise AutodiffError("softmax input contains non-finite values")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def bwd(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return _record(out, (a,), bwd)


def cross_entropy(probs, labels, class_weights=None, row_sum_tol=1e-5):
    """Mean negative log-likelihood of ``labels`` under ``probs`` (batch x classes).

    Probabilities exactly 0 at the label index are clamped to 1e-12 rather
    than treated as an error.  ``class_weights`` (one per class) switches to
    the weighted mean sum(w_i * nll_i) / sum(w_i).
    """
    if probs.ndim != 2:
        raise AutodiffError("cross_entropy expects a (batch, classes) matrix")
    labels = np.asarray(labels)
    if labels.shape != (probs.shape[0],):
        raise AutodiffError("one label per batch row required")
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise AutodiffError("label index out of range")
    rows = probs.data.sum(axis=1)
    if np.abs(rows - 1.0).max() > row_sum_tol:
        raise AutodiffError("cross_entropy rows must sum to 1")
    n = probs.shape[0]
    picked = np.clip(probs.data[np.arange(n), labels], 1e-12, None)
    if class_weights is None:
        w = np.ones(n, dtype=probs.dtype)
    else:
        w = np.asarray(class_weights, dtype=probs.dtype)[labels]
    wsum = w.sum()
    out = Tensor(np.asarray(-(w * np.log(picked)).sum() / wsum, dtype=probs.dtype))

    def bwd(g):
        gp = np.zeros(probs.shape, dtype=probs.dtype)
        gp[np.arange(n), labels] = -w / (picked * wsum)
        return (gp * g,)

    return _record(out, (probs,), bwd)


# -- convolution / pooling ------------------------------------------------------

def conv1d(x, w, b=None, stride=1, dilation=1):
    """1-D convolution: x (B,C,T) * w (O,C,K) -> (B,O,T'), valid extent only."""
    B, C, T = x.shape
    O, Cw, K = w.shape
    if Cw != C:
        raise AutodiffError(f"conv1d channel mismatch: {C} vs {Cw}")
    span = (K - 1) * dilation + 1
    if T < span:
        raise AutodiffError(f"conv1d input length {T} shorter than kernel span {span}")
    OT = (T - span) // stride + 1
    sB, sC, sT = x.data.strides
    view = np.lib.stride_tricks.as_strided(
        x.data, shape=(B, C, K, OT), strides=(sB, sC, sT * dilation, sT * stride)
    )
    cols = view.reshape(B, C * K, OT)  # copies
    wm = w.data.reshape(O, C * K)
    y = wm @ cols
    if b is not None:
        y = y + b.data.reshape(1, O, 1)
    out = Tensor(y)

    def bwd(g):
        gx = gw = gb = None
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2))
        if w.requires_grad:
            gw = np.einsum("bot,bct->oc", g, cols, optimize=True).reshape(O, C, K)
        if x.requires_grad:
            gcols = (wm.T @ g).reshape(B, C, K, OT)
            gx = np.zeros((B, C, T), dtype=g.dtype)
            for k in range(K):
                off = k * dilation
                gx[:, :, off : off + stride * OT : stride] += gcols[:, :, k, :]
        return (gx, gw) if b is None else (gx, gw, gb)

    inputs = (x, w) if b is None else (x, w, b)
    return _record(out, inputs, bwd)


def conv2d(x, w, b=None, padding=(0, 0)):
    """2-D convolution, stride 1, explicit zero padding: x (B,C,H,W) * w (O,C,KH,KW)."""
    B, C, H, W = x.shape
    O, Cw, KH, KW = w.shape
    if Cw != C:
        raise AutodiffError(f"conv2d channel mismatch: {C} vs {Cw}")
    ph, pw = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    Hp, Wp = H + 2 * ph, W + 2 * pw
    OH, OW = Hp - KH + 1, Wp - KW + 1
    if OH <= 0 or OW <= 0:
        raise AutodiffError("conv2d kernel larger than padded input")
    sB, sC, sH, sW = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(B, C, KH, KW, OH, OW), strides=(sB, sC, sH, sW, sH, sW)
    )
    cols = view.reshape(B, C * KH * KW, OH * OW)
    wm = w.data.reshape(O, C * KH * KW)
    y = (wm @ cols).reshape(B, O, OH, OW)
    if b is not None:
        y = y + b.data.reshape(1, O, 1, 1)
    out = Tensor(y)

    def bwd(g):
        gx = gw = gb = None
        g2 = g.reshape(B, O, OH * OW)
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if w.requires_grad:
            gw = np.einsum("bot,bct->oc", g2, cols, optimize=True).reshape(O, C, KH, KW)
        if x.requires_grad:
            gcols = (wm.T @ g2).reshape(B, C, KH, KW, OH, OW)
            gxp = np.zeros((B, C, Hp, Wp), dtype=g.dtype)
            for u in range(KH):
                for v in range(KW):
                    gxp[:, :, u : u + OH, v : v + OW] += gcols[:, :, u, v]
            gx = gxp[:, :, ph : ph + H, pw : pw + W] if (ph or pw) else gxp
        return (gx, gw) if b is None else (gx, gw, gb)

    inputs = (x, w) if b is None else (x, w, b)
    return _record(out, inputs, bwd)


def maxpool2d(x, kernel=(2, 2)):
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""
    B, C, H, W = x.shape
    kh, kw = kernel
    OH, OW = H // kh, W // kw
    if OH == 0 or OW == 0:
        raise AutodiffError(f"maxpool2d window {kernel} larger than input {(H, W)}")
    xc = x.data[:, :, : OH * kh, : OW * kw]
    win = xc.reshape(B, C, OH, kh, OW, kw).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, OH, OW, kh * kw)
    idx = win.argmax(axis=-1)
    y = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    out = Tensor(y)

    def bwd(g):
        gwin = np.zeros((B, C, OH, OW, kh * kw), dtype=g.dtype)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = np.zeros((B, C, H, W), dtype=g.dtype)
        gx[:, :, : OH * kh, : OW * kw] = (
            gwin.reshape(B, C, OH, OW, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, OH * kh, OW * kw)
        )
        return (gx,)

    return _record(out, (x,), bwd)


# -- gather / normalization ------------------------------------------------------

def embedding(weight, ids, frozen_row=None):
    """Row gather: weight (V,D) indexed by integer ids (any shape).

    ``frozen_row`` marks one row (the padding row) whose gradient is pinned
    to zero so it never trains away from its initial value.
    """
    ids = np.asarray(ids)
    if ids.min() < 0 or ids.max() >= weight.shape[0]:
        raise AutodiffError("embedding id out of range")
    out = Tensor(weight.data[ids])

    def bwd(g):
        gw = np.zeros(weight.shape, dtype=g.dtype)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        if frozen_row is not None:
            gw[frozen_row] = 0.0
        return (gw,)

    return _record(out, (weight,), bwd)


def batch_norm(x, gamma, beta, running_mean, running_var, training, momentum=0.9, eps=1e-5):
    """Batch normalization over the batch axis of a (B, F) matrix.

    Training mode normalizes with the batch's population statistics and
    folds them into the running buffers (kept as plain tensors, mutated in
    place); evaluation mode normalizes with the running buffers.
    """
    if x.ndim != 2:
        raise AutodiffError("batch_norm expects a (batch, features) matrix")
    if training:
        mu = x.data.mean(axis=0)
        var = x.data.var(axis=0)
        running_mean.data[...] = momentum * running_mean.data + (1.0 - momentum) * mu
        running_var.data[...] = momentum * running_var.data + (1.0 - momentum) * var
    else:
        mu = running_mean.data
        var = running_var.data
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(gamma.data * xhat + beta.data)
    B = x.shape[0]

    def bwd(g):
        gx = ggamma = gbeta = None
        if gamma.requires_grad:
            ggamma = (g * xhat).sum(axis=0)
        if beta.requires_grad:
            gbeta = g.sum(axis=0)
        if x.requires_grad:
            gxhat = g * gamma.data
            if training:
                gx = inv / B * (B * gxhat - gxhat.sum(axis=0) - xhat * (gxhat * xhat).sum(axis=0))
            else:
                gx = gxhat * inv
        return (gx, ggamma, gbeta)

    return _record(out, (x, gamma, beta), bwd)
