"""Neural building blocks on top of the tensor engine.

Modules register parameters and sub-modules in construction order, so
named_parameters() walks a stable, checkpoint-friendly dotted namespace.
Recurrent layers take an explicit (batch, t) validity mask and freeze their
state across padded steps, which is what makes the text path padding-exact.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


# -- initializers -------------------------------------------------------------

def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def orthogonal(rng, n):
    a = rng.standard_normal((n, n))
    q, r = np.linalg.qr(a)
    return (q * np.sign(np.diag(r))).astype(np.float32)


# -- module system ------------------------------------------------------------

class Module:
    """Parameter/buffer container with recursive train/eval switching."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, key, value):
        if isinstance(value, Parameter):
            self._params[key] = value
        elif isinstance(value, Module):
            self._children[key] = value
        object.__setattr__(self, key, value)

    def register_buffer(self, key, array):
        buf = Tensor(np.asarray(array, dtype=np.float32))
        self._buffers[key] = buf
        object.__setattr__(self, key, buf)
        return buf

    def named_parameters(self, prefix=""):
        for k, p in self._params.items():
            yield (prefix + k, p)
        for k, child in self._children.items():
            yield from child.named_parameters(prefix + k + ".")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix=""):
        for k, b in self._buffers.items():
            yield (prefix + k, b)
        for k, child in self._children.items():
            yield from child.named_buffers(prefix + k + ".")

    def train(self):
        self.training = True
        for child in self._children.values():
            child.train()
        return self

    def eval(self):
        self.training = False
        for child in self._children.values():
            child.eval()
        return self

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self.items = list(modules)
        for i, m in enumerate(modules):
            self._children[str(i)] = m

    def __iter__(self):
        return iter(self.items)

    def __getitem__(self, i):
        return self.items[i]

    def __len__(self):
        return len(self.items)


# -- dense / embedding / normalization ----------------------------------------

class Linear(Module):
    def __init__(self, in_dim, out_dim, rng, bias=True):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.weight = Parameter("weight", glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim))
        self.bias = Parameter("bias", np.zeros(out_dim, dtype=np.float32)) if bias else None

    def __call__(self, x):
        out = T.matmul(x, self.weight.tensor)
        if self.bias is not None:
            out = T.add(out, self.bias.tensor)
        return out


class Embedding(Module):
    """Token-id lookup with the PAD row pinned to zero (value and gradient)."""

    def __init__(self, vocab_size, dim, rng, pad_id=0):
        super().__init__()
        self.pad_id = pad_id
        w = glorot_uniform(rng, (vocab_size, dim), vocab_size, dim)
        w[pad_id] = 0.0
        self.weight = Parameter("weight", w)

    def __call__(self, ids):
        return T.embedding(self.weight.tensor, np.asarray(ids), frozen_row=self.pad_id)


class BatchNorm1d(Module):
    def __init__(self, features, momentum=0.9, eps=1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter("gamma", np.ones(features, dtype=np.float32))
        self.beta = Parameter("beta", np.zeros(features, dtype=np.float32))
        self.register_buffer("running_mean", np.zeros(features))
        self.register_buffer("running_var", np.ones(features))

    def __call__(self, x):
        return T.batch_norm(x, self.gamma.tensor, self.beta.tensor,
                            self.running_mean, self.running_var,
                            training=self.training, momentum=self.momentum, eps=self.eps)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = Parameter("gamma", np.ones(dim, dtype=np.float32))
        self.beta = Parameter("beta", np.zeros(dim, dtype=np.float32))

    def __call__(self, x):
        mu = T.mean(x, axis=-1, keepdims=True)
        xc = T.sub(x, mu)
        var = T.mean(T.mul(xc, xc), axis=-1, keepdims=True)
        xn = T.div(xc, T.sqrt(T.add(var, self.eps)))
        return T.add(T.mul(xn, self.gamma.tensor), self.beta.tensor)


# -- recurrent layers ----------------------------------------------------------

def _masked_update(new, old, m, m_inv):
    # state freezes wherever the mask is 0
    return T.add(T.mul(new, m), T.mul(old, m_inv))


class LSTM(Module):
    """Single recurrent layer; set bidirectional=True for a 2H-wide output."""

    def __init__(self, input_size, hidden_size, rng, bidirectional=False):
        super().__init__()
        self.input_size, self.hidden_size = input_size, hidden_size
        self.bidirectional = bidirectional
        for tag in (["fw", "bw"] if bidirectional else ["fw"]):
            wx = glorot_uniform(rng, (input_size, 4 * hidden_size), input_size, hidden_size)
            wh = np.concatenate([orthogonal(rng, hidden_size) for _ in range(4)], axis=1)
            setattr(self, f"wx_{tag}", Parameter(f"wx_{tag}", wx))
            setattr(self, f"wh_{tag}", Parameter(f"wh_{tag}", wh))
            setattr(self, f"b_{tag}", Parameter(f"b_{tag}", np.zeros(4 * hidden_size, dtype=np.float32)))

    def _run(self, x, mask, tag, reverse):
        batch, t, _ = x.shape
        hdim = self.hidden_size
        wx = getattr(self, f"wx_{tag}").tensor
        wh = getattr(self, f"wh_{tag}").tensor
        b = getattr(self, f"b_{tag}").tensor
        h = Tensor(np.zeros((batch, hdim), dtype=np.float32))
        c = Tensor(np.zeros((batch, hdim), dtype=np.float32))
        outs = [None] * t
        order = range(t - 1, -1, -1) if reverse else range(t)
        for step in order:
            xt = x[:, step]
            m = Tensor(mask[:, step:step + 1])
            m_inv = Tensor(1.0 - mask[:, step:step + 1])
            z = T.add(T.add(T.matmul(xt, wx), T.matmul(h, wh)), b)
            i = T.sigmoid(z[:, :hdim])
            f = T.sigmoid(z[:, hdim:2 * hdim])
            g = T.tanh(z[:, 2 * hdim:3 * hdim])
            o = T.sigmoid(z[:, 3 * hdim:])
            c_new = T.add(T.mul(f, c), T.mul(i, g))
            h_new = T.mul(o, T.tanh(c_new))
            c = _masked_update(c_new, c, m, m_inv)
            h = _masked_update(h_new, h, m, m_inv)
            outs[step] = T.reshape(h, (batch, 1, hdim))
        return T.concat(outs, axis=1)

    def __call__(self, x, mask):
        fw = self._run(x, mask, "fw", reverse=False)
        if not self.bidirectional:
            return fw
        bw = self._run(x, mask, "bw", reverse=True)
        return T.concat([fw, bw], axis=2)


class GRU(Module):
    """Unidirectional gated recurrent layer with masked state updates."""

    def __init__(self, input_size, hidden_size, rng):
        super().__init__()
        self.input_size, self.hidden_size = input_size, hidden_size
        self.wx_rz = Parameter("wx_rz", glorot_uniform(rng, (input_size, 2 * hidden_size), input_size, hidden_size))
        self.wh_rz = Parameter("wh_rz", np.concatenate([orthogonal(rng, hidden_size) for _ in range(2)], axis=1))
        self.b_rz = Parameter("b_rz", np.zeros(2 * hidden_size, dtype=np.float32))
        self.wx_n = Parameter("wx_n", glorot_uniform(rng, (input_size, hidden_size), input_size, hidden_size))
        self.wh_n = Parameter("wh_n", orthogonal(rng, hidden_size))
        self.b_n = Parameter("b_n", np.zeros(hidden_size, dtype=np.float32))

    def __call__(self, x, mask):
        batch, t, _ = x.shape
        hdim = self.hidden_size
        h = Tensor(np.zeros((batch, hdim), dtype=np.float32))
        outs = []
        for step in range(t):
            xt = x[:, step]
            m = Tensor(mask[:, step:step + 1])
            m_inv = Tensor(1.0 - mask[:, step:step + 1])
            rz = T.sigmoid(T.add(T.add(T.matmul(xt, self.wx_rz.tensor),
                                       T.matmul(h, self.wh_rz.tensor)), self.b_rz.tensor))
            r = rz[:, :hdim]
            z = rz[:, hdim:]
            n = T.tanh(T.add(T.add(T.matmul(xt, self.wx_n.tensor),
                                   T.matmul(T.mul(r, h), self.wh_n.tensor)), self.b_n.tensor))
            one_minus_z = T.sub(Tensor(np.float32(1.0)), z)
            h_new = T.add(T.mul(one_minus_z, n), T.mul(z, h))
            h = _masked_update(h_new, h, m, m_inv)
            outs.append(T.reshape(h, (batch, 1, hdim)))
        return T.concat(outs, axis=1)


# -- convolution wrappers ------------------------------------------------------

class Conv1d(Module):
    def __init__(self, in_ch, out_ch, kernel, rng, stride=1, dilation=1, bias=True):
        super().__init__()
        self.stride, self.dilation, self.kernel = stride, dilation, kernel
        fan_in, fan_out = in_ch * kernel, out_ch * kernel
        self.weight = Parameter("weight", glorot_uniform(rng, (out_ch, in_ch, kernel), fan_in, fan_out))
        self.bias = Parameter("bias", np.zeros(out_ch, dtype=np.float32)) if bias else None

    def __call__(self, x):
        b = self.bias.tensor if self.bias is not None else None
        return T.conv1d(x, self.weight.tensor, b, stride=self.stride, dilation=self.dilation)


class Conv2d(Module):
    def __init__(self, in_ch, out_ch, kh, kw, rng, padding=(0, 0), bias=True):
        super().__init__()
        self.padding = padding
        fan_in, fan_out = in_ch * kh * kw, out_ch * kh * kw
        self.weight = Parameter("weight", glorot_uniform(rng, (out_ch, in_ch, kh, kw), fan_in, fan_out))
        self.bias = Parameter("bias", np.zeros(out_ch, dtype=np.float32)) if bias else None

    def __call__(self, x):
        b = self.bias.tensor if self.bias is not None else None
        return T.conv2d(x, self.weight.tensor, b, padding=self.padding)


class TDNNLayer(Module):
    """Dilated temporal convolution + ReLU; shrinks time by (kernel-1)*dilation."""

    def __init__(self, in_dim, out_dim, kernel, dilation, rng):
        super().__init__()
        self.conv = Conv1d(in_dim, out_dim, kernel, rng, dilation=dilation)
        self.context_span = (kernel - 1) * dilation

    def __call__(self, x):
        return T.relu(self.conv(x))


class SincConv(Module):
    """Band-pass convolution with learnable cutoffs, applied to raw samples.

    Reparameterization keeps 0 < f1 < f2 <= nyquist for any parameter values:
    f1 = clip(|p1| + 0.5, 0.5, nyquist - 1) and f2 = clip(f1 + 1e-3 + |p2|,
    0, nyquist).  Kernels are symmetric, Hamming-windowed, and scaled to unit
    passband gain.
    """

    def __init__(self, filters=80, kernel=251, stride=80, sample_rate=8000, rng=None):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError("sinc kernel length must be odd")
        self.filters, self.kernel, self.stride = filters, kernel, stride
        self.sample_rate = sample_rate
        nyq = sample_rate / 2.0
        edges = np.linspace(30.0, nyq - 30.0, filters + 1)
        f1_init = edges[:-1] - 0.5
        band_init = np.diff(edges) - 1e-3
        self.f1_raw = Parameter("f1_raw", f1_init.astype(np.float32))
        self.band_raw = Parameter("band_raw", band_init.astype(np.float32))
        half = kernel // 2
        self._t_right = (np.arange(1, half + 1) / sample_rate).astype(np.float32)[None, :]
        self._window = np.hamming(kernel).astype(np.float32)[None, :]

    def cutoffs(self):
        """Realized (f1, f2) in Hz as plain arrays."""
        with T.no_grad():
            f1, f2 = self._cutoff_tensors()
            return f1.data.copy(), f2.data.copy()

    def _cutoff_tensors(self):
        nyq = self.sample_rate / 2.0
        f1 = T.clip(T.add(T.absolute(self.f1_raw.tensor), 0.5), 0.5, nyq - 1.0)
        f2 = T.clip(T.add(f1, T.add(T.absolute(self.band_raw.tensor), 1e-3)), 0.0, nyq)
        return f1, f2

    def build_kernels(self):
        f1, f2 = self._cutoff_tensors()
        f1c = T.reshape(f1, (self.filters, 1))
        f2c = T.reshape(f2, (self.filters, 1))
        tr = self._t_right
        denom = np.pi * tr * self.sample_rate  # unit passband gain
        right = T.div(T.sub(T.sin(T.mul(f2c, 2.0 * np.pi * tr)),
                            T.sin(T.mul(f1c, 2.0 * np.pi * tr))), denom)
        center = T.mul(T.sub(f2c, f1c), 2.0 / self.sample_rate)
        left = right[:, ::-1]
        kern = T.concat([left, center, right], axis=1)
        return T.mul(kern, self._window)

    def __call__(self, x):
        """x: (batch, 1, samples) -> log-magnitude maps (batch, filters, t')."""
        kern = T.reshape(self.build_kernels(), (self.filters, 1, self.kernel))
        y = T.conv1d(x, kern, None, stride=self.stride)
        return T.log(T.add(T.absolute(y), 1e-4))

    def out_length(self, n_samples):
        return max(1, (n_samples - self.kernel) // self.stride + 1)


# -- attention -----------------------------------------------------------------

def sinusoidal_positions(max_len, dim):
    pos = np.arange(max_len)[:, None].astype(np.float64)
    i = np.arange(dim // 2)[None, :].astype(np.float64)
    angles = pos / np.power(10000.0, 2.0 * i / dim)
    pe = np.zeros((max_len, dim), dtype=np.float32)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


class MultiHeadAttention(Module):
    def __init__(self, dim, heads, rng):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        self.dim, self.heads, self.head_dim = dim, heads, dim // heads
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(dim, dim, rng)
        self.wv = Linear(dim, dim, rng)
        self.wo = Linear(dim, dim, rng)

    def __call__(self, x, key_bias):
        """key_bias: (batch, 1, 1, t) additive logits, -1e9 over padding."""
        batch, t, _ = x.shape

        def split(z):
            return T.swapaxes(T.reshape(z, (batch, t, self.heads, self.head_dim)), 1, 2)

        q, k, v = split(self.wq(x)), split(self.wk(x)), split(self.wv(x))
        scores = T.mul(T.matmul(q, T.swapaxes(k, 2, 3)), 1.0 / np.sqrt(self.head_dim))
        scores = T.add(scores, Tensor(key_bias))
        att = T.softmax(scores, axis=3)
        ctx = T.swapaxes(T.matmul(att, v), 1, 2)
        return self.wo(T.reshape(ctx, (batch, t, self.dim)))


class TransformerBlock(Module):
    def __init__(self, dim, heads, ff_dim, rng, causal=False):
        super().__init__()
        self.causal = causal
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln1 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng)
        self.ln2 = LayerNorm(dim)

    def __call__(self, x, key_bias):
        if self.causal:
            t = x.shape[1]
            tri = np.triu(np.full((t, t), -1e9, dtype=np.float32), k=1)
            key_bias = key_bias + tri[None, None]
        x = self.ln1(T.add(x, self.attn(x, key_bias)))
        x = self.ln2(T.add(x, self.ff2(T.relu(self.ff1(x)))))
        return x


def padding_key_bias(mask):
    """(batch, t) validity mask -> (batch, 1, 1, t) additive attention bias."""
    return ((1.0 - mask) * -1e9).astype(np.float32)[:, None, None, :]
