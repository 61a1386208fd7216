"""Temporal pooling and cross-modal fusion.

Every pooling strategy consumes a (batch, t, dim) hidden map plus a
(batch, t) validity mask and emits a fixed-size embedding; fusion attends
from each speech step onto the text sequence and fuses with concatenation
plus a learned projection.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .layers import Linear, Module, glorot_uniform
from .tensor import Parameter, Tensor

POOLING_KINDS = ("self_attention", "statistics", "average", "sum")
MASK_NEG = -1e9


class EmptySequence(ValueError):
    pass


def _check_mask(mask, min_valid=1):
    lengths = np.asarray(mask).sum(axis=1)
    if (lengths < min_valid).any():
        raise EmptySequence(f"pooling needs at least {min_valid} valid step(s) per row")
    return lengths


class SelfAttentionPool(Module):
    """tanh-scored softmax weighting: H* = tanh(H), a = softmax(W^T H*), e = tanh(H a^T)."""

    def __init__(self, dim, rng):
        super().__init__()
        self.dim = dim
        # zero scorer: the pool starts as exact uniform averaging and only
        # deviates where the gradient justifies it
        self.w = Parameter("w", np.zeros((dim, 1), dtype=np.float32))

    def __call__(self, h, mask):
        _check_mask(mask)
        batch, t, dim = h.shape
        scored = T.tanh(h)
        logits = T.reshape(T.matmul(scored, self.w.tensor), (batch, t))
        logits = T.add(logits, Tensor(((1.0 - mask) * MASK_NEG).astype(np.float32)))
        alpha = T.softmax(logits, axis=1)
        pooled = T.matmul(T.reshape(alpha, (batch, 1, t)), h)
        return T.tanh(T.reshape(pooled, (batch, dim)))

    def weights(self, h, mask):
        """The attention row for inspection; no tape required."""
        with T.no_grad():
            batch, t, _ = h.shape
            logits = T.reshape(T.matmul(T.tanh(h), self.w.tensor), (batch, t))
            logits = T.add(logits, Tensor(((1.0 - mask) * MASK_NEG).astype(np.float32)))
            return T.softmax(logits, axis=1).data


class StatisticsPool(Module):
    """Masked per-dimension mean and population std, concatenated (2*dim)."""

    eps = 1e-8

    def __init__(self):
        super().__init__()

    def __call__(self, h, mask):
        lengths = _check_mask(mask, min_valid=2)
        m3 = Tensor(mask.astype(np.float32)[:, :, None])
        inv_n = Tensor((1.0 / lengths).astype(np.float32)[:, None])
        mean = T.mul(T.sum_(T.mul(h, m3), axis=1), inv_n)
        centered = T.sub(h, T.reshape(mean, (h.shape[0], 1, h.shape[2])))
        var = T.mul(T.sum_(T.mul(T.mul(centered, centered), m3), axis=1), inv_n)
        std = T.sqrt(T.add(var, self.eps))
        return T.concat([mean, std], axis=1)


class FixedPool(Module):
    def __init__(self, kind):
        super().__init__()
        if kind not in ("average", "sum"):
            raise ValueError(f"unknown fixed pooling {kind!r}")
        self.kind = kind

    def __call__(self, h, mask):
        lengths = _check_mask(mask)
        m3 = Tensor(mask.astype(np.float32)[:, :, None])
        total = T.sum_(T.mul(h, m3), axis=1)
        if self.kind == "sum":
            return total
        return T.mul(total, Tensor((1.0 / lengths).astype(np.float32)[:, None]))


class PoolingStage(Module):
    """Pool a (batch, t, dim) map down to a (batch, dim) embedding.

    Statistics pooling doubles the width, so it carries a projection back
    to dim; the other kinds are already dim-sized.
    """

    def __init__(self, kind, dim, rng):
        super().__init__()
        if kind not in POOLING_KINDS:
            raise ValueError(f"unknown pooling kind {kind!r}")
        self.kind, self.dim = kind, dim
        if kind == "self_attention":
            self.pool = SelfAttentionPool(dim, rng)
        elif kind == "statistics":
            self.pool = StatisticsPool()
            self.post = Linear(2 * dim, dim, rng)
        else:
            self.pool = FixedPool(kind)

    def __call__(self, h, mask):
        e = self.pool(h, mask)
        if self.kind == "statistics":
            e = self.post(e)
        return e


class ModalAttentionFusion(Module):
    """Each speech step attends over the text steps; the correlated text
    vector is concatenated back and projected: f_i = tanh(W_b [c_i, h_i^s])."""

    def __init__(self, speech_dim, text_dim, out_dim, rng):
        super().__init__()
        self.w_a = Parameter("w_a", glorot_uniform(rng, (speech_dim, text_dim), speech_dim, text_dim))
        self.w_b = Parameter("w_b", glorot_uniform(rng, (text_dim + speech_dim, out_dim),
                                                   text_dim + speech_dim, out_dim))

    def scores(self, h_s, h_t):
        return T.matmul(T.matmul(h_s, self.w_a.tensor), T.swapaxes(h_t, 1, 2))

    def attention(self, h_s, h_t, text_mask):
        if h_s.shape[1] < 1 or h_t.shape[1] < 1:
            raise EmptySequence("fusion needs non-empty speech and text maps")
        _check_mask(text_mask)
        e = self.scores(h_s, h_t)
        bias = ((1.0 - text_mask) * MASK_NEG).astype(np.float32)[:, None, :]
        return T.softmax(T.add(e, Tensor(bias)), axis=2)

    def __call__(self, h_s, h_t, text_mask):
        alpha = self.attention(h_s, h_t, text_mask)
        c = T.matmul(alpha, h_t)
        return T.tanh(T.matmul(T.concat([c, h_s], axis=2), self.w_b.tensor))


class ConcatFusion(Module):
    """Ablation fusion: pool each modality, concatenate, project with tanh."""

    def __init__(self, speech_dim, text_dim, out_dim, rng):
        super().__init__()
        self.pool_s = SelfAttentionPool(speech_dim, rng)
        self.pool_t = SelfAttentionPool(text_dim, rng)
        self.proj = Linear(speech_dim + text_dim, out_dim, rng)

    def __call__(self, h_s, h_t, speech_mask, text_mask):
        es = self.pool_s(h_s, speech_mask)
        et = self.pool_t(h_t, text_mask)
        return T.tanh(self.proj(T.concat([es, et], axis=1)))
