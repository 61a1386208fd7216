"""The seven classifier graphs: three text, three speech, one multimodal.

Every backbone produces a (batch, t', dim) hidden map plus the validity mask
for t'; a linear projection to the shared 512-dim width, a pooling stage, and
the common batch-normalized classifier head sit on top.  The multimodal model
runs the BiLSTM text encoder and the CRNN speech encoder, fuses them with
modal attention, and pools the fused sequence with self-attention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import (
    GRU,
    LSTM,
    BatchNorm1d,
    Conv2d,
    Embedding,
    Linear,
    Module,
    ModuleList,
    SincConv,
    TDNNLayer,
    TransformerBlock,
    padding_key_bias,
    sinusoidal_positions,
)
from .pooling import ConcatFusion, ModalAttentionFusion, PoolingStage
from .tensor import Tensor
from .text import lengths_to_mask

EMBED_DIM = 512
TEXT_KINDS = ("bilstm", "textcnn", "transformer")
SPEECH_KINDS = ("crnn", "xvector", "sincnet")
MODEL_KINDS = TEXT_KINDS + SPEECH_KINDS + ("mmsrinet",)
FUSION_KINDS = ("modal_attention", "concat")

DEFAULT_POOLING = {
    "bilstm": "self_attention",
    "textcnn": "self_attention",
    "transformer": "self_attention",
    "crnn": "self_attention",
    "xvector": "statistics",
    "sincnet": "statistics",
    "mmsrinet": "self_attention",
}

# minimum padded extents the speech encoders need
MIN_FRAMES = 32          # CRNN halves time five times
MIN_SAMPLES = 1531       # sinc kernel 251 + (15+4) hops of 80


class UnknownModelKind(ValueError):
    pass


def modalities_for(kind):
    """Batch fields a model kind consumes, known before the model exists."""
    if kind == "mmsrinet":
        return {"text", "features"}
    if kind in TEXT_KINDS:
        return {"text"}
    if kind == "sincnet":
        return {"waves"}
    if kind in SPEECH_KINDS:
        return {"features"}
    raise UnknownModelKind(f"unknown model kind {kind!r}")


@dataclass
class Batch:
    """Only the fields a given model consumes need to be populated."""

    token_ids: np.ndarray | None = None       # (B, T) int64
    token_lengths: np.ndarray | None = None
    features: np.ndarray | None = None        # (B, Tf, 80) float32
    feature_lengths: np.ndarray | None = None
    waves: np.ndarray | None = None           # (B, S) float32, normalized
    wave_lengths: np.ndarray | None = None
    labels: np.ndarray | None = None          # (B,) int64; pilot = 1

    @property
    def size(self):
        for arr in (self.token_ids, self.features, self.waves):
            if arr is not None:
                return arr.shape[0]
        raise ValueError("empty batch")


class ClassifierHead(Module):
    """512 -> 256 -> 2 with batch norm before each activation, softmax out."""

    def __init__(self, rng, in_dim=EMBED_DIM, hidden=256, classes=2):
        super().__init__()
        self.in_dim = in_dim
        self.lin1 = Linear(in_dim, hidden, rng)
        self.bn1 = BatchNorm1d(hidden)
        self.lin2 = Linear(hidden, classes, rng)
        self.bn2 = BatchNorm1d(classes)

    def __call__(self, e):
        if e.shape[-1] != self.in_dim:
            raise ValueError(f"classifier expects width {self.in_dim}, got {e.shape[-1]}")
        x = T.relu(self.bn1(self.lin1(e)))
        return T.softmax(self.bn2(self.lin2(x)), axis=1)


# -- text encoders -------------------------------------------------------------

class BiLSTMEncoder(Module):
    out_dim = 2 * EMBED_DIM

    def __init__(self, vocab_size, rng):
        super().__init__()
        self.emb = Embedding(vocab_size, EMBED_DIM, rng)
        self.l1 = LSTM(EMBED_DIM, EMBED_DIM, rng, bidirectional=True)
        self.l2 = LSTM(2 * EMBED_DIM, EMBED_DIM, rng, bidirectional=True)

    def __call__(self, ids, lengths):
        mask = lengths_to_mask(lengths, ids.shape[1])
        h = self.l1(self.emb(ids), mask)
        return self.l2(h, mask), mask


class TextCNNEncoder(Module):
    kernel_heights = (3, 4, 5)
    channels = 128
    out_dim = 3 * 128

    def __init__(self, vocab_size, rng):
        super().__init__()
        self.emb = Embedding(vocab_size, EMBED_DIM, rng)
        self.branches = ModuleList(
            [Conv2d(1, self.channels, k, EMBED_DIM, rng) for k in self.kernel_heights])

    def __call__(self, ids, lengths):
        x = self.emb(ids)
        batch, t, _ = x.shape
        min_t = max(self.kernel_heights) + 1
        if t < min_t:  # guarantee at least one pooled step for the widest kernel
            pad = Tensor(np.zeros((batch, min_t - t, EMBED_DIM), dtype=np.float32))
            x = T.concat([x, pad], axis=1)
            t = min_t
        x = T.reshape(x, (batch, 1, t, EMBED_DIM))
        maps = []
        for k, conv in zip(self.kernel_heights, self.branches):
            y = T.maxpool2d(T.relu(conv(x)), (2, 1))
            maps.append(y)
        t_out = min(m.shape[2] for m in maps)
        maps = [T.reshape(m[:, :, :t_out, :], (batch, self.channels, t_out)) for m in maps]
        h = T.swapaxes(T.concat(maps, axis=1), 1, 2)
        # a pooled step is clean once the widest window fits inside the tokens;
        # shorter utterances fall back to step 0 (windows over frozen-zero pads)
        valid = np.clip((np.asarray(lengths) - max(self.kernel_heights) + 1) // 2, 1, t_out)
        return h, lengths_to_mask(valid, t_out)


class TransformerEncoder(Module):
    out_dim = EMBED_DIM
    blocks_n, heads, ff_dim = 4, 4, 512

    def __init__(self, vocab_size, rng, max_len=512, causal=False):
        super().__init__()
        self.emb = Embedding(vocab_size, EMBED_DIM, rng)
        self.blocks = ModuleList(
            [TransformerBlock(EMBED_DIM, self.heads, self.ff_dim, rng, causal=causal)
             for _ in range(self.blocks_n)])
        self._pe = sinusoidal_positions(max_len, EMBED_DIM)

    def __call__(self, ids, lengths):
        mask = lengths_to_mask(lengths, ids.shape[1])
        x = T.add(self.emb(ids), Tensor(self._pe[: ids.shape[1]][None]))
        bias = padding_key_bias(mask)
        for blk in self.blocks:
            x = blk(x, bias)
        return x, mask


# -- speech encoders -----------------------------------------------------------

class CRNNEncoder(Module):
    conv_channels = (32, 64, 128, 128, 128)
    out_dim = 256

    def __init__(self, rng, feat_dim=80):
        super().__init__()
        chans = (1,) + self.conv_channels
        self.convs = ModuleList(
            [Conv2d(chans[i], chans[i + 1], 3, 3, rng, padding=(1, 1)) for i in range(5)])
        freq = feat_dim
        for _ in range(5):
            freq //= 2
        self.rnn_in = self.conv_channels[-1] * freq
        self.gru1 = GRU(self.rnn_in, 256, rng)
        self.gru2 = GRU(256, 256, rng)

    def __call__(self, features, lengths):
        batch, tf, feat = features.shape
        if tf < MIN_FRAMES:
            raise ValueError(f"CRNN needs >= {MIN_FRAMES} padded frames, got {tf}")
        x = Tensor(features[:, None, :, :])
        for conv in self.convs:
            x = T.maxpool2d(T.relu(conv(x)), (2, 2))
        _, ch, t_out, freq = x.shape
        x = T.reshape(T.swapaxes(x, 1, 2), (batch, t_out, ch * freq))
        valid = np.clip(np.asarray(lengths) // 32, 1, t_out)
        mask = lengths_to_mask(valid, t_out)
        h = self.gru2(self.gru1(x, mask), mask)
        return h, mask


class TDNNStack(Module):
    """Four dilated temporal convolutions: contexts 5x1, 3x2, 3x3, 1x1."""

    layout = ((5, 1), (3, 2), (3, 3), (1, 1))
    out_dim = EMBED_DIM

    def __init__(self, in_dim, rng):
        super().__init__()
        dims = (in_dim, 512, 512, 512, 512)
        self.layers = ModuleList(
            [TDNNLayer(dims[i], dims[i + 1], k, d, rng) for i, (k, d) in enumerate(self.layout)])
        self.context_span = sum((k - 1) * d for k, d in self.layout)

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return T.swapaxes(x, 1, 2)


class XVectorEncoder(Module):
    out_dim = EMBED_DIM

    def __init__(self, rng, feat_dim=80):
        super().__init__()
        self.tdnn = TDNNStack(feat_dim, rng)

    def __call__(self, features, lengths):
        x = Tensor(np.swapaxes(features, 1, 2))
        h = self.tdnn(x)
        t_out = h.shape[1]
        valid = np.clip(np.asarray(lengths) - self.tdnn.context_span, 2, t_out)
        return h, lengths_to_mask(valid, t_out)


class SincNetEncoder(Module):
    out_dim = EMBED_DIM

    def __init__(self, rng, filters=80):
        super().__init__()
        self.sinc = SincConv(filters=filters, rng=rng)
        self.tdnn = TDNNStack(filters, rng)

    def __call__(self, waves, lengths):
        if waves.shape[1] < MIN_SAMPLES:
            raise ValueError(f"sincnet needs >= {MIN_SAMPLES} padded samples")
        x = Tensor(waves[:, None, :])
        fm = self.sinc(x)
        h = self.tdnn(fm)
        t_out = h.shape[1]
        frame_valid = np.array([self.sinc.out_length(int(n)) for n in np.asarray(lengths)])
        valid = np.clip(frame_valid - self.tdnn.context_span, 2, t_out)
        return h, lengths_to_mask(valid, t_out)


# -- assembled classifiers -----------------------------------------------------

class RoleClassifier(Module):
    """Unimodal model: backbone -> 512 projection -> pooling -> head."""

    def __init__(self, kind, rng, vocab_size=None, pooling=None):
        super().__init__()
        if kind not in TEXT_KINDS + SPEECH_KINDS:
            raise UnknownModelKind(f"unknown model kind {kind!r}")
        self.kind = kind
        self.pooling_kind = pooling or DEFAULT_POOLING[kind]
        self.vocab_size = vocab_size
        if kind in TEXT_KINDS:
            if not vocab_size:
                raise ValueError("text models need vocab_size")
            enc = {"bilstm": BiLSTMEncoder, "textcnn": TextCNNEncoder,
                   "transformer": TransformerEncoder}[kind](vocab_size, rng)
        else:
            enc = {"crnn": CRNNEncoder, "xvector": XVectorEncoder,
                   "sincnet": SincNetEncoder}[kind](rng)
        self.encoder = enc
        self.proj = Linear(enc.out_dim, EMBED_DIM, rng)
        self.pool = PoolingStage(self.pooling_kind, EMBED_DIM, rng)
        self.head = ClassifierHead(rng)

    @property
    def modalities(self):
        return modalities_for(self.kind)

    def encode(self, batch: Batch):
        if self.kind in TEXT_KINDS:
            if batch.token_ids is None:
                raise ValueError(f"{self.kind} needs token_ids in the batch")
            return self.encoder(batch.token_ids, batch.token_lengths)
        if self.kind == "sincnet":
            if batch.waves is None:
                raise ValueError("sincnet needs waves in the batch")
            return self.encoder(batch.waves, batch.wave_lengths)
        if batch.features is None:
            raise ValueError(f"{self.kind} needs features in the batch")
        return self.encoder(batch.features, batch.feature_lengths)

    def embed(self, batch: Batch):
        h, mask = self.encode(batch)
        return self.pool(self.proj(h), mask)

    def forward(self, batch: Batch):
        return self.head(self.embed(batch))

    def hyper(self):
        return {"kind": self.kind, "pooling": self.pooling_kind,
                "vocab_size": self.vocab_size, "embed_dim": EMBED_DIM}


class MMSRINet(Module):
    """BiLSTM text + CRNN speech, modal-attention fusion, pooled and classified."""

    def __init__(self, rng, vocab_size, pooling=None, fusion="modal_attention"):
        super().__init__()
        if fusion not in FUSION_KINDS:
            raise ValueError(f"unknown fusion kind {fusion!r}")
        self.kind = "mmsrinet"
        self.vocab_size = vocab_size
        self.pooling_kind = pooling or DEFAULT_POOLING["mmsrinet"]
        self.fusion_kind = fusion
        self.text_enc = BiLSTMEncoder(vocab_size, rng)
        self.speech_enc = CRNNEncoder(rng)
        self.proj_t = Linear(self.text_enc.out_dim, EMBED_DIM, rng)
        self.proj_s = Linear(self.speech_enc.out_dim, EMBED_DIM, rng)
        if fusion == "modal_attention":
            self.fusion = ModalAttentionFusion(EMBED_DIM, EMBED_DIM, EMBED_DIM, rng)
            self.pool = PoolingStage(self.pooling_kind, EMBED_DIM, rng)
        else:
            self.fusion = ConcatFusion(EMBED_DIM, EMBED_DIM, EMBED_DIM, rng)
        self.head = ClassifierHead(rng)

    @property
    def modalities(self):
        return modalities_for(self.kind)

    def embed(self, batch: Batch):
        if batch.token_ids is None:
            raise ValueError("mmsrinet needs token_ids in the batch")
        if batch.features is None:
            raise ValueError("mmsrinet needs features in the batch")
        h_t, m_t = self.text_enc(batch.token_ids, batch.token_lengths)
        h_s, m_s = self.speech_enc(batch.features, batch.feature_lengths)
        ht = self.proj_t(h_t)
        hs = self.proj_s(h_s)
        if self.fusion_kind == "modal_attention":
            fused = self.fusion(hs, ht, m_t)
            return self.pool(fused, m_s)
        return self.fusion(hs, ht, m_s, m_t)

    def forward(self, batch: Batch):
        return self.head(self.embed(batch))

    def hyper(self):
        return {"kind": self.kind, "pooling": self.pooling_kind,
                "fusion": self.fusion_kind, "vocab_size": self.vocab_size,
                "embed_dim": EMBED_DIM}


def build_model(kind, vocab_size=None, pooling=None, fusion="modal_attention", seed=0):
    """Construct any of the seven model kinds with seeded initialization."""
    rng = np.random.default_rng(seed)
    if kind == "mmsrinet":
        if not vocab_size:
            raise ValueError("mmsrinet needs vocab_size")
        return MMSRINet(rng, vocab_size, pooling=pooling, fusion=fusion)
    return RoleClassifier(kind, rng, vocab_size=vocab_size, pooling=pooling)


def cast_parameters(model: Module, dtype):
    """Convert parameters and buffers in place (gradient checks run at 64-bit)."""
    for _, p in model.named_parameters():
        p.tensor.data = p.data.astype(dtype)
    for _, b in model.named_buffers():
        b.data = b.data.astype(dtype)
    return model


def parameter_count(model: Module) -> int:
    return sum(p.data.size for _, p in model.named_parameters())
