"""Binary checkpoints: parameters, running statistics, and a JSON trailer.

Layout (all integers little-endian):
    magic "SRICKPT1" | version u16 | tensor count u32
    per tensor: name length u16 | name UTF-8 | rank u8 | dims u64*rank
                | float32 payload, row-major
    metadata length u64 | metadata UTF-8 JSON

The metadata block records the model kind and hyperparameters so `load`
can rebuild the graph before assigning weights.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .models import build_model

MAGIC = b"SRICKPT1"
VERSION = 1


class CheckpointError(RuntimeError):
    pass


class BadMagic(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedCheckpoint(CheckpointError):
    pass


def vocab_hash(vocab) -> str:
    """sha256 over the id-ordered token list; pins a checkpoint to its vocab."""
    blob = "\n".join(vocab.id_to_token).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _entries(model):
    out = list(model.named_parameters())
    out.extend((name, buf) for name, buf in model.named_buffers())
    return out


def save_checkpoint(model, path, extra_metadata=None) -> dict:
    meta = dict(model.hyper())
    if extra_metadata:
        meta.update(extra_metadata)
    entries = _entries(model)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(entries)))
        for name, t in entries:
            data = np.ascontiguousarray(t.data, dtype="<f4")
            name_b = name.encode("utf-8")
            f.write(struct.pack("<H", len(name_b)))
            f.write(name_b)
            f.write(struct.pack("<B", data.ndim))
            f.write(struct.pack(f"<{data.ndim}Q", *data.shape))
            f.write(data.tobytes())
        meta_b = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<Q", len(meta_b)))
        f.write(meta_b)
    return meta


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.blob):
            raise TruncatedCheckpoint(f"file ends inside {what}")
        chunk = self.blob[self.off:self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path) -> tuple[dict, dict]:
    """Parse a checkpoint file into ({name: array}, metadata) without a model."""
    blob = Path(path).read_bytes()
    r = _Reader(blob)
    magic = r.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise BadMagic(f"{path}: not a checkpoint (magic {magic!r})")
    version, count = r.unpack("<HI", "header")
    if version != VERSION:
        raise VersionMismatch(f"{path}: format version {version}, expected {VERSION}")
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        (rank,) = r.unpack("<B", f"rank of {name}")
        dims = r.unpack(f"<{rank}Q", f"dims of {name}") if rank else ()
        n_elem = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = r.take(4 * n_elem, f"data of {name}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
        if name in tensors:
            raise CheckpointError(f"{path}: duplicate tensor {name!r}")
        tensors[name] = arr
    (meta_len,) = r.unpack("<Q", "metadata length")
    meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
    if r.off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - r.off} trailing bytes")
    return tensors, meta


def load_checkpoint(path):
    """Rebuild the model graph from metadata and assign every saved tensor."""
    tensors, meta = read_checkpoint(path)
    try:
        model = build_model(meta["kind"], vocab_size=meta.get("vocab_size"),
                            pooling=meta.get("pooling"),
                            fusion=meta.get("fusion", "modal_attention"))
    except (KeyError, ValueError) as e:
        raise CheckpointError(f"{path}: bad metadata ({e})") from None
    slots = {name: p.tensor for name, p in model.named_parameters()}
    slots.update(dict(model.named_buffers()))
    if set(slots) != set(tensors):
        missing = sorted(set(slots) - set(tensors))
        alien = sorted(set(tensors) - set(slots))
        raise CheckpointError(
            f"{path}: tensor set mismatch (missing {missing[:3]}, unknown {alien[:3]})")
    for name, arr in tensors.items():
        slot = slots[name]
        if slot.data.shape != arr.shape:
            raise CheckpointError(
                f"{path}: {name} has shape {arr.shape}, model wants {slot.data.shape}")
        slot.data = arr
    model.eval()
    return model, meta
