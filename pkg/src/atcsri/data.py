"""Manifest loading and batch assembly for training and evaluation.

A manifest is JSON Lines with one utterance per row: audio (relative path),
text, role, dfg, oov.  Features and normalized waveforms are extracted on
first touch and memoized per process, so sweeping several models over the
same corpus pays the FFT cost once.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .audio import LOG_FLOOR, load_wav, log_filterbank, normalize_waveform
from .models import MIN_FRAMES, MIN_SAMPLES, Batch
from .synth import ROLE_TO_LABEL
from .text import encode_batch

class ManifestError(ValueError):
    pass


def load_manifest(path):
    """Rows of the JSONL manifest, validated and with the root dir attached.

    `role` plus at least one of `audio`/`text` is required per row; a model
    that needs the absent modality fails later with a row-numbered error.
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"{path}:{lineno}: bad JSON ({e})") from None
            if "role" not in row:
                raise ManifestError(f"{path}:{lineno}: missing field 'role'")
            if row["role"] not in ROLE_TO_LABEL:
                raise ManifestError(
                    f"{path}:{lineno}: role must be atco|pilot, got {row['role']!r}")
            if not row.get("audio") and not row.get("text"):
                raise ManifestError(
                    f"{path}:{lineno}: need an 'audio' or 'text' field")
            records.append(row)
    if not records:
        raise ManifestError(f"manifest is empty: {path}")
    return records


def check_modalities(dataset, modalities):
    """Raise ManifestError naming the first row lacking a field the model needs."""
    need_audio = bool({"features", "waves"} & set(modalities))
    for i, row in enumerate(dataset.records):
        if "text" in modalities and not row.get("text"):
            raise ManifestError(f"manifest row {i + 1} has no 'text' field, "
                                "which this model requires")
        if need_audio and not row.get("audio"):
            raise ManifestError(f"manifest row {i + 1} has no 'audio' field, "
                                "which this model requires")


class Dataset:
    """Manifest rows plus lazily cached audio-derived arrays."""

    _feature_cache: dict = {}
    _wave_cache: dict = {}

    def __init__(self, manifest_path, records=None):
        self.root = Path(manifest_path).parent
        self.records = records if records is not None else load_manifest(manifest_path)

    def __len__(self):
        return len(self.records)

    def texts(self):
        for i, r in enumerate(self.records):
            if not r.get("text"):
                raise ManifestError(f"row {i + 1} has no 'text' field")
        return [r["text"] for r in self.records]

    def labels(self):
        return np.array([ROLE_TO_LABEL[r["role"]] for r in self.records], dtype=np.int64)

    def _audio_path(self, i):
        rel = self.records[i].get("audio")
        if not rel:
            raise ManifestError(f"row {i + 1} has no 'audio' field")
        return self.root / rel

    def features(self, i):
        key = str(self._audio_path(i))
        if key not in self._feature_cache:
            self._feature_cache[key] = log_filterbank(load_wav(key))
        return self._feature_cache[key]

    def wave(self, i):
        key = str(self._audio_path(i))
        if key not in self._wave_cache:
            self._wave_cache[key] = normalize_waveform(load_wav(key)).samples
        return self._wave_cache[key]


def pad_features(mats, min_frames=MIN_FRAMES):
    """Stack (frames_i, channels) matrices, padding time with the log floor."""
    t = max(min_frames, max(m.shape[0] for m in mats))
    out = np.full((len(mats), t, mats[0].shape[1]), np.log(LOG_FLOOR), dtype=np.float32)
    lengths = np.zeros(len(mats), dtype=np.int64)
    for i, m in enumerate(mats):
        out[i, : m.shape[0]] = m
        lengths[i] = m.shape[0]
    return out, lengths


def pad_waves(waves, min_samples=MIN_SAMPLES):
    s = max(min_samples, max(len(w) for w in waves))
    out = np.zeros((len(waves), s), dtype=np.float32)
    lengths = np.zeros(len(waves), dtype=np.int64)
    for i, w in enumerate(waves):
        out[i, : len(w)] = w
        lengths[i] = len(w)
    return out, lengths


def assemble_batch(dataset, indices, modalities, vocab=None, max_len=128) -> Batch:
    """Build exactly the fields the target model consumes."""
    batch = Batch(labels=dataset.labels()[indices])
    if "text" in modalities:
        if vocab is None:
            raise ValueError("text batches need a vocabulary")
        for i in indices:
            if not dataset.records[i].get("text"):
                raise ManifestError(f"row {i + 1} has no 'text' field")
        texts = [dataset.records[i]["text"] for i in indices]
        batch.token_ids, batch.token_lengths = encode_batch(texts, vocab, max_len)
    if "features" in modalities:
        mats = [dataset.features(i) for i in indices]
        batch.features, batch.feature_lengths = pad_features(mats)
    if "waves" in modalities:
        waves = [dataset.wave(i) for i in indices]
        batch.waves, batch.wave_lengths = pad_waves(waves)
    return batch


def iter_batches(dataset, modalities, vocab=None, batch_size=32, order=None, max_len=128):
    order = np.arange(len(dataset)) if order is None else np.asarray(order)
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        yield assemble_batch(dataset, idx, modalities, vocab=vocab, max_len=max_len)
