"""8 kHz audio frontend: WAV I/O, framing, and linear triangular filterbanks.

Features are 80 log-energies per 25 ms frame (10 ms hop), with the triangle
centers spaced *linearly* over 0-4000 Hz rather than on a mel scale.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 8000
LOG_FLOOR = 1e-10


class WavFormatError(ValueError):
    """The file is not a readable RIFF/WAVE PCM16 mono 8 kHz recording."""


class SampleRateMismatch(WavFormatError):
    pass


class ChannelCountMismatch(WavFormatError):
    pass


class EncodingMismatch(WavFormatError):
    pass


class AudioTooShort(ValueError):
    """Waveform shorter than a single analysis window."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.size == 0:
            raise ValueError("waveform is empty")
        if not np.isfinite(self.samples).all():
            raise ValueError("waveform contains non-finite samples")

    def __len__(self):
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class FrameSpec:
    window_length: int = 200  # 25 ms at 8 kHz
    hop: int = 80             # 10 ms (15 ms window overlap)
    fft_size: int = 256

    def __post_init__(self):
        if not (0 < self.hop <= self.window_length <= self.fft_size):
            raise ValueError(
                f"need 0 < hop <= window <= fft_size, got hop={self.hop} "
                f"window={self.window_length} fft={self.fft_size}"
            )

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def frame_count(self, num_samples: int) -> int:
        if num_samples < self.window_length:
            raise AudioTooShort(
                f"{num_samples} samples < one {self.window_length}-sample window"
            )
        return (num_samples - self.window_length) // self.hop + 1


@dataclass
class FilterBank:
    """Triangular filters over rfft bins; each filter's peak weight is 1."""

    weights: np.ndarray          # (channels, n_bins)
    centers: np.ndarray = field(default=None)  # Hz

    @property
    def channels(self) -> int:
        return self.weights.shape[0]


def linear_filterbank(channels: int = 80, spec: FrameSpec | None = None,
                      sample_rate: int = SAMPLE_RATE) -> FilterBank:
    """Triangles with linearly spaced centers covering 0 to Nyquist.

    Edge k of filter i sits at edges[i+k]; each triangle falls to zero exactly
    at its neighbors' centers.
    """
    spec = spec or FrameSpec()
    nyquist = sample_rate / 2.0
    edges = np.linspace(0.0, nyquist, channels + 2)
    bin_freqs = np.arange(spec.n_bins) * sample_rate / spec.fft_size

    weights = np.zeros((channels, spec.n_bins), dtype=np.float64)
    for i in range(channels):
        left, center, right = edges[i], edges[i + 1], edges[i + 2]
        rise = (bin_freqs - left) / (center - left)
        fall = (right - bin_freqs) / (right - center)
        tri = np.maximum(0.0, np.minimum(rise, fall))
        peak = tri.max()
        if peak > 0:
            tri = tri / peak
        weights[i] = tri
    return FilterBank(weights=weights.astype(np.float32), centers=edges[1:-1].copy())


def load_wav(path) -> Waveform:
    """Parse a RIFF/WAVE file; only PCM16 mono 8000 Hz is accepted.

    Unknown chunks are skipped; fmt and data are read bit-exactly.
    """
    data = Path(path).read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        size = int.from_bytes(data[pos + 4:pos + 8], "little")
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            raw = body
        pos += 8 + size + (size & 1)  # chunks are 2-byte aligned

    if fmt is None or len(fmt) < 16:
        raise WavFormatError(f"{path}: missing or truncated fmt chunk")
    if raw is None:
        raise WavFormatError(f"{path}: missing data chunk")

    audio_format, channels, rate, _, _, bits = struct.unpack("<HHIIHH", fmt[:16])
    if audio_format != 1:
        raise EncodingMismatch(f"{path}: audio_format: expected PCM (1), got {audio_format}")
    if bits != 16:
        raise EncodingMismatch(f"{path}: bits_per_sample: expected 16, got {bits}")
    if channels != 1:
        raise ChannelCountMismatch(f"{path}: channels: expected mono (1), got {channels}")
    if rate != SAMPLE_RATE:
        raise SampleRateMismatch(f"{path}: sample_rate: expected {SAMPLE_RATE}, got {rate}")
    if len(raw) == 0:
        raise WavFormatError(f"{path}: data: empty data chunk")

    samples = np.frombuffer(raw, dtype="<i2").astype(np.float32) / 32768.0
    return Waveform(samples, rate)


def save_wav(path, samples: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    """Write mono PCM16; samples are clipped to [-1, 1) before quantization."""
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(samples * 32768.0), -32768, 32767).astype("<i2")
    data = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sample_rate,
                                    sample_rate * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    Path(path).write_bytes(header + data)


def normalize_waveform(w: Waveform) -> Waveform:
    """Remove the mean, then scale the peak magnitude to 1.

    Waveforms that are zero (or constant, hence zero after mean removal)
    come back as silence rather than dividing by zero.
    """
    centered = w.samples.astype(np.float64) - w.samples.astype(np.float64).mean()
    peak = np.abs(centered).max()
    if peak == 0.0:
        return Waveform(np.zeros_like(w.samples), w.sample_rate)
    return Waveform((centered / peak).astype(np.float32), w.sample_rate)


def frame_signal(samples: np.ndarray, spec: FrameSpec) -> np.ndarray:
    """Slice into (frames, window_length) rows, hop samples apart."""
    n = samples.size
    count = spec.frame_count(n)  # raises AudioTooShort
    view = np.lib.stride_tricks.sliding_window_view(samples, spec.window_length)
    return view[:: spec.hop][:count]


def log_filterbank(w: Waveform, spec: FrameSpec | None = None,
                   fb: FilterBank | None = None) -> np.ndarray:
    """(frames, channels) log filterbank energies.

    Per frame: Hamming window, zero-pad to fft_size, magnitude-squared
    spectrum, triangle matmul, log with a 1e-10 floor.
    """
    spec = spec or FrameSpec()
    fb = fb or linear_filterbank(spec=spec, sample_rate=w.sample_rate)
    frames = frame_signal(np.asarray(w.samples, dtype=np.float64), spec)
    window = np.hamming(spec.window_length)
    spectrum = np.fft.rfft(frames * window, n=spec.fft_size, axis=1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    energies = power @ fb.weights.astype(np.float64).T
    return np.log(np.maximum(energies, LOG_FLOOR)).astype(np.float32)


def mean_variance_normalize(features: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    """Optional per-utterance normalization of a (frames, channels) matrix."""
    mu = features.mean(axis=0, keepdims=True)
    sd = features.std(axis=0, keepdims=True)
    return ((features - mu) / (sd + eps)).astype(np.float32)
