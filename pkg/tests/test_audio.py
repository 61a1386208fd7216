"""Audio frontend: WAV parsing, framing arithmetic, filterbank properties."""

import numpy as np
import pytest

from atcsri import audio
from atcsri.audio import (
    AudioTooShort,
    ChannelCountMismatch,
    EncodingMismatch,
    FrameSpec,
    SampleRateMismatch,
    Waveform,
    WavFormatError,
    linear_filterbank,
    load_wav,
    log_filterbank,
    normalize_waveform,
    save_wav,
)


class TestWavIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        x = rng.uniform(-0.9, 0.9, 1600).astype(np.float32)
        p = tmp_path / "a.wav"
        save_wav(p, x)
        w = load_wav(p)
        assert w.sample_rate == 8000
        assert len(w) == 1600
        np.testing.assert_allclose(w.samples, x, atol=1.0 / 32768)

    def test_one_second_file_is_8000_samples(self, tmp_path):
        p = tmp_path / "one.wav"
        save_wav(p, np.zeros(8000))
        assert len(load_wav(p)) == 8000

    def test_all_zero_pcm_gives_all_zero_samples(self, tmp_path):
        p = tmp_path / "z.wav"
        save_wav(p, np.zeros(400))
        assert not load_wav(p).samples.any()

    def test_wrong_sample_rate_rejected(self, tmp_path):
        p = tmp_path / "r.wav"
        save_wav(p, np.zeros(100), sample_rate=16000)
        with pytest.raises(SampleRateMismatch, match="16000"):
            load_wav(p)

    def _patched(self, tmp_path, offset, value):
        p = tmp_path / "m.wav"
        save_wav(p, np.zeros(100))
        raw = bytearray(p.read_bytes())
        raw[offset:offset + 2] = value.to_bytes(2, "little")
        p.write_bytes(bytes(raw))
        return p

    def test_stereo_rejected(self, tmp_path):
        # channel count lives at byte 22 of the canonical header
        p = self._patched(tmp_path, 22, 2)
        with pytest.raises(ChannelCountMismatch):
            load_wav(p)

    def test_non_pcm_rejected(self, tmp_path):
        p = self._patched(tmp_path, 20, 3)  # IEEE float tag
        with pytest.raises(EncodingMismatch):
            load_wav(p)

    def test_8bit_rejected(self, tmp_path):
        p = self._patched(tmp_path, 34, 8)
        with pytest.raises(EncodingMismatch):
            load_wav(p)

    def test_not_riff_rejected(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"OggS" + b"\x00" * 64)
        with pytest.raises(WavFormatError):
            load_wav(p)

    def test_unknown_chunks_skipped(self, tmp_path):
        p = tmp_path / "x.wav"
        save_wav(p, np.full(50, 0.25))
        raw = p.read_bytes()
        # splice a LIST chunk between the header and the fmt chunk
        inject = b"LIST" + (8).to_bytes(4, "little") + b"INFOdata"
        p.write_bytes(raw[:12] + inject + raw[12:])
        w = load_wav(p)
        assert len(w) == 50
        np.testing.assert_allclose(w.samples, 0.25, atol=1.0 / 32768)


class TestNormalize:
    def test_two_point_case(self):
        w = normalize_waveform(Waveform(np.array([0.5, -0.5])))
        np.testing.assert_allclose(w.samples, [1.0, -1.0], atol=1e-7)

    def test_constant_becomes_silence(self):
        w = normalize_waveform(Waveform(np.array([0.3, 0.3])))
        np.testing.assert_allclose(w.samples, [0.0, 0.0])

    def test_random_vector_zero_mean_unit_peak(self):
        rng = np.random.default_rng(3)
        w = normalize_waveform(Waveform(rng.uniform(-0.2, 0.7, 4096)))
        assert abs(w.samples.mean()) <= 1e-7
        assert np.abs(w.samples).max() == pytest.approx(1.0, abs=1e-6)


class TestFraming:
    def test_one_second_gives_98_frames(self):
        assert FrameSpec().frame_count(8000) == 98

    def test_formula_over_random_lengths(self):
        spec = FrameSpec()
        rng = np.random.default_rng(11)
        for n in rng.integers(200, 80001, size=1000):
            n = int(n)
            expected = (n - 200) // 80 + 1
            assert spec.frame_count(n) == expected
            assert audio.frame_signal(np.zeros(n), spec).shape == (expected, 200)

    def test_too_short_raises(self):
        with pytest.raises(AudioTooShort):
            log_filterbank(Waveform(np.zeros(199)))

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            FrameSpec(window_length=300, hop=80, fft_size=256)
        with pytest.raises(ValueError):
            FrameSpec(window_length=200, hop=0)


class TestFilterBank:
    def test_shape_and_peaks(self):
        fb = linear_filterbank()
        assert fb.weights.shape == (80, 129)
        assert (fb.weights >= 0).all()
        np.testing.assert_allclose(fb.weights.max(axis=1), 1.0, atol=1e-6)

    def test_centers_strictly_increasing_and_linear(self):
        fb = linear_filterbank()
        assert (np.diff(fb.centers) > 0).all()
        steps = np.diff(fb.centers)
        np.testing.assert_allclose(steps, steps[0], atol=1e-9)
        assert fb.centers[0] == pytest.approx(4000 / 81)
        assert fb.centers[-1] == pytest.approx(4000 * 80 / 81)

    def test_adjacent_triangles_meet_at_neighbor_center(self):
        # filter i's support must end where filter i+1 peaks
        fb = linear_filterbank(channels=8)
        bin_freqs = np.arange(129) * 8000 / 256
        for i in range(7):
            support = bin_freqs[fb.weights[i] > 0]
            assert support.max() < fb.centers[i + 1] + 1e-9


class TestLogFilterbank:
    def test_zero_waveform_hits_floor(self):
        feats = log_filterbank(Waveform(np.zeros(8000)))
        assert feats.shape == (98, 80)
        np.testing.assert_allclose(feats, np.log(1e-10), atol=1e-5)

    def test_floor_is_global_minimum(self):
        rng = np.random.default_rng(0)
        feats = log_filterbank(Waveform(rng.uniform(-1, 1, 4000)))
        assert (feats >= np.log(1e-10) - 1e-6).all()

    def test_1khz_sine_peaks_at_nearest_center(self):
        t = np.arange(8000) / 8000.0
        w = Waveform(0.8 * np.sin(2 * np.pi * 1000.0 * t))
        feats = log_filterbank(w)
        centers = linear_filterbank().centers
        expected = int(np.argmin(np.abs(centers - 1000.0)))
        assert (feats.argmax(axis=1) == expected).all()

    def test_amplitude_scaling_is_monotone(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-0.4, 0.4, 3000)
        f1 = log_filterbank(Waveform(x))
        f2 = log_filterbank(Waveform(2.0 * x))
        assert (f2 >= f1 - 1e-5).all()

    def test_white_noise_energy_tracks_window_energy(self):
        spec = FrameSpec()
        rng = np.random.default_rng(9)
        ratios = []
        for _ in range(100):
            amp = rng.uniform(0.05, 0.9)
            x = rng.uniform(-amp, amp, 2000)
            feats = log_filterbank(Waveform(x), spec)
            fb_energy = np.exp(feats.astype(np.float64)).sum()
            frames = audio.frame_signal(x, spec) * np.hamming(200)
            win_energy = (frames ** 2).sum()
            ratios.append(fb_energy / win_energy)
        ratios = np.array(ratios)
        assert (np.abs(ratios / np.median(ratios) - 1.0) <= 0.10).all()


def test_mean_variance_normalize():
    rng = np.random.default_rng(1)
    feats = rng.normal(3.0, 2.0, (50, 80)).astype(np.float32)
    out = audio.mean_variance_normalize(feats)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-5)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-3)
