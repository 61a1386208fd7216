"""Grammar-driven synthetic corpus: ICAO-styled transcripts plus
role-conditioned tone-complex audio.

Controllers open with the callsign, pilots close with it; a configurable
fraction of utterances break that rule (dropped or reordered callsign) and a
fraction of dev/test utterances substitute held-out airline/waypoint tokens
that the training vocabulary can never contain.  Audio renders each token as
a short harmonic complex and then applies a role-specific channel: the
controller channel carries extra 3-4 kHz energy and a slowly modulated noise
floor, the pilot channel a flat noise floor and a high-frequency roll-off.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import SAMPLE_RATE, Waveform, save_wav
from .text import tokenize

ROLES = ("atco", "pilot")
ROLE_TO_LABEL = {"atco": 0, "pilot": 1}

DIGITS = ("zero", "one", "two", "three", "four", "five",
          "six", "seven", "eight", "nine")

AIRLINES = ("air china", "china eastern", "china southern", "hainan",
            "shenzhen", "xiamen", "sichuan", "juneyao", "spring",
            "lucky air", "west air", "tibet")
OOV_AIRLINES = ("loong air", "okay airways", "donghai", "genghis")

WAYPOINTS = ("akube", "bonsa", "dogar", "elkur", "fagon", "gulot",
             "hirba", "ikela", "jasto", "kumin", "lepki", "mosur")
OOV_WAYPOINTS = ("nubri", "oskad", "pirul", "quvek")

ALTITUDES = ("six thousand meters", "six thousand nine hundred meters",
             "seven thousand eight hundred meters", "eight thousand one hundred meters",
             "eight thousand nine hundred meters", "nine thousand two hundred meters",
             "nine thousand eight hundred meters", "one zero four hundred meters")

FACILITIES = ("tower", "approach", "departure", "control")

CJK_AIRLINES = ("国航", "东方", "南方", "海南")
CJK_DIGITS = ("洞", "幺", "两", "三", "四", "五", "六", "拐", "八", "九")
CJK_COMMANDS = ("上升到八千一百米保持", "下降到六千米保持", "联系区域管制", "直飞航路点")


@dataclass
class PhraseGrammar:
    airlines: tuple = AIRLINES
    oov_airlines: tuple = OOV_AIRLINES
    waypoints: tuple = WAYPOINTS
    oov_waypoints: tuple = OOV_WAYPOINTS

    def callsign(self, rng, oov=False):
        pool = self.oov_airlines if oov else self.airlines
        airline = pool[rng.integers(len(pool))]
        digits = " ".join(DIGITS[rng.integers(10)] for _ in range(4))
        return f"{airline} {digits}"

    def command(self, rng, oov=False):
        if oov:  # held-out waypoint: the unseen-token case lives here
            return f"direct to {self.oov_waypoints[rng.integers(len(self.oov_waypoints))]}"
        kind = rng.integers(6)
        if kind == 0:
            return f"climb to {ALTITUDES[rng.integers(len(ALTITUDES))]}"
        if kind == 1:
            verb = "descend to" if rng.integers(2) else "descend maintain"
            return f"{verb} {ALTITUDES[rng.integers(len(ALTITUDES))]}"
        if kind == 2:
            side = "left" if rng.integers(2) else "right"
            heading = " ".join(DIGITS[rng.integers(10)] for _ in range(3))
            return f"turn {side} heading {heading}"
        if kind == 3:
            return f"direct to {self.waypoints[rng.integers(len(self.waypoints))]}"
        if kind == 4:
            freq = " ".join(DIGITS[rng.integers(10)] for _ in range(3))
            return f"contact {FACILITIES[rng.integers(len(FACILITIES))]} one {freq}"
        return f"maintain {ALTITUDES[rng.integers(len(ALTITUDES))]}"

    def starts_with_callsign(self, transcript: str) -> bool:
        first = " ".join(transcript.split()[:2]).lower()
        pools = self.airlines + self.oov_airlines
        return any(first.startswith(a) for a in pools)


class CJKGrammar(PhraseGrammar):
    """Chinese-token variant; exercises the per-character tokenizer path."""

    def callsign(self, rng, oov=False):
        airline = CJK_AIRLINES[rng.integers(len(CJK_AIRLINES))]
        digits = "".join(CJK_DIGITS[rng.integers(10)] for _ in range(4))
        return airline + digits

    def command(self, rng, oov=False):
        return CJK_COMMANDS[rng.integers(len(CJK_COMMANDS))]

    def starts_with_callsign(self, transcript):
        return any(transcript.startswith(a) for a in CJK_AIRLINES)


def generate_transcript(role, grammar, rng, dfg_rate=0.0, oov_rate=0.0,
                        force_dfg=None, force_oov=None):
    """One utterance; returns (text, dfg_flag, oov_flag).

    A DFG utterance either drops the callsign entirely or places it on the
    wrong side for the role; an OOV utterance draws a held-out airline or
    waypoint.
    """
    dfg = bool(force_dfg) if force_dfg is not None else bool(rng.random() < dfg_rate)
    oov = bool(force_oov) if force_oov is not None else bool(rng.random() < oov_rate)

    oov_in_callsign = bool(oov and rng.integers(2))
    callsign = grammar.callsign(rng, oov=oov_in_callsign)
    command = grammar.command(rng, oov=oov and not oov_in_callsign)

    if dfg:
        if rng.integers(2):
            text = command  # callsign-less readback
        else:
            # reversed ordering: the role speaks like its counterpart
            text = (f"{command} {callsign}" if role == "atco"
                    else f"{callsign} {command}")
    else:
        text = (f"{callsign} {command}" if role == "atco"
                else f"{command} {callsign}")
    return text, dfg, oov


# -- audio rendering ------------------------------------------------------------

@dataclass
class ChannelProfile:
    role: str
    high_band_gain: float      # relative level of the 3-4 kHz emphasis
    tilt: float                # first-order pre-emphasis (+) or de-emphasis (-)
    noise_time_varying: bool
    snr_db_range: tuple = (8.0, 18.0)


PROFILES = {
    "atco": ChannelProfile("atco", high_band_gain=0.5, tilt=0.4,
                           noise_time_varying=True, snr_db_range=(8.0, 18.0)),
    "pilot": ChannelProfile("pilot", high_band_gain=0.0, tilt=-0.5,
                            noise_time_varying=False, snr_db_range=(6.0, 15.0)),
}

TOKEN_SECONDS = 0.12
JITTER_SECONDS = 0.015


def _token_f0(token: str) -> float:
    return 120.0 + (zlib.crc32(token.encode("utf-8")) % 181)


def _tone_segment(token, rng):
    dur = TOKEN_SECONDS + rng.uniform(-JITTER_SECONDS, JITTER_SECONDS)
    n = max(1, int(round(dur * SAMPLE_RATE)))
    t = np.arange(n) / SAMPLE_RATE
    f0 = _token_f0(token)
    seg = np.zeros(n)
    k = 1
    while k * f0 < 3400.0:
        seg += np.sin(2 * np.pi * k * f0 * t + rng.uniform(0, 2 * np.pi)) / k
        k += 1
    fade = min(40, n // 4)
    if fade:
        ramp = np.linspace(0.0, 1.0, fade)
        seg[:fade] *= ramp
        seg[-fade:] *= ramp[::-1]
    return seg


def _lowpass_kernel(cutoff_hz, taps=9):
    n = np.arange(taps) - (taps - 1) / 2
    h = 2 * cutoff_hz / SAMPLE_RATE * np.sinc(2 * cutoff_hz / SAMPLE_RATE * n)
    h *= np.hamming(taps)
    return h / h.sum()


_PILOT_LOWPASS = _lowpass_kernel(2200.0)


def _apply_channel(speech, profile, rng):
    shaped = speech.copy()
    if profile.tilt > 0:  # pre-emphasis boosts the high band
        shaped[1:] = shaped[1:] - profile.tilt * shaped[:-1]
    else:  # FIR roll-off above ~2 kHz
        shaped = np.convolve(shaped, _PILOT_LOWPASS, mode="same")
    if profile.high_band_gain > 0:
        t = np.arange(len(shaped)) / SAMPLE_RATE
        carrier = np.sin(2 * np.pi * 3500.0 * t + rng.uniform(0, 2 * np.pi))
        envelope = np.abs(shaped) + 0.1
        rms = np.sqrt((shaped ** 2).mean()) or 1.0
        band = carrier * envelope
        band *= rms / (np.sqrt((band ** 2).mean()) + 1e-12)
        shaped = shaped + profile.high_band_gain * band
    return shaped


def _noise_floor(n, profile, rng):
    noise = rng.uniform(-1.0, 1.0, n)
    if profile.noise_time_varying:
        t = np.arange(n) / SAMPLE_RATE
        rate = rng.uniform(1.0, 3.0)
        noise *= 0.5 + 0.5 * np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi))
    else:
        # the flat-level cockpit floor is spectrally low-heavy
        noise = np.convolve(noise, _PILOT_LOWPASS, mode="same")
    return noise


def synth_speech(transcript, role, rng, profile=None, swap_channel=False):
    """Render a transcript as role-shaped tone-complex audio at 8 kHz."""
    effective = role
    if swap_channel:
        effective = "pilot" if role == "atco" else "atco"
    profile = profile or PROFILES[effective]
    segments = [_tone_segment(tok, rng) for tok in tokenize(transcript)]
    speech = np.concatenate(segments)
    shaped = _apply_channel(speech, profile, rng)

    snr_db = rng.uniform(*profile.snr_db_range)
    noise = _noise_floor(len(shaped), profile, rng)
    sig_rms = np.sqrt((shaped ** 2).mean()) or 1.0
    noise_rms = np.sqrt((noise ** 2).mean()) or 1.0
    noise *= sig_rms / (noise_rms * 10.0 ** (snr_db / 20.0))
    mixed = shaped + noise
    mixed *= 0.95 / (np.abs(mixed).max() or 1.0)
    return Waveform(mixed.astype(np.float32), SAMPLE_RATE)


# -- corpus assembly ------------------------------------------------------------

@dataclass
class SynthConfig:
    out_dir: Path
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 400
    pilot_fraction: float = 0.582
    dfg_rate: float = 0.1
    oov_rate: float = 0.05
    channel_swap_rate: float = 0.0
    seed: int = 42
    cjk: bool = False

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        for name in ("pilot_fraction", "dfg_rate", "oov_rate", "channel_swap_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        for name in ("n_train", "n_dev", "n_test"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


SPLITS = ("train", "dev", "test")


def _quota_flags(n, rate, rng):
    flags = np.zeros(n, dtype=bool)
    flags[: int(round(n * rate))] = True
    rng.shuffle(flags)
    return flags


def generate_corpus(config: SynthConfig, write_audio=True):
    """Write train/dev/test JSONL manifests and a wav/ directory.

    Role, DFG and OOV assignments are exact quotas shuffled per split, so the
    realized rates match the configured ones as closely as rounding allows.
    OOV substitution is confined to dev/test: held-out tokens must never
    enter the training vocabulary.
    """
    out = Path(config.out_dir)
    wav_dir = out / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    grammar = CJKGrammar() if config.cjk else PhraseGrammar()

    counts = {"train": config.n_train, "dev": config.n_dev, "test": config.n_test}
    manifests = {}
    for split_id, split in enumerate(SPLITS):
        n = counts[split]
        split_rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, split_id)))
        roles = np.array(["pilot"] * int(round(n * config.pilot_fraction))
                         + ["atco"] * (n - int(round(n * config.pilot_fraction))))
        split_rng.shuffle(roles)
        dfg_flags = _quota_flags(n, config.dfg_rate, split_rng)
        oov_flags = (_quota_flags(n, config.oov_rate, split_rng)
                     if split != "train" else np.zeros(n, dtype=bool))

        rows = []
        for i in range(n):
            utt_rng = np.random.default_rng(
                np.random.SeedSequence((config.seed, split_id, i)))
            role = str(roles[i])
            text, dfg, oov = generate_transcript(
                role, grammar, utt_rng,
                force_dfg=bool(dfg_flags[i]), force_oov=bool(oov_flags[i]))
            rel = f"wav/{split}_{i:05d}.wav"
            swap = bool(utt_rng.random() < config.channel_swap_rate)
            if write_audio:
                wave = synth_speech(text, role, utt_rng, swap_channel=swap)
                save_wav(out / rel, wave.samples)
            rows.append({"audio": rel, "text": text, "role": role,
                         "dfg": bool(dfg), "oov": bool(oov)})
        manifest_path = out / f"{split}.jsonl"
        with open(manifest_path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        manifests[split] = manifest_path
    return manifests
