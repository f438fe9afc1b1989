"""Synthetic desk-scale corpus: pseudo-speech with emotion labels, plus noise.

Pseudo-speech is a harmonic series (pitch 80-300 Hz) shaped by a formant
envelope and amplitude-modulated at a syllabic rate, with short pauses at
the edges and between phrases. Every category has its own prototype of
formants, pitch, modulation and spectral tilt; attributes are read off the
per-utterance parameters:

    arousal   <- modulation depth and rate
    valence   <- pitch height
    dominance <- spectral tilt (flatter = more dominant)

The semantics are arbitrary. They only need to be learnable.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .audio_io import TARGET_RATE, Waveform, write_wav
from .manifest import EmotionLabel, ManifestRecord, N_CATEGORIES, write_manifest
from .mixing import derive_seed, make_rng

SR = TARGET_RATE
SPEECH_DURATION = (1.0, 1.5)
NOISE_DURATION = (1.0, 2.5)
NOISE_KINDS = ("white", "pink", "babble")
RECORDING_SNR_DB = (20.0, 35.0)
UNVOICED_LEVEL = 1.0  # relative to the voiced part


@dataclass(frozen=True)
class Prototype:
    pitch: float  # Hz
    formants: Tuple[float, float, float]  # Hz
    mod_rate: float  # Hz
    mod_depth: float  # 0..1
    tilt: float  # dB per kHz


# ten categories, vowel-like formant sets spread over the F1/F2 plane
PROTOTYPES = (
    Prototype(110.0, (300.0, 870.0, 2240.0), 3.0, 0.35, -4.5),
    Prototype(240.0, (270.0, 2290.0, 3010.0), 6.5, 0.85, -1.5),
    Prototype(150.0, (390.0, 1990.0, 2550.0), 4.0, 0.55, -3.0),
    Prototype(200.0, (530.0, 1840.0, 2480.0), 7.0, 0.90, -1.0),
    Prototype(95.0, (660.0, 1720.0, 2410.0), 2.5, 0.30, -5.0),
    Prototype(270.0, (730.0, 1090.0, 2440.0), 5.5, 0.75, -2.0),
    Prototype(130.0, (570.0, 840.0, 2410.0), 3.5, 0.45, -4.0),
    Prototype(180.0, (440.0, 1020.0, 2240.0), 5.0, 0.65, -2.5),
    Prototype(220.0, (490.0, 1350.0, 1690.0), 6.0, 0.70, -3.5),
    Prototype(160.0, (350.0, 1500.0, 3300.0), 4.5, 0.50, -2.0),
)
assert len(PROTOTYPES) == N_CATEGORIES


def _label(pitch, mod_depth, mod_rate, tilt, category) -> EmotionLabel:
    arousal = 1.0 + 6.0 * np.clip(0.75 * mod_depth + 0.25 * (mod_rate - 2.0) / 6.0, 0.0, 1.0)
    valence = 1.0 + 6.0 * np.clip((pitch - 80.0) / 220.0, 0.0, 1.0)
    dominance = 1.0 + 6.0 * np.clip((tilt + 6.0) / 5.5, 0.0, 1.0)
    return EmotionLabel(int(category), float(arousal), float(valence), float(dominance))


def _envelope(freqs: np.ndarray, formants, tilt: float) -> np.ndarray:
    env = np.full_like(freqs, 0.03)
    for k, f in enumerate(formants):
        bw = 80.0 + 0.06 * f
        env += (1.0 / (k + 1)) * np.exp(-0.5 * ((freqs - f) / bw) ** 2)
    return env * 10.0 ** (tilt * freqs / 1000.0 / 20.0)


def _voice(rng, n, pitch, formants, tilt, vibrato=0.04):
    t = np.arange(n) / SR
    f0 = pitch * (1.0 + vibrato * np.sin(2 * np.pi * rng.uniform(2.0, 5.0) * t + rng.uniform(0, 2 * np.pi)))
    f0 *= 1.0 + 0.06 * np.linspace(-1.0, 1.0, n) * rng.uniform(-1.0, 1.0)  # declination
    phase = 2 * np.pi * np.cumsum(f0) / SR
    n_harm = int(7600.0 // (pitch * (1.0 + vibrato + 0.06)))
    k = np.arange(1, n_harm + 1)
    amps = _envelope(k * pitch, formants, tilt)
    offsets = rng.uniform(0, 2 * np.pi, n_harm)
    return amps @ np.sin(k[:, None] * phase[None, :] + offsets[:, None])


def _unvoiced(rng, n, formants):
    """Breath/frication: noise shaped by the formants plus a 3-7 kHz band."""
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / SR)
    shape = _envelope(freqs, formants, -0.5) + 0.5 * np.exp(-0.5 * ((freqs - 5000.0) / 1500.0) ** 2)
    y = np.fft.irfft(spec * shape, n)
    return y / np.sqrt(np.mean(y ** 2))


def _raised_cosine_gate(rng, n, mod_rate, mod_depth):
    t = np.arange(n) / SR
    syll = (1.0 - mod_depth) + mod_depth * 0.5 * (1.0 - np.cos(2 * np.pi * mod_rate * t + rng.uniform(0, 2 * np.pi)))
    gate = np.ones(n)
    fade = int(0.02 * SR)
    ramp = 0.5 * (1.0 - np.cos(np.linspace(0, np.pi, fade)))
    lead, trail = int(rng.uniform(0.08, 0.15) * SR), int(rng.uniform(0.08, 0.15) * SR)
    gate[:lead] = 0.0
    gate[lead : lead + fade] = ramp
    gate[n - trail :] = 0.0
    gate[n - trail - fade : n - trail] = ramp[::-1]
    # one phrase break
    mid = int(rng.uniform(0.4, 0.6) * n)
    gap = int(rng.uniform(0.05, 0.1) * SR)
    gate[mid : mid + gap] = 0.0
    gate[mid - fade : mid] *= ramp[::-1]
    gate[mid + gap : mid + gap + fade] *= ramp
    return syll * gate


def synth_speech(rng: np.random.Generator, category: int, duration: float) -> Tuple[np.ndarray, EmotionLabel]:
    proto = PROTOTYPES[category]
    n = int(duration * SR)
    pitch = float(np.clip(proto.pitch * rng.uniform(0.9, 1.1), 80.0, 300.0))
    formants = tuple(f * rng.uniform(0.95, 1.05) for f in proto.formants)
    mod_rate = float(np.clip(proto.mod_rate + rng.uniform(-0.75, 0.75), 2.0, 8.0))
    mod_depth = float(np.clip(proto.mod_depth + rng.uniform(-0.1, 0.1), 0.1, 0.95))
    tilt = float(proto.tilt + rng.uniform(-0.5, 0.5))
    voiced = _voice(rng, n, pitch, formants, tilt)
    voiced /= np.sqrt(np.mean(voiced ** 2))
    y = (voiced + UNVOICED_LEVEL * _unvoiced(rng, n, formants)) * _raised_cosine_gate(rng, n, mod_rate, mod_depth)
    y *= rng.uniform(0.05, 0.12) / np.sqrt(np.mean(y ** 2))
    # room tone, so "clean" behaves like an ordinary recording rather than a pristine one
    floor = _unit(synth_noise(rng, "pink", n)) + _unit(synth_noise(rng, "white", n))
    y += floor * np.sqrt(np.mean(y ** 2)) / np.sqrt(np.mean(floor ** 2)) * 10.0 ** (-rng.uniform(*RECORDING_SNR_DB) / 20.0)
    return y, _label(pitch, mod_depth, mod_rate, tilt, category)


def synth_noise(rng: np.random.Generator, kind: str, n: int) -> np.ndarray:
    if kind == "white":
        y = rng.standard_normal(n)
    elif kind == "pink":
        spec = np.fft.rfft(rng.standard_normal(n))
        f = np.arange(spec.size, dtype=np.float64)
        f[0] = 1.0
        y = np.fft.irfft(spec / np.sqrt(f), n)
    elif kind == "babble":
        # a few distinct talkers over a speech-shaped noise bed
        t = np.arange(n) / SR
        spec = np.fft.rfft(rng.standard_normal(n))
        freqs = np.fft.rfftfreq(n, 1.0 / SR)
        bed = np.fft.irfft(spec * _envelope(freqs, (500.0, 1500.0, 2500.0), -3.0), n)
        y = bed / np.sqrt(np.mean(bed ** 2))
        for _ in range(int(rng.integers(3, 6))):
            proto = PROTOTYPES[int(rng.integers(N_CATEGORIES))]
            v = _voice(rng, n, proto.pitch * rng.uniform(0.85, 1.15), proto.formants, proto.tilt)
            am = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
            y += 0.5 * v * am / np.sqrt(np.mean(v ** 2))
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    return y * rng.uniform(0.02, 0.15) / np.sqrt(np.mean(y ** 2))


def _unit(y):
    return y / np.sqrt(np.mean(y ** 2))


def _split_for(j: int) -> str:
    # 3:1:1 train/val/test, interleaved so every class and noise type is in every split
    return ("train", "train", "train", "val", "test")[j % 5]


def generate_synthetic_desk_data(
    out_dir,
    seed: int,
    n_speech: int = 200,
    n_noise: int = 100,
    split: str = None,
) -> Tuple[List[ManifestRecord], List[ManifestRecord]]:
    """Write pseudo-speech and noise WAVs plus ``speech.jsonl``/``noise.jsonl``.

    ``split`` forces every record into one split (e.g. ``"test"`` for a
    held-out set); by default records are spread 3:1:1 over train/val/test.
    """
    out_dir = Path(out_dir)
    (out_dir / "speech").mkdir(parents=True, exist_ok=True)
    (out_dir / "noise").mkdir(parents=True, exist_ok=True)

    speech = []
    for i in range(n_speech):
        category = i % N_CATEGORIES
        rng = make_rng(derive_seed(seed, 0, i))
        y, label = synth_speech(rng, category, rng.uniform(*SPEECH_DURATION))
        path = out_dir / "speech" / f"speech_{i:04d}.wav"
        write_wav(Waveform(y, SR), path, "float32")
        speech.append(ManifestRecord(str(path), split or _split_for(i // N_CATEGORIES), "speech", label))

    noise = []
    for i in range(n_noise):
        kind = NOISE_KINDS[i % len(NOISE_KINDS)]
        rng = make_rng(derive_seed(seed, 1, i))
        y = synth_noise(rng, kind, int(rng.uniform(*NOISE_DURATION) * SR))
        path = out_dir / "noise" / f"noise_{kind}_{i:04d}.wav"
        write_wav(Waveform(y, SR), path, "float32")
        noise.append(ManifestRecord(str(path), split or _split_for(i // len(NOISE_KINDS)), "noise"))

    write_manifest(speech, out_dir / "speech.jsonl")
    write_manifest(noise, out_dir / "noise.jsonl")
    return speech, noise
