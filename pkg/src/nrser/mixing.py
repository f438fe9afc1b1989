"""Additive noise mixing at exact SNR and mixture-corpus synthesis.

SNR is defined on full-utterance RMS: ``20*log10(rms(speech) / rms(noise))``.
Randomness comes from numpy's PCG64 generator; each record derives its own
seed from ``SeedSequence([corpus_seed, record_index])`` so results do not
depend on processing order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np

from .audio_io import TARGET_RATE, Waveform, load_audio, write_wav
from .dsp import rms
from .manifest import ManifestRecord, MixSpec

log = logging.getLogger(__name__)

TRAIN_SNRS = (6.0, 10.0, 14.0)
TEST_SNRS = (8.0, 12.0)
PEAK_TARGET = 0.99


class ZeroEnergyError(ValueError):
    pass


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(seed: int, *keys: int) -> int:
    """Stable 63-bit child seed for ``(seed, *keys)``."""
    state = np.random.SeedSequence([int(seed) & (2**63 - 1), *map(int, keys)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 32 | int(state[1])) & (2**63 - 1))


def snr_db(signal, noise) -> float:
    return 20.0 * np.log10(rms(signal) / rms(noise))


def noise_gain(speech, noise, target_snr_db: float) -> float:
    rs, rn = rms(speech), rms(noise)
    if rs <= 0.0:
        raise ZeroEnergyError("speech has zero energy")
    if rn <= 0.0:
        raise ZeroEnergyError("noise has zero energy")
    return (rs / rn) * 10.0 ** (-target_snr_db / 20.0)


def fit_length(noise: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Loop a short noise or take a random crop of a long one."""
    if noise.size == n:
        return noise.copy()
    if noise.size < n:
        return np.resize(noise, n)
    start = int(rng.integers(0, noise.size - n + 1))
    return noise[start : start + n].copy()


@dataclass
class MixResult:
    mixture: Waveform
    speech: np.ndarray  # speech addend as present in the mixture
    noise: np.ndarray  # scaled noise addend as present in the mixture

    @property
    def measured_snr_db(self) -> float:
        return snr_db(self.speech, self.noise)


def mix_components(speech: Waveform, noise: Waveform, spec: MixSpec) -> MixResult:
    for w in (speech, noise):
        if w.sample_rate != TARGET_RATE:
            raise ValueError(f"mixing expects {TARGET_RATE} Hz inputs, got {w.sample_rate}")
    rng = make_rng(spec.seed)
    s = speech.samples
    n = fit_length(noise.samples, s.size, rng)
    n = n * noise_gain(s, n, spec.target_snr_db)
    y = s + n
    peak = float(np.max(np.abs(y)))
    if peak > 1.0:
        k = PEAK_TARGET / peak
        s, n, y = s * k, n * k, y * k
    return MixResult(Waveform(y, TARGET_RATE), s, n)


def mix(speech: Waveform, noise: Waveform, spec: MixSpec) -> Waveform:
    return mix_components(speech, noise, spec).mixture


def mixture_name(speech_path: str, noise_path: str, snr: float) -> str:
    return f"{Path(speech_path).stem}__{Path(noise_path).stem}__snr{snr:g}.wav"


def synthesize_corpus(
    speech: Sequence[ManifestRecord],
    noise: Sequence[ManifestRecord],
    snr_levels: Sequence[float],
    seed: int,
    out_dir,
    match_split: bool = True,
    jobs: int = 1,
) -> List[ManifestRecord]:
    """Mix every speech record with one random noise record at a random level.

    With ``match_split`` the noise is drawn from records of the same split
    when any exist, so train/val/test noise pools stay disjoint.
    """
    if not speech:
        raise ValueError("speech manifest is empty")
    if not noise:
        raise ValueError("noise manifest is empty")
    if not snr_levels:
        raise ValueError("no SNR levels given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def plan(i: int, rec: ManifestRecord):
        pool = list(noise)
        if match_split:
            same = [r for r in noise if r.split == rec.split]
            pool = same or pool
        rec_seed = derive_seed(seed, i)
        rng = make_rng(rec_seed)
        nrec = pool[int(rng.integers(len(pool)))]
        level = float(snr_levels[int(rng.integers(len(snr_levels)))])
        mix_seed = int(rng.integers(0, 2**63 - 1))
        return nrec, level, mix_seed

    def work(i: int):
        rec = speech[i]
        nrec, level, mix_seed = plan(i, rec)
        spec = MixSpec(level, nrec.path, mix_seed)
        result = mix_components(load_audio(rec.path), load_audio(nrec.path), spec)
        path = out_dir / mixture_name(rec.path, nrec.path, level)
        write_wav(result.mixture, path, "float32")
        return ManifestRecord(str(path), rec.split, "mixture", rec.labels, spec)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(work, range(len(speech))))
    return [work(i) for i in range(len(speech))]


def load_mixture_addends(rec: ManifestRecord, speech_path: str) -> Tuple[np.ndarray, np.ndarray]:
    """Recreate the exact speech/noise addends of a stored mixture record."""
    result = mix_components(load_audio(speech_path), load_audio(rec.mix.noise_ref), rec.mix)
    return result.speech, result.noise
