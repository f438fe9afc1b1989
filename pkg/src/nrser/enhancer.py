"""Speech enhancement front-end.

Two classical enhancers (magnitude spectral subtraction and a decision-directed
Wiener filter) plus a file-based adapter for enhanced audio produced by any
external model. The enhancer is stateless: nothing here is trained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .audio_io import Waveform, load_audio
from .dsp import Spectrogram, istft, stft

KINDS = ("spectral_subtraction", "wiener", "external")
DD_SMOOTHING = 0.98


class ExternalEnhancementError(RuntimeError):
    pass


@dataclass(frozen=True)
class EnhancerConfig:
    kind: str = "spectral_subtraction"
    alpha: float = 1.0  # over-subtraction
    beta: float = 0.02  # spectral floor
    noise_quantile: float = 0.10
    external_dir: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown enhancer kind {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.noise_quantile < 0.5:
            raise ValueError("noise_quantile must lie in (0, 0.5)")
        if self.kind == "external" and not self.external_dir:
            raise ValueError("external enhancer needs external_dir")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "alpha": self.alpha,
            "beta": self.beta,
            "noise_quantile": self.noise_quantile,
            "external_dir": self.external_dir,
        }


def estimate_noise_profile(mag: np.ndarray, q: float = 0.10) -> np.ndarray:
    """Per-bin mean magnitude over the ceil(q*T) lowest-energy frames."""
    mag = np.asarray(mag, dtype=np.float64)
    n_frames = mag.shape[0]
    if n_frames < 5:
        raise ValueError(f"need at least 5 frames to estimate noise, got {n_frames}")
    k = max(1, math.ceil(q * n_frames))
    energy = np.sum(mag * mag, axis=1)
    quietest = np.argsort(energy, kind="stable")[:k]
    return mag[quietest].mean(axis=0)


def _with_magnitude(s: Spectrogram, mag: np.ndarray, new_mag: np.ndarray) -> Spectrogram:
    ratio = np.divide(new_mag, mag, out=np.zeros_like(mag), where=mag > 0)
    return Spectrogram(s.frames * ratio, s.source_len, s.config)


def spectral_subtraction(s: Spectrogram, cfg: EnhancerConfig) -> Spectrogram:
    mag = np.abs(s.frames)
    profile = estimate_noise_profile(mag, cfg.noise_quantile)
    enhanced = np.maximum(mag - cfg.alpha * profile[None, :], cfg.beta * mag)
    return _with_magnitude(s, mag, enhanced)


def wiener(s: Spectrogram, cfg: EnhancerConfig) -> Spectrogram:
    """Decision-directed Wiener gain ``xi / (1 + xi)``, floored at ``beta``."""
    mag = np.abs(s.frames)
    noise_pow = (cfg.alpha * estimate_noise_profile(mag, cfg.noise_quantile)) ** 2
    safe = noise_pow > 0
    lam = np.where(safe, noise_pow, 1.0)
    gains = np.ones_like(mag)
    prev_clean = np.zeros(mag.shape[1])
    for t in range(mag.shape[0]):
        post = mag[t] ** 2 / lam
        prio = DD_SMOOTHING * prev_clean / lam + (1 - DD_SMOOTHING) * np.maximum(post - 1.0, 0.0)
        g = np.where(safe, np.maximum(prio / (1.0 + prio), cfg.beta), 1.0)
        gains[t] = g
        prev_clean = (g * mag[t]) ** 2
    return _with_magnitude(s, mag, gains * mag)


def external(s: Spectrogram, cfg: EnhancerConfig, utterance_id: Optional[str]) -> Spectrogram:
    if utterance_id is None:
        raise ExternalEnhancementError("external enhancer needs the utterance id")
    path = Path(cfg.external_dir) / f"{utterance_id}.wav"
    if not path.is_file():
        raise ExternalEnhancementError(f"no enhanced audio for {utterance_id!r} at {path}")
    w = load_audio(path)
    if len(w) != s.source_len:
        raise ExternalEnhancementError(
            f"{path}: length {len(w)} does not match the input length {s.source_len}"
        )
    out = stft(w, s.config)
    if out.shape != s.shape:
        raise ExternalEnhancementError(f"{path}: spectrogram shape {out.shape} != {s.shape}")
    return out


def enhance(s: Spectrogram, cfg: EnhancerConfig = EnhancerConfig(), utterance_id: Optional[str] = None) -> Spectrogram:
    if cfg.kind == "spectral_subtraction":
        return spectral_subtraction(s, cfg)
    if cfg.kind == "wiener":
        return wiener(s, cfg)
    return external(s, cfg, utterance_id)


def enhance_waveform(
    w: Waveform, cfg: EnhancerConfig = EnhancerConfig(), utterance_id: Optional[str] = None
) -> Tuple[Waveform, Spectrogram, Spectrogram]:
    """Return ``(enhanced waveform, original spectrogram, enhanced spectrogram)``.

    Spectrograms with fewer than 5 frames (inputs under 400 samples) are
    passed through unchanged, since no noise estimate is possible.
    """
    s_orig = stft(w)
    if s_orig.n_frames < 5 and cfg.kind != "external":
        s_enh = Spectrogram(s_orig.frames.copy(), s_orig.source_len, s_orig.config)
    else:
        s_enh = enhance(s_orig, cfg, utterance_id)
    return istft(s_enh), s_orig, s_enh
