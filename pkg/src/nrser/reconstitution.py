"""Waveform reconstitution and noise-only gating.

``w_re = w_in * S' + w_en * (1 - S')`` with ``S' = clamp(S, 0, 1)``. A clean
input (S' = 1) reaches the emotion block untouched; a pure-noise input gets
only the enhanced signal, and is gated when the raw score falls below the
threshold.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .audio_io import Waveform
from .manifest import atomic_write_text
from .snr_detector import DEFAULT_THRESHOLD, NOISE_ONLY, SnrScore, classify_noise_only, clamp


@dataclass
class ReconstitutionResult:
    w_re: Waveform
    s_prime: float
    gated: bool


def blend(w_in: np.ndarray, w_en: np.ndarray, s_prime: float) -> np.ndarray:
    return w_in * s_prime + w_en * (1.0 - s_prime)


def reconstitute(w_in: Waveform, w_en: Waveform, s, threshold: float = DEFAULT_THRESHOLD) -> ReconstitutionResult:
    if len(w_in) != len(w_en):
        raise ValueError(f"length mismatch: input has {len(w_in)} samples, enhanced has {len(w_en)}")
    if w_in.sample_rate != w_en.sample_rate:
        raise ValueError("input and enhanced waveforms have different sample rates")
    if not isinstance(s, SnrScore):
        s = SnrScore(float(s), float(clamp(float(s))))
    w_re = Waveform(blend(w_in.samples, w_en.samples, s.clamped), w_in.sample_rate)
    return ReconstitutionResult(w_re, s.clamped, classify_noise_only(s, threshold) == NOISE_ONLY)


def dump_waveforms_csv(path, w_in: Waveform, w_en: Waveform, w_re: Waveform):
    """Write ``index,w_in,w_en,w_re`` rows for side-by-side inspection."""
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(["index", "w_in", "w_en", "w_re"])
    for i, (a, b, c) in enumerate(zip(w_in.samples, w_en.samples, w_re.samples)):
        out.writerow([i, repr(float(a)), repr(float(b)), repr(float(c))])
    atomic_write_text(path, buf.getvalue())
