"""STFT/iSTFT, mel features and small signal utilities.

Analysis parameters are fixed: 16 kHz audio, periodic Hann window of 400
samples, hop 100, FFT size 400, centered framing with reflect padding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy.signal import get_window

from .audio_io import TARGET_RATE, Waveform

WIN_LEN = 400
HOP = 100
FFT_SIZE = 400
N_BINS = FFT_SIZE // 2 + 1
N_MELS = 64
LOG_FLOOR = 1e-10
OLA_FLOOR = 1e-8


@dataclass(frozen=True)
class StftConfig:
    win_len: int = WIN_LEN
    hop: int = HOP
    fft_size: int = FFT_SIZE
    centered: bool = True

    def __post_init__(self):
        if (self.win_len, self.hop, self.fft_size) != (WIN_LEN, HOP, FFT_SIZE):
            raise ValueError("STFT parameters are fixed at win_len=400, hop=100, fft_size=400")
        if self.win_len % self.hop:
            raise ValueError("hop must divide win_len")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return hann_window(self.win_len)


DEFAULT_STFT = StftConfig()


@lru_cache(maxsize=4)
def _hann(n: int) -> np.ndarray:
    w = get_window("hann", n, fftbins=True)
    w.setflags(write=False)
    return w


def hann_window(n: int = WIN_LEN) -> np.ndarray:
    """Periodic Hann window (COLA at 75% overlap)."""
    return _hann(n)


@dataclass
class Spectrogram:
    """Complex STFT frames, shape (T, 201)."""

    frames: np.ndarray
    source_len: Optional[int] = None
    config: StftConfig = field(default=DEFAULT_STFT)

    @property
    def shape(self):
        return self.frames.shape

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass
class MelFeatureSeq:
    frames: np.ndarray  # (T, M) log-mel energies

    @property
    def n_mels(self) -> int:
        return self.frames.shape[1]


def n_frames_for(length: int, cfg: StftConfig = DEFAULT_STFT) -> int:
    return length // cfg.hop + 1


def _as_samples(w) -> np.ndarray:
    if isinstance(w, Waveform):
        if w.sample_rate != TARGET_RATE:
            raise ValueError(f"expected {TARGET_RATE} Hz audio, got {w.sample_rate}")
        return w.samples
    return np.asarray(w, dtype=np.float64).reshape(-1)


def frame_signal(x: np.ndarray, cfg: StftConfig = DEFAULT_STFT) -> np.ndarray:
    """Reflect-pad by win_len/2 and cut into (T, win_len) frames."""
    pad = cfg.win_len // 2
    xp = np.pad(x, pad, mode="reflect")
    n = n_frames_for(x.size, cfg)
    idx = np.arange(cfg.win_len)[None, :] + cfg.hop * np.arange(n)[:, None]
    return xp[idx]


def stft(w, cfg: StftConfig = DEFAULT_STFT) -> Spectrogram:
    x = _as_samples(w)
    if x.size < 1:
        raise ValueError("cannot transform an empty waveform")
    frames = frame_signal(x, cfg) * cfg.window
    return Spectrogram(np.fft.rfft(frames, n=cfg.fft_size, axis=1), int(x.size), cfg)


def istft(s: Spectrogram) -> Waveform:
    """Weighted overlap-add inverse of :func:`stft`, trimmed to ``source_len``."""
    if s.source_len is None:
        raise ValueError("spectrogram has no source_len; cannot invert to exact length")
    cfg = s.config
    win = cfg.window
    frames = np.fft.irfft(s.frames, n=cfg.fft_size, axis=1)[:, : cfg.win_len] * win
    n = frames.shape[0]
    total = cfg.win_len + cfg.hop * (n - 1)
    out = np.zeros(total)
    norm = np.zeros(total)
    wsq = win ** 2
    for i in range(n):
        sl = slice(i * cfg.hop, i * cfg.hop + cfg.win_len)
        out[sl] += frames[i]
        norm[sl] += wsq
    out /= np.maximum(norm, OLA_FLOOR)
    pad = cfg.win_len // 2
    return Waveform(out[pad : pad + s.source_len], TARGET_RATE)


def magnitude(s) -> np.ndarray:
    frames = s.frames if isinstance(s, Spectrogram) else s
    return np.abs(frames)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _mel_fb(n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    freqs = np.linspace(0.0, TARGET_RATE / 2, N_BINS)
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (mid - lo)
    falling = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    # unit-sum rows: each band reports mean power over its triangle, so
    # white noise gives a flat profile regardless of band width
    fb = fb / fb.sum(axis=1, keepdims=True)
    fb.setflags(write=False)
    return fb


def mel_filterbank(n_mels: int = N_MELS, fmin: float = 0.0, fmax: float = TARGET_RATE / 2) -> np.ndarray:
    """Triangular HTK-mel filterbank with unit-sum rows, shape (n_mels, 201)."""
    if n_mels < 1:
        raise ValueError("need at least one mel bin")
    return _mel_fb(int(n_mels), float(fmin), float(fmax))


def power_spectrogram(s) -> np.ndarray:
    frames = s.frames if isinstance(s, Spectrogram) else s
    return frames.real ** 2 + frames.imag ** 2


def log_mel(s, n_mels: int = N_MELS) -> MelFeatureSeq:
    mel = power_spectrogram(s) @ mel_filterbank(n_mels).T
    return MelFeatureSeq(np.log(np.maximum(mel, LOG_FLOOR)))


def rms(w) -> float:
    x = w.samples if isinstance(w, Waveform) else np.asarray(w, dtype=np.float64)
    if x.size < 1:
        raise ValueError("rms of an empty signal")
    return float(np.sqrt(np.mean(x * x)))
