"""WAV input/output and resampling.

Everything downstream works on mono float64 waveforms at 16 kHz. Files on
disk may be PCM-16 or IEEE float-32 with any channel count.
"""

from __future__ import annotations

import logging
import os
import tempfile
from dataclasses import dataclass
from math import gcd
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import firwin, resample_poly

log = logging.getLogger(__name__)

TARGET_RATE = 16000
SUPPORTED_RATES = (8000, 16000, 22050, 44100, 48000)
PCM16_SCALE = 32768.0

# resampler design: 64 taps per phase, Kaiser window (~80 dB stopband)
TAPS_PER_PHASE = 64
KAISER_BETA = 8.6


class AudioError(Exception):
    """Base class for audio file problems; carries the offending path."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{path}: {message}")


class UnreadableAudioError(AudioError):
    pass


class UnsupportedEncodingError(AudioError):
    pass


class EmptyAudioError(AudioError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = TARGET_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.samples.size < 1:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"invalid sample rate {self.sample_rate}")
        self.sample_rate = int(self.sample_rate)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def read_wav(path) -> Waveform:
    """Read a WAV file as a mono waveform scaled to [-1, 1].

    Channels are averaged. PCM-16 is divided by 32768.
    """
    path = Path(path)
    if not path.is_file():
        raise UnreadableAudioError(path, "file does not exist")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        if "Unknown wave file format" in str(exc) or "Unsupported" in str(exc):
            raise UnsupportedEncodingError(path, str(exc)) from exc
        raise UnreadableAudioError(path, str(exc)) from exc
    except Exception as exc:  # truncated headers surface as assorted errors
        raise UnreadableAudioError(path, str(exc)) from exc

    if data.dtype == np.int16:
        data = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype == np.float32:
        data = data.astype(np.float64)
    else:
        raise UnsupportedEncodingError(path, f"sample type {data.dtype} is not PCM-16 or float-32")

    if data.ndim == 2:
        data = data.mean(axis=1)
    if data.size == 0:
        raise EmptyAudioError(path, "no samples")
    return Waveform(data, int(rate))


def _atomic_write(path: Path, writer):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_wav(w: Waveform, path, encoding: str = "float32") -> int:
    """Write ``w`` to ``path`` and return the number of clipped samples.

    Samples outside [-1, 1] are clipped; PCM-16 additionally saturates at
    32767/32768 on the positive side.
    """
    path = Path(path)
    if not path.parent.is_dir():
        raise FileNotFoundError(f"parent directory of {path} does not exist")
    if path.is_dir():
        raise IsADirectoryError(f"{path} is a directory")
    x = np.asarray(w.samples, dtype=np.float64)
    n_clipped = int(np.count_nonzero(np.abs(x) > 1.0))
    x = np.clip(x, -1.0, 1.0)
    if n_clipped:
        log.warning("%s: clipped %d sample(s) to [-1, 1]", path, n_clipped)

    if encoding == "pcm16":
        data = np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype(np.int16)
    elif encoding == "float32":
        data = x.astype(np.float32)
    else:
        raise ValueError(f"unknown encoding {encoding!r}; expected 'pcm16' or 'float32'")

    _atomic_write(path, lambda tmp: wavfile.write(tmp, int(w.sample_rate), data))
    return n_clipped


def _resampling_filter(up: int, down: int) -> np.ndarray:
    max_rate = max(up, down)
    half_len = TAPS_PER_PHASE // 2 * max_rate
    # resample_poly applies the interpolation gain ``up`` itself
    return firwin(2 * half_len + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))


def resample_to_16k(w: Waveform) -> Waveform:
    """Polyphase windowed-sinc resampling to 16 kHz."""
    if w.sample_rate not in SUPPORTED_RATES:
        raise ValueError(f"unsupported sample rate {w.sample_rate}; expected one of {SUPPORTED_RATES}")
    if w.sample_rate == TARGET_RATE:
        return w
    g = gcd(TARGET_RATE, w.sample_rate)
    up, down = TARGET_RATE // g, w.sample_rate // g
    y = resample_poly(w.samples, up, down, window=_resampling_filter(up, down))
    return Waveform(y, TARGET_RATE)


def load_audio(path) -> Waveform:
    """read_wav followed by resampling to 16 kHz."""
    return resample_to_16k(read_wav(path))
