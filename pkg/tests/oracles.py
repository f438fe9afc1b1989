"""Slow, direct reimplementations used to cross-check the library.

Nothing here calls into ``nrser``; each function spells out its definition
with loops, explicit DFT sums or exact rational arithmetic.
"""

from fractions import Fraction
import math

import numpy as np

# Values frozen from exact/high-precision evaluation (fractions, mpmath at 40 digits).
PCM16_CLIPPED_MAX = 0.999969482421875  # 32767/32768
GAIN_0P2_0P1_6DB = 1.0023744672545445  # 2 * 10**(-6/20)
CCC_1234_1235 = 13 / 14  # var_x 5/4, var_y 35/16, cov 13/8, mean gap^2 1/16
SOFTMAX_LN2_P0 = 2 / 11
ONE_CLASS_MACRO_F1 = 1 / 55  # per-class F1 2/11 on one class, 0 elsewhere, over 10 classes
LN10 = 2.302585092994046


def reflect_index(i, n):
    """numpy 'reflect' padding index (edge sample not repeated)."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = i % period
    return i if i < n else period - i


def hann(n):
    return np.array([0.5 - 0.5 * math.cos(2 * math.pi * k / n) for k in range(n)])


def naive_stft(x, win=400, hop=100, nfft=400):
    x = np.asarray(x, dtype=float)
    n = x.size
    pad = win // 2
    t_frames = n // hop + 1
    w = hann(win)
    k = np.arange(nfft // 2 + 1)[:, None]
    m = np.arange(win)[None, :]
    dft = np.cos(2 * np.pi * k * m / nfft) - 1j * np.sin(2 * np.pi * k * m / nfft)
    out = np.empty((t_frames, nfft // 2 + 1), dtype=complex)
    for t in range(t_frames):
        frame = np.array([x[reflect_index(t * hop + j - pad, n)] for j in range(win)])
        out[t] = dft @ (frame * w)
    return out


def htk_mel(f):
    return 2595.0 * math.log10(1.0 + f / 700.0)


def htk_hz(m):
    return 700.0 * (10 ** (m / 2595.0) - 1.0)


def naive_mel_filterbank(n_mels=64, n_bins=201, sr=16000, fmin=0.0, fmax=8000.0):
    lo, hi = htk_mel(fmin), htk_mel(fmax)
    edges = [htk_hz(lo + (hi - lo) * i / (n_mels + 1)) for i in range(n_mels + 2)]
    freqs = [sr * k / (2 * (n_bins - 1)) for k in range(n_bins)]
    fb = np.zeros((n_mels, n_bins))
    for m in range(n_mels):
        left, center, right = edges[m], edges[m + 1], edges[m + 2]
        for k, f in enumerate(freqs):
            if left < f <= center:
                fb[m, k] = (f - left) / (center - left)
            elif center < f < right:
                fb[m, k] = (right - f) / (right - center)
        fb[m] /= sum(fb[m])
    return fb


def exact_ccc(x, y):
    x = [Fraction(float(v)) for v in x]
    y = [Fraction(float(v)) for v in y]
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    vx = sum((a - mx) ** 2 for a in x) / n
    vy = sum((b - my) ** 2 for b in y) / n
    cov = sum((a - mx) * (b - my) for a, b in zip(x, y)) / n
    den = vx + vy + (mx - my) ** 2
    if den == 0:
        return 1.0 if x == y else 0.0
    return float(2 * cov / den)


def brute_macro_f1(y_true, y_pred, n_classes=10):
    total = Fraction(0)
    for c in range(n_classes):
        tp = fp = fn = 0
        for t, p in zip(y_true, y_pred):
            if p == c and t == c:
                tp += 1
            elif p == c:
                fp += 1
            elif t == c:
                fn += 1
        den = 2 * tp + fp + fn
        total += Fraction(2 * tp, den) if den else 0
    return float(total / n_classes)


def brute_accuracy(truth, pred):
    cm = [[0, 0], [0, 0]]
    for t, p in zip(truth, pred):
        cm[int(bool(t))][int(bool(p))] += 1
    return (cm[0][0] + cm[1][1]) / sum(map(sum, cm))


def snr_db(signal, noise):
    s = math.sqrt(sum(float(v) ** 2 for v in signal) / len(signal))
    n = math.sqrt(sum(float(v) ** 2 for v in noise) / len(noise))
    return 20.0 * math.log10(s / n)


def rel_err(a, b):
    """Norm-wise relative difference, safe when both are tiny."""
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / den)


def central_difference(f, x, h=1e-5):
    """Gradient of scalar f at array x, one coordinate at a time."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = f(x)
        x[i] = old - h
        fm = f(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g
