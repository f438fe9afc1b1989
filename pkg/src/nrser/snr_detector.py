"""SNR-level detection.

The feature is the cosine similarity, per frequency bin, between the
magnitude time series of the original and the enhanced spectrogram: a fixed
201-vector whatever the utterance length. A dense layer maps it to a score
S that is trained towards 1 for clean speech and 0 for noise. Clean input
barely changes under enhancement, so S tracks how much noise was removed.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio_io import AudioError, load_audio
from .dsp import N_BINS, Spectrogram
from .enhancer import EnhancerConfig, enhance_waveform
from .manifest import ManifestRecord, atomic_write_text
from .optim import EarlyStopping, SGD, TrainHyper, batches, check_finite

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.6
SPEECH, NOISE_ONLY = "speech", "noise_only"


def scorer_hyper(**overrides) -> TrainHyper:
    base = dict(lr=1e-4, momentum=0.9, batch_size=32, patience=2, max_epochs=400)
    base.update(overrides)
    return TrainHyper(**base)


SCALE_FLOOR = 1e-2
# standardized inputs are shrunk by this factor: with 201 strongly correlated
# bins, unit-variance inputs make momentum SGD at lr=1e-4 oscillate enough to
# trip patience-2 early stopping within a few epochs
INPUT_GAIN = 0.25


@dataclass
class LinearScorer:
    """Dense layer ``raw = weights . ((f - shift) / scale) + bias``.

    ``shift``/``scale`` are fixed input standardization statistics taken
    from the training features; they are not trained.
    """

    weights: np.ndarray
    bias: float
    shift: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        dim = self.weights.shape
        self.shift = np.zeros(dim) if self.shift is None else np.asarray(self.shift, dtype=np.float64)
        self.scale = np.ones(dim) if self.scale is None else np.asarray(self.scale, dtype=np.float64)
        self.bias = float(self.bias)

    @classmethod
    def init(cls, dim: int = N_BINS) -> "LinearScorer":
        """Zero weights, bias 0.5: the midpoint between the two targets."""
        return cls(np.zeros(dim), 0.5)

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.shift) / self.scale

    def with_statistics(self, features: np.ndarray) -> "LinearScorer":
        shift = features.mean(axis=0)
        scale = np.maximum(features.std(axis=0), SCALE_FLOOR) / INPUT_GAIN
        return LinearScorer(self.weights.copy(), self.bias, shift, scale)

    def params(self) -> Dict[str, np.ndarray]:
        return {"weights": self.weights.copy(), "bias": np.array([self.bias], dtype=np.float64)}

    def with_params(self, p: Dict[str, np.ndarray]) -> "LinearScorer":
        return LinearScorer(
            np.array(p["weights"], dtype=np.float64),
            float(np.asarray(p["bias"]).reshape(-1)[0]),
            self.shift,
            self.scale,
        )

    def copy(self) -> "LinearScorer":
        return LinearScorer(self.weights.copy(), self.bias, self.shift.copy(), self.scale.copy())


@dataclass(frozen=True)
class SnrScore:
    raw: float
    clamped: float


def clamp(s):
    """S' = min(max(0, S), 1)."""
    return np.minimum(np.maximum(0.0, s), 1.0)


def similarity_feature(orig, enh) -> np.ndarray:
    """Cosine similarity over time, one value per frequency bin.

    Both-zero bins count as identical (1); one-sided zero bins as 0.
    """
    a = np.abs(orig.frames if isinstance(orig, Spectrogram) else orig)
    b = np.abs(enh.frames if isinstance(enh, Spectrogram) else enh)
    if a.shape != b.shape:
        raise ValueError(f"spectrogram shapes differ: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    dot = np.sum(a * b, axis=0)
    den = na * nb
    out = np.divide(dot, den, out=np.zeros_like(dot), where=den > 0)
    out[(na == 0) & (nb == 0)] = 1.0
    return np.clip(out, -1.0, 1.0)


def score(f: np.ndarray, m: LinearScorer) -> SnrScore:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != m.weights.shape:
        raise ValueError(f"feature dimension {f.shape} does not match scorer {m.weights.shape}")
    raw = float(m.standardize(f) @ m.weights + m.bias)
    return SnrScore(raw, float(clamp(raw)))


def raw_scores(features: np.ndarray, m: LinearScorer) -> np.ndarray:
    return m.standardize(features) @ m.weights + m.bias


def classify_noise_only(s, threshold: float = DEFAULT_THRESHOLD) -> str:
    raw = s.raw if isinstance(s, SnrScore) else float(s)
    return NOISE_ONLY if raw < threshold else SPEECH


def mse_loss_grad(features: np.ndarray, targets: np.ndarray, m: LinearScorer):
    """Mean squared error on the raw (unclamped) score and its gradient."""
    z = m.standardize(features)
    err = z @ m.weights + m.bias - targets
    n = err.size
    loss = float(np.mean(err ** 2))
    grads = {
        "weights": (2.0 / n) * (z.T @ err),
        "bias": np.array([2.0 / n * np.sum(err)]),
    }
    return loss, grads


def waveform_feature(w, enhancer: EnhancerConfig = EnhancerConfig(), utterance_id: Optional[str] = None) -> np.ndarray:
    _, s_orig, s_enh = enhance_waveform(w, enhancer, utterance_id)
    return similarity_feature(s_orig, s_enh)


def record_features(
    records: Sequence[ManifestRecord], enhancer: EnhancerConfig, jobs: int = 1
) -> np.ndarray:
    def one(rec):
        return waveform_feature(load_audio(rec.path), enhancer, rec.id)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(one, records))
    else:
        rows = [one(r) for r in records]
    return np.vstack(rows) if rows else np.zeros((0, N_BINS))


def detection_set(speech, noise, split, enhancer, jobs=1) -> Tuple[np.ndarray, np.ndarray]:
    s = [r for r in speech if r.split == split]
    n = [r for r in noise if r.split == split]
    x = record_features(s + n, enhancer, jobs)
    y = np.concatenate([np.ones(len(s)), np.zeros(len(n))])
    return x, y


def fit_scorer(
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    hyper: TrainHyper,
    init: Optional[LinearScorer] = None,
) -> Tuple[LinearScorer, List[dict]]:
    """Minibatch SGD on precomputed similarity features."""
    if len(y_train) == 0:
        raise ValueError("no training examples for the SNR-level scorer")
    if len(y_val) == 0:
        x_val, y_val = x_train, y_train
    model = init.copy() if init is not None else LinearScorer.init(x_train.shape[1]).with_statistics(x_train)
    params = model.params()
    opt = SGD(params, hyper.lr, hyper.momentum)
    stopper = EarlyStopping(hyper.patience)
    rng = np.random.Generator(np.random.PCG64(hyper.seed))
    history = []
    for epoch in range(hyper.max_epochs):
        total = 0.0
        for idx in batches(len(y_train), hyper.batch_size, rng):
            loss, grads = mse_loss_grad(x_train[idx], y_train[idx], model.with_params(params))
            check_finite(loss, "SNR scorer training", epoch)
            opt.step(grads)
            total += loss * idx.size
        train_loss = total / len(y_train)
        val_loss, _ = mse_loss_grad(x_val, y_val, model.with_params(params))
        check_finite(val_loss, "SNR scorer validation", epoch)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        log.debug("scorer epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if stopper.update(epoch, val_loss, params):
            break
    return model.with_params(stopper.best_state), history


def train_scorer(
    speech: Sequence[ManifestRecord],
    noise: Sequence[ManifestRecord],
    enhancer: EnhancerConfig = EnhancerConfig(),
    hyper: Optional[TrainHyper] = None,
    jobs: int = 1,
) -> Tuple[LinearScorer, List[dict]]:
    """Train on train-split speech (target 1) and noise (target 0).

    Early stopping watches the MSE on the val split.
    """
    if not speech or not noise:
        raise ValueError("SNR-level training needs non-empty speech and noise manifests")
    hyper = hyper or scorer_hyper()
    x_tr, y_tr = detection_set(speech, noise, "train", enhancer, jobs)
    x_va, y_va = detection_set(speech, noise, "val", enhancer, jobs)
    return fit_scorer(x_tr, y_tr, x_va, y_va, hyper)


def group_of(rec: ManifestRecord) -> str:
    if rec.kind == "noise":
        return "noise-only"
    if rec.kind == "mixture" and rec.mix is not None:
        return f"{rec.mix.target_snr_db:g}"
    return "clean"


GROUP_ORDER = ("noise-only", "6", "8", "10", "12", "14", "clean")


def _group_key(g: str):
    return (GROUP_ORDER.index(g), g) if g in GROUP_ORDER else (len(GROUP_ORDER), g)


@dataclass
class ScoreRow:
    id: str
    raw: float
    clamped: float
    decision: str
    group: str


def score_manifest(
    records: Sequence[ManifestRecord],
    scorer: LinearScorer,
    enhancer: EnhancerConfig = EnhancerConfig(),
    threshold: float = DEFAULT_THRESHOLD,
    out_csv=None,
    summary_csv=None,
    jobs: int = 1,
) -> Tuple[List[ScoreRow], Dict[str, Tuple[float, int]]]:
    """Score every readable record; unreadable audio is skipped with a warning."""
    def one(rec):
        try:
            f = waveform_feature(load_audio(rec.path), enhancer, rec.id)
        except AudioError as exc:
            return exc
        s = score(f, scorer)
        return ScoreRow(rec.id, s.raw, s.clamped, classify_noise_only(s, threshold), group_of(rec))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, records))
    else:
        results = [one(r) for r in records]
    rows = [r for r in results if isinstance(r, ScoreRow)]
    skipped = len(results) - len(rows)
    if skipped:
        log.warning("skipped %d unreadable record(s)", skipped)
    if not records:
        log.warning("manifest is empty; nothing to score")

    groups: Dict[str, List[float]] = {}
    for r in rows:
        groups.setdefault(r.group, []).append(r.raw)
    summary = {g: (float(np.mean(v)), len(v)) for g, v in sorted(groups.items(), key=lambda kv: _group_key(kv[0]))}

    if out_csv is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "raw_score", "clamped_score", "decision"])
        for r in rows:
            w.writerow([r.id, repr(r.raw), repr(r.clamped), r.decision])
        atomic_write_text(out_csv, buf.getvalue())
    if summary_csv is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "mean_raw", "count"])
        for g, (mean, count) in summary.items():
            w.writerow([g, repr(mean), count])
        atomic_write_text(summary_csv, buf.getvalue())
    return rows, summary
