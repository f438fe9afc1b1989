"""Multitask emotion block.

Log-mel frames are pooled over time (per-bin mean and standard deviation),
standardized, passed through one ReLU hidden layer, then into a 10-way
category head and three scalar heads for arousal, valence and dominance.
Training minimizes ``CE + sum(1 - CCC)`` with momentum SGD; everything,
including the path back through waveform reconstitution into the SNR-level
scorer, has hand-written gradients.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio_io import Waveform, load_audio
from .dsp import LOG_FLOOR, N_MELS, log_mel, mel_filterbank, power_spectrogram, stft
from .enhancer import EnhancerConfig, enhance_waveform
from .manifest import N_CATEGORIES, EmotionLabel, ManifestRecord
from .optim import EarlyStopping, SGD, TrainHyper, batches, check_finite
from .snr_detector import LinearScorer, clamp, group_of, mse_loss_grad, similarity_feature

log = logging.getLogger(__name__)

ATTRIBUTES = ("arousal", "valence", "dominance")
INPUT_MODES = ("raw", "enhanced", "reconstituted")
HIDDEN = 128
FEATURE_DIM = 2 * N_MELS
SCALE_FLOOR = 1e-3
# standardized features are amplified by this factor: desk corpora give ~30
# SGD steps per epoch instead of thousands, and at lr=1e-4 unit-variance
# inputs leave the heads nearly untrained within the epoch budget
INPUT_GAIN = 4.0
PARAM_NAMES = (
    "w_hidden", "b_hidden", "w_category", "b_category",
    "w_arousal", "b_arousal", "w_valence", "b_valence", "w_dominance", "b_dominance",
)


def emotion_hyper(**overrides) -> TrainHyper:
    base = dict(lr=1e-4, momentum=0.9, batch_size=8, patience=2, max_epochs=50)
    base.update(overrides)
    return TrainHyper(**base)


@dataclass
class LossWeights:
    category: float = 1.0
    arousal: float = 1.0
    valence: float = 1.0
    dominance: float = 1.0


@dataclass
class EmotionModel:
    params: Dict[str, np.ndarray]
    feature_shift: np.ndarray = field(default_factory=lambda: np.zeros(FEATURE_DIM))
    feature_scale: np.ndarray = field(default_factory=lambda: np.ones(FEATURE_DIM))

    @classmethod
    def init(cls, seed: int, dim: int = FEATURE_DIM, hidden: int = HIDDEN) -> "EmotionModel":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias."""
        rng = np.random.Generator(np.random.PCG64(seed))

        def u(fan_in, *shape):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        p = {"w_hidden": u(dim, dim, hidden), "b_hidden": u(dim, hidden),
             "w_category": u(hidden, hidden, N_CATEGORIES), "b_category": u(hidden, N_CATEGORIES)}
        for a in ATTRIBUTES:
            p[f"w_{a}"] = u(hidden, hidden, 1)
            p[f"b_{a}"] = u(hidden, 1)
        return cls(p, np.zeros(dim), np.ones(dim))

    @classmethod
    def zeros(cls, dim: int = FEATURE_DIM, hidden: int = HIDDEN) -> "EmotionModel":
        m = cls.init(0, dim, hidden)
        return cls({k: np.zeros_like(v) for k, v in m.params.items()}, np.zeros(dim), np.ones(dim))

    def with_statistics(self, features: np.ndarray) -> "EmotionModel":
        return EmotionModel(
            {k: v.copy() for k, v in self.params.items()},
            features.mean(axis=0),
            np.maximum(features.std(axis=0), SCALE_FLOOR) / INPUT_GAIN,
        )

    def copy(self) -> "EmotionModel":
        return EmotionModel({k: v.copy() for k, v in self.params.items()},
                            self.feature_shift.copy(), self.feature_scale.copy())

    @property
    def dim(self) -> int:
        return self.params["w_hidden"].shape[0]


@dataclass
class EmotionPrediction:
    category_probs: np.ndarray
    arousal: float
    valence: float
    dominance: float

    @property
    def category(self) -> int:
        return int(np.argmax(self.category_probs))


# ---------------------------------------------------------------- features

def pool_features(m) -> np.ndarray:
    """Per-bin mean then per-bin population std over time."""
    frames = m.frames if hasattr(m, "frames") else np.asarray(m)
    if frames.shape[0] < 1:
        raise ValueError("need at least one frame to pool")
    return np.concatenate([frames.mean(axis=0), frames.std(axis=0)])


def waveform_features(w) -> np.ndarray:
    return pool_features(log_mel(stft(w), N_MELS))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


# ---------------------------------------------------------------- model

def forward(model: EmotionModel, features: np.ndarray):
    """Batch forward pass; returns (logits, attrs (n, 3), cache)."""
    p = model.params
    x = np.atleast_2d(features)
    z = (x - model.feature_shift) / model.feature_scale
    pre = z @ p["w_hidden"] + p["b_hidden"]
    h = np.maximum(pre, 0.0)
    logits = h @ p["w_category"] + p["b_category"]
    attrs = np.hstack([h @ p[f"w_{a}"] + p[f"b_{a}"] for a in ATTRIBUTES])
    return logits, attrs, (z, pre, h)


def backward(model: EmotionModel, cache, d_logits: np.ndarray, d_attrs: np.ndarray, need_input: bool = False):
    """Parameter gradients, plus d/d(raw features) when ``need_input``."""
    p = model.params
    z, pre, h = cache
    g = {"w_category": h.T @ d_logits, "b_category": d_logits.sum(axis=0)}
    dh = d_logits @ p["w_category"].T
    for j, a in enumerate(ATTRIBUTES):
        da = d_attrs[:, j : j + 1]
        g[f"w_{a}"] = h.T @ da
        g[f"b_{a}"] = da.sum(axis=0)
        dh = dh + da @ p[f"w_{a}"].T
    dpre = dh * (pre > 0)
    g["w_hidden"] = z.T @ dpre
    g["b_hidden"] = dpre.sum(axis=0)
    d_input = None
    if need_input:
        d_input = (dpre @ p["w_hidden"].T) / model.feature_scale
    return g, d_input


def predict_features(features: np.ndarray, model: EmotionModel) -> List[EmotionPrediction]:
    logits, attrs, _ = forward(model, features)
    probs = softmax(logits)
    return [EmotionPrediction(probs[i], *map(float, attrs[i])) for i in range(probs.shape[0])]


def predict(w: Waveform, model: EmotionModel) -> EmotionPrediction:
    return predict_features(waveform_features(w)[None, :], model)[0]


# ---------------------------------------------------------------- losses

def ccc_and_grad(x: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """CCC over a batch and its gradient with respect to the predictions."""
    n = x.size
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx, vy = np.mean(dx * dx), np.mean(dy * dy)
    cov = np.mean(dx * dy)
    den = vx + vy + (mx - my) ** 2
    if den == 0.0:
        return (1.0 if np.array_equal(x, y) else 0.0), np.zeros_like(x)
    num = 2.0 * cov
    d_num = 2.0 * dy / n
    d_den = 2.0 * dx / n + 2.0 * (mx - my) / n
    return num / den, (d_num * den - num * d_den) / den ** 2


def emotion_loss(
    logits: np.ndarray,
    attrs: np.ndarray,
    categories: np.ndarray,
    targets: np.ndarray,
    weights: LossWeights = LossWeights(),
):
    """``w_c*CE + sum_a w_a*(1 - CCC_a)`` over a batch.

    Returns ``(loss, d_logits, d_attrs, parts)``.
    """
    n = logits.shape[0]
    if n < 2:
        raise ValueError("emotion loss needs a batch of at least 2 (CCC uses batch moments)")
    categories = np.asarray(categories, dtype=int)
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))
    ce = -float(np.mean(log_probs[np.arange(n), categories]))
    onehot = np.zeros_like(logits)
    onehot[np.arange(n), categories] = 1.0
    d_logits = weights.category * (np.exp(log_probs) - onehot) / n
    loss = weights.category * ce
    parts = {"ce": ce}
    d_attrs = np.zeros_like(attrs)
    for j, a in enumerate(ATTRIBUTES):
        c, dc = ccc_and_grad(attrs[:, j], targets[:, j])
        w = getattr(weights, a)
        loss += w * (1.0 - c)
        d_attrs[:, j] = -w * dc
        parts[f"ccc_{a}"] = c
    return loss, d_logits, d_attrs, parts


def batch_loss_grad(model: EmotionModel, features, categories, targets, weights=LossWeights()):
    logits, attrs, cache = forward(model, features)
    loss, d_logits, d_attrs, parts = emotion_loss(logits, attrs, categories, targets, weights)
    grads, _ = backward(model, cache, d_logits, d_attrs)
    return loss, grads, parts


# ---------------------------------------------------------------- data

@dataclass
class Utterance:
    """Everything one training record needs, computed once."""

    id: str
    w_in: np.ndarray
    w_en: np.ndarray
    similarity: np.ndarray
    label: Optional[EmotionLabel]
    group: str = "clean"


def prepare_utterances(
    records: Sequence[ManifestRecord], enhancer: EnhancerConfig, jobs: int = 1, require_labels: bool = True
) -> List[Utterance]:
    def one(rec: ManifestRecord):
        if require_labels and rec.labels is None:
            raise ValueError(f"record {rec.path} has no emotion labels")
        w = load_audio(rec.path)
        w_en, s_orig, s_enh = enhance_waveform(w, enhancer, rec.id)
        return Utterance(rec.id, w.samples, w_en.samples, similarity_feature(s_orig, s_enh), rec.labels, group_of(rec))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(one, records))
    return [one(r) for r in records]


def input_waveform(u: Utterance, mode: str, scorer: Optional[LinearScorer] = None) -> np.ndarray:
    if mode == "raw":
        return u.w_in
    if mode == "enhanced":
        return u.w_en
    if mode == "reconstituted":
        if scorer is None:
            raise ValueError("reconstituted input needs an SNR-level scorer")
        s = float(clamp(float(scorer.standardize(u.similarity) @ scorer.weights + scorer.bias)))
        return u.w_in * s + u.w_en * (1.0 - s)
    raise ValueError(f"unknown input mode {mode!r}; expected one of {INPUT_MODES}")


def label_arrays(utts: Sequence[Utterance]):
    cats = np.array([u.label.category for u in utts], dtype=int)
    targets = np.array([u.label.attributes for u in utts], dtype=np.float64)
    return cats, targets


def mode_features(utts, mode, scorer=None) -> np.ndarray:
    return np.vstack([waveform_features(input_waveform(u, mode, scorer)) for u in utts])


# ---------------------------------------------------------------- training

def fit_emotion(
    x_train, c_train, t_train, x_val, c_val, t_val,
    hyper: TrainHyper,
    init: Optional[EmotionModel] = None,
    weights: LossWeights = LossWeights(),
) -> Tuple[EmotionModel, List[dict]]:
    """Momentum SGD on fixed pooled features with patience early stopping."""
    if len(c_train) < 2:
        raise ValueError("need at least two training utterances")
    if len(c_val) < 2:
        raise ValueError("need at least two validation utterances")
    model = init.copy() if init is not None else EmotionModel.init(hyper.seed).with_statistics(x_train)
    opt = SGD(model.params, hyper.lr, hyper.momentum)
    stopper = EarlyStopping(hyper.patience)
    rng = np.random.Generator(np.random.PCG64(hyper.seed + 1))
    history = []
    for epoch in range(hyper.max_epochs):
        total, count = 0.0, 0
        for idx in batches(len(c_train), hyper.batch_size, rng):
            if idx.size < 2:
                continue
            loss, grads, _ = batch_loss_grad(model, x_train[idx], c_train[idx], t_train[idx], weights)
            check_finite(loss, "emotion training", epoch)
            opt.step(grads)
            total += loss * idx.size
            count += idx.size
        val_loss, _, _ = batch_loss_grad(model, x_val, c_val, t_val, weights)
        check_finite(val_loss, "emotion validation", epoch)
        history.append({"epoch": epoch, "train_loss": total / count, "val_loss": val_loss})
        log.debug("emotion epoch %d train %.4f val %.4f", epoch, total / count, val_loss)
        if stopper.update(epoch, val_loss, model.params):
            break
    best = model.copy()
    best.params = stopper.best_state
    return best, history


def train_emotion(
    train: Sequence[Utterance],
    val: Sequence[Utterance],
    input_mode: str = "enhanced",
    hyper: Optional[TrainHyper] = None,
    scorer: Optional[LinearScorer] = None,
    init: Optional[EmotionModel] = None,
    weights: LossWeights = LossWeights(),
) -> Tuple[EmotionModel, List[dict]]:
    """Train the emotion block on raw, enhanced or reconstituted input."""
    if not train or not val:
        raise ValueError("emotion training needs non-empty train and val splits")
    hyper = hyper or emotion_hyper()
    x_tr = mode_features(train, input_mode, scorer)
    x_va = mode_features(val, input_mode, scorer)
    c_tr, t_tr = label_arrays(train)
    c_va, t_va = label_arrays(val)
    return fit_emotion(x_tr, c_tr, t_tr, x_va, c_va, t_va, hyper, init, weights)


# ---------------------------------------------------------------- joint fine-tuning

def reconstituted_features_and_slope(x_in: np.ndarray, x_en: np.ndarray, s_prime: float):
    """Pooled features of the blend ``s*X_in + (1-s)*X_en`` and d/ds of them.

    Works on spectrograms: the STFT is linear, so blending spectrograms is
    the same as transforming the blended waveform.
    """
    fb = mel_filterbank(N_MELS)
    x_re = s_prime * x_in + (1.0 - s_prime) * x_en
    diff = x_in - x_en
    power = power_spectrogram(x_re)
    d_power = 2.0 * (x_re.real * diff.real + x_re.imag * diff.imag)
    mel = power @ fb.T
    d_mel = d_power @ fb.T
    live = mel > LOG_FLOOR
    logm = np.log(np.where(live, mel, LOG_FLOOR))
    d_log = np.where(live, d_mel / np.where(live, mel, 1.0), 0.0)
    mean = logm.mean(axis=0)
    d_mean = d_log.mean(axis=0)
    std = logm.std(axis=0)
    cross = np.mean((logm - mean) * (d_log - d_mean), axis=0)
    d_std = np.divide(cross, std, out=np.zeros_like(std), where=std > 0)
    return np.concatenate([mean, std]), np.concatenate([d_mean, d_std])


@dataclass
class JointBatch:
    """Spectrograms of the original and enhanced audio for a few utterances."""

    x_in: List[np.ndarray]
    x_en: List[np.ndarray]
    similarity: np.ndarray
    categories: np.ndarray
    targets: np.ndarray

    @classmethod
    def from_utterances(cls, utts: Sequence[Utterance]) -> "JointBatch":
        cats, targets = label_arrays(utts)
        return cls(
            [stft(u.w_in).frames for u in utts],
            [stft(u.w_en).frames for u in utts],
            np.vstack([u.similarity for u in utts]),
            cats,
            targets,
        )


def joint_loss_grad(
    model: EmotionModel,
    scorer: LinearScorer,
    batch: JointBatch,
    snr_features: Optional[np.ndarray] = None,
    snr_targets: Optional[np.ndarray] = None,
    weights: LossWeights = LossWeights(),
    through_scorer: bool = True,
):
    """Emotion loss on reconstituted input plus scorer MSE, with gradients.

    The clamp passes gradient only where 0 < S < 1. Returns
    ``(total, emotion_grads, scorer_grads, parts)``.
    """
    z_sim = scorer.standardize(batch.similarity)
    raw = z_sim @ scorer.weights + scorer.bias
    s_prime = clamp(raw)
    feats, slopes = zip(*(reconstituted_features_and_slope(a, b, s) for a, b, s in zip(batch.x_in, batch.x_en, s_prime)))
    feats, slopes = np.vstack(feats), np.vstack(slopes)

    logits, attrs, cache = forward(model, feats)
    loss, d_logits, d_attrs, parts = emotion_loss(logits, attrs, batch.categories, batch.targets, weights)
    e_grads, d_feats = backward(model, cache, d_logits, d_attrs, need_input=True)

    d_raw = np.sum(d_feats * slopes, axis=1) * ((raw > 0.0) & (raw < 1.0))
    if not through_scorer:
        d_raw = np.zeros_like(d_raw)
    s_grads = {"weights": z_sim.T @ d_raw, "bias": np.array([d_raw.sum()])}

    total = loss
    parts = dict(parts, emotion=loss)
    if snr_features is not None and len(snr_features):
        mse, g = mse_loss_grad(snr_features, snr_targets, scorer)
        total += mse
        s_grads = {k: s_grads[k] + g[k] for k in s_grads}
        parts["snr_mse"] = mse
    return total, e_grads, s_grads, parts


def _cycle_batches(n: int, batch_size: int, rng: np.random.Generator):
    while True:
        yield from batches(n, batch_size, rng)


def finetune_joint(
    train: Sequence[Utterance],
    val: Sequence[Utterance],
    snr_train: Tuple[np.ndarray, np.ndarray],
    snr_val: Tuple[np.ndarray, np.ndarray],
    model: EmotionModel,
    scorer: LinearScorer,
    hyper: Optional[TrainHyper] = None,
    scorer_hyper: Optional[TrainHyper] = None,
    weights: LossWeights = LossWeights(),
    through_scorer: bool = True,
) -> Tuple[EmotionModel, LinearScorer, List[dict]]:
    """Fine-tune the emotion block and the scorer together.

    Each step sums the emotion loss on reconstituted audio (batch from
    ``train``) and the scorer MSE on a clean/noise batch (from
    ``snr_train``), then takes one SGD step on each parameter set. Early
    stopping watches emotion val loss + scorer val MSE.
    """
    if model is None or scorer is None:
        raise ValueError("joint fine-tuning needs pretrained emotion and scorer models")
    if not train or not val:
        raise ValueError("joint fine-tuning needs non-empty train and val splits")
    hyper = hyper or emotion_hyper()
    scorer_hyper = scorer_hyper or TrainHyper(lr=1e-4, momentum=0.9, batch_size=32)
    model, scorer = model.copy(), scorer.copy()
    s_params = scorer.params()
    e_opt = SGD(model.params, hyper.lr, hyper.momentum)
    s_opt = SGD(s_params, scorer_hyper.lr, scorer_hyper.momentum)
    stopper = EarlyStopping(hyper.patience)
    rng = np.random.Generator(np.random.PCG64(hyper.seed + 1))
    snr_rng = np.random.Generator(np.random.PCG64(hyper.seed + 2))
    x_snr, y_snr = snr_train
    snr_iter = _cycle_batches(len(y_snr), scorer_hyper.batch_size, snr_rng) if len(y_snr) else None

    def joint_batch(idx):
        return JointBatch.from_utterances([train[i] for i in idx])

    val_batch = JointBatch.from_utterances(val)
    history = []
    for epoch in range(hyper.max_epochs):
        total, count = 0.0, 0
        for idx in batches(len(train), hyper.batch_size, rng):
            if idx.size < 2:
                continue
            sidx = next(snr_iter) if snr_iter is not None else None
            cur = scorer.with_params(s_params)
            loss, e_grads, s_grads, _ = joint_loss_grad(
                model, cur, joint_batch(idx),
                x_snr[sidx] if sidx is not None else None,
                y_snr[sidx] if sidx is not None else None,
                weights, through_scorer,
            )
            check_finite(loss, "joint fine-tuning", epoch)
            e_opt.step(e_grads)
            s_opt.step(s_grads)
            total += loss * idx.size
            count += idx.size
        cur = scorer.with_params(s_params)
        val_total, _, _, parts = joint_loss_grad(model, cur, val_batch, snr_val[0], snr_val[1], weights)
        check_finite(val_total, "joint validation", epoch)
        history.append({"epoch": epoch, "train_loss": total / count, "val_loss": val_total,
                        "val_emotion": parts["emotion"], "val_snr_mse": parts.get("snr_mse", 0.0)})
        log.debug("joint epoch %d train %.4f val %.4f", epoch, total / count, val_total)
        if stopper.update(epoch, val_total, (model.params, s_params)):
            break
    e_best, s_best = stopper.best_state
    best = model.copy()
    best.params = e_best
    return best, scorer.with_params(s_best), history
