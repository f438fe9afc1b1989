"""Three-phase training, inference, evaluation and variant comparison.

Phase 1 trains the SNR-level scorer on clean speech (target 1) and noise
(target 0). Phase 2 trains the emotion block on enhanced audio. Phase 3
fine-tunes both together on reconstituted audio. Every phase writes its
checkpoint(s) and a JSONL log into the run directory and hands the next
phase the models as read back from disk, so a resumed run and a continuous
run see identical parameters.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .audio_io import AudioError, Waveform, load_audio
from .checkpoint import load_emotion, load_scorer, save_emotion, save_scorer
from .emotion import (
    ATTRIBUTES,
    EmotionModel,
    EmotionPrediction,
    LossWeights,
    Utterance,
    emotion_hyper,
    finetune_joint,
    input_waveform,
    predict_features,
    prepare_utterances,
    train_emotion,
    waveform_features,
)
from .enhancer import EnhancerConfig, enhance_waveform
from .manifest import ManifestRecord, atomic_write_text, by_split, write_manifest
from .metrics import ccc, detection_accuracy, macro_f1
from .mixing import TRAIN_SNRS, synthesize_corpus
from .optim import TrainHyper
from .snr_detector import (
    DEFAULT_THRESHOLD,
    GROUP_ORDER,
    LinearScorer,
    clamp,
    detection_set,
    fit_scorer,
    raw_scores,
    scorer_hyper,
    similarity_feature,
)
from .synth import generate_synthetic_desk_data

log = logging.getLogger(__name__)

VARIANTS = ("s_clean", "s_noisy", "s_en", "s_en_prime", "nrser")
CONDITIONS = ("clean", "12", "8")

PHASE_FILES = {
    1: ("phase1_scorer.ckpt",),
    2: ("phase2_emotion.ckpt",),
    3: ("phase3_emotion.ckpt", "phase3_scorer.ckpt"),
}


class MissingCheckpointError(RuntimeError):
    pass


@dataclass
class SystemConfig:
    variant: str = "nrser"
    enhancer: EnhancerConfig = field(default_factory=EnhancerConfig)
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0
    scorer: TrainHyper = field(default_factory=scorer_hyper)
    emotion: TrainHyper = field(default_factory=emotion_hyper)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    through_scorer: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")

    def seeded(self, seed: int) -> "SystemConfig":
        return SystemConfig(
            self.variant, self.enhancer, self.threshold, seed,
            TrainHyper(**dict(self.scorer.to_dict(), seed=seed)),
            TrainHyper(**dict(self.emotion.to_dict(), seed=seed)),
            self.loss_weights, self.through_scorer,
        )

    def for_variant(self, variant: str) -> "SystemConfig":
        return SystemConfig(variant, self.enhancer, self.threshold, self.seed, self.scorer,
                            self.emotion, self.loss_weights, self.through_scorer)

    def meta(self) -> dict:
        return {
            "variant": self.variant,
            "enhancer": self.enhancer.to_dict(),
            "threshold": self.threshold,
            "seed": self.seed,
            "scorer_hyper": self.scorer.to_dict(),
            "emotion_hyper": self.emotion.to_dict(),
            "loss_weights": asdict(self.loss_weights),
            "through_scorer": self.through_scorer,
        }


# ---------------------------------------------------------------- corpus

@dataclass
class Corpus:
    """Speech, noise and mixture records for one experiment."""

    speech: List[ManifestRecord]
    noise: List[ManifestRecord]
    mixtures: List[ManifestRecord]  # train/val mixtures at the training SNRs
    test_mixtures: Dict[str, List[ManifestRecord]]  # SNR label -> test mixtures

    def emotion_records(self, split: str, noisy: bool = True) -> List[ManifestRecord]:
        recs = by_split(self.speech, split)
        if noisy:
            recs = recs + by_split(self.mixtures, split)
        return recs

    def test_condition(self, condition: str) -> List[ManifestRecord]:
        if condition == "clean":
            return by_split(self.speech, "test")
        return self.test_mixtures[condition]


def corpus_from_manifests(
    speech: Sequence[ManifestRecord],
    noise: Sequence[ManifestRecord],
    work_dir,
    seed: int = 0,
    train_snrs: Sequence[float] = TRAIN_SNRS,
    test_snrs: Sequence[float] = (6.0, 8.0, 10.0, 12.0, 14.0),
    jobs: int = 1,
) -> Corpus:
    """Mix train/val speech at the training SNRs and test speech at every test SNR."""
    work_dir = Path(work_dir)
    speech, noise = list(speech), list(noise)
    trainval = [r for r in speech if r.split in ("train", "val")]
    mixtures = synthesize_corpus(trainval, noise, train_snrs, seed + 1, work_dir / "mix_trainval", jobs=jobs)
    write_manifest(mixtures, work_dir / "mix_trainval.jsonl")
    test_speech = by_split(speech, "test")
    test_mixtures = {}
    for k, level in enumerate(test_snrs):
        recs = synthesize_corpus(test_speech, noise, [level], seed + 100 + k, work_dir / f"mix_test_{level:g}", jobs=jobs)
        write_manifest(recs, work_dir / f"mix_test_{level:g}.jsonl")
        test_mixtures[f"{level:g}"] = recs
    return Corpus(speech, noise, mixtures, test_mixtures)


def build_desk_corpus(work_dir, seed: int = 0, n_speech: int = 200, n_noise: int = 100, jobs: int = 1, **kw) -> Corpus:
    """Synthetic speech/noise plus every mixture set the experiments need."""
    work_dir = Path(work_dir)
    speech, noise = generate_synthetic_desk_data(work_dir / "desk", seed, n_speech, n_noise)
    return corpus_from_manifests(speech, noise, work_dir, seed, jobs=jobs, **kw)


# ---------------------------------------------------------------- phases

def _write_log(path: Path, history: Sequence[dict], phase: int):
    lines = [json.dumps(dict(h, phase=phase), sort_keys=True) for h in history]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def _require(run_dir: Path, phase: int):
    for name in PHASE_FILES[phase]:
        if not (run_dir / name).is_file():
            raise MissingCheckpointError(f"phase {phase} checkpoint {run_dir / name} is missing; run phase {phase} first")


@dataclass
class PhaseResult:
    history: List[dict]
    paths: List[Path]
    scorer: Optional[LinearScorer] = None
    emotion: Optional[EmotionModel] = None


def run_phase1(config: SystemConfig, speech, noise, run_dir, jobs: int = 1) -> PhaseResult:
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    x_tr, y_tr = detection_set(speech, noise, "train", config.enhancer, jobs)
    x_va, y_va = detection_set(speech, noise, "val", config.enhancer, jobs)
    scorer, history = fit_scorer(x_tr, y_tr, x_va, y_va, config.scorer)
    path = save_scorer(run_dir / PHASE_FILES[1][0], scorer, dict(config.meta(), phase=1))
    _write_log(run_dir / "phase1_log.jsonl", history, 1)
    return PhaseResult(history, [path], scorer=load_scorer(path)[0])


def run_phase2(config: SystemConfig, train: Sequence[Utterance], val: Sequence[Utterance], run_dir) -> PhaseResult:
    run_dir = Path(run_dir)
    _require(run_dir, 1)
    model, history = train_emotion(train, val, "enhanced", config.emotion, weights=config.loss_weights)
    path = save_emotion(run_dir / PHASE_FILES[2][0], model, dict(config.meta(), phase=2))
    _write_log(run_dir / "phase2_log.jsonl", history, 2)
    return PhaseResult(history, [path], emotion=load_emotion(path)[0])


def run_phase3(
    config: SystemConfig,
    train: Sequence[Utterance],
    val: Sequence[Utterance],
    speech,
    noise,
    run_dir,
    jobs: int = 1,
    snr_sets=None,
) -> PhaseResult:
    run_dir = Path(run_dir)
    _require(run_dir, 1)
    _require(run_dir, 2)
    scorer, _ = load_scorer(run_dir / PHASE_FILES[1][0])
    model, _ = load_emotion(run_dir / PHASE_FILES[2][0])
    if snr_sets is None:
        snr_sets = (
            detection_set(speech, noise, "train", config.enhancer, jobs),
            detection_set(speech, noise, "val", config.enhancer, jobs),
        )
    model, scorer, history = finetune_joint(
        train, val, snr_sets[0], snr_sets[1], model, scorer,
        config.emotion, config.scorer, config.loss_weights, config.through_scorer,
    )
    meta = dict(config.meta(), phase=3)
    e_path = save_emotion(run_dir / PHASE_FILES[3][0], model, meta)
    s_path = save_scorer(run_dir / PHASE_FILES[3][1], scorer, meta)
    _write_log(run_dir / "phase3_log.jsonl", history, 3)
    return PhaseResult(history, [e_path, s_path], scorer=load_scorer(s_path)[0], emotion=load_emotion(e_path)[0])


@dataclass
class TrainedSystem:
    variant: str
    emotion: EmotionModel
    scorer: Optional[LinearScorer] = None
    histories: Dict[str, List[dict]] = field(default_factory=dict)


def train_nrser(config: SystemConfig, corpus: Corpus, run_dir, jobs: int = 1, cache=None) -> TrainedSystem:
    """Run phases 1-3 in order."""
    cache = cache if cache is not None else {}
    train, val = _emotion_sets(corpus, config.enhancer, True, cache, jobs)
    snr_sets = (
        detection_set(corpus.speech, corpus.noise, "train", config.enhancer, jobs),
        detection_set(corpus.speech, corpus.noise, "val", config.enhancer, jobs),
    )
    p1 = run_phase1(config, corpus.speech, corpus.noise, run_dir, jobs)
    p2 = run_phase2(config, train, val, run_dir)
    p3 = run_phase3(config, train, val, corpus.speech, corpus.noise, run_dir, jobs, snr_sets)
    return TrainedSystem("nrser", p3.emotion, p3.scorer,
                         {"phase1": p1.history, "phase2": p2.history, "phase3": p3.history})


def _emotion_sets(corpus: Corpus, enhancer, noisy: bool, cache: dict, jobs: int = 1):
    key = ("emotion_sets", noisy)
    if key not in cache:
        cache[key] = tuple(
            prepare_utterances(corpus.emotion_records(split, noisy), enhancer, jobs) for split in ("train", "val")
        )
    return cache[key]


def train_variant(config: SystemConfig, corpus: Corpus, run_dir, jobs: int = 1, cache=None) -> TrainedSystem:
    """Train one row of the comparison table.

    s_clean: clean data, no enhancement. s_noisy: clean + noisy data.
    s_en: the s_clean model, enhancement applied only at test time.
    s_en_prime: trained and tested on enhanced clean + noisy data.
    nrser: the full three-phase system.
    """
    cache = cache if cache is not None else {}
    v = config.variant
    if v == "nrser":
        return train_nrser(config, corpus, run_dir, jobs, cache)
    noisy = v in ("s_noisy", "s_en_prime")
    mode = "enhanced" if v == "s_en_prime" else "raw"
    key = ("variant", "s_clean" if v == "s_en" else v, config.seed)
    if key not in cache:
        train, val = _emotion_sets(corpus, config.enhancer, noisy, cache, jobs)
        model, history = train_emotion(train, val, mode, config.emotion, weights=config.loss_weights)
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        path = save_emotion(Path(run_dir) / f"{key[1]}_emotion.ckpt", model, dict(config.meta(), phase=2))
        cache[key] = (load_emotion(path)[0], history)
    model, history = cache[key]
    return TrainedSystem(v, model, None, {"emotion": history})


# ---------------------------------------------------------------- inference

@dataclass
class InferenceResult:
    prediction: Optional[EmotionPrediction]
    raw_score: Optional[float]
    s_prime: Optional[float]
    gated: bool

    def describe(self) -> str:
        if self.gated:
            return f"gated (S'={self.s_prime:.4f})"
        p = self.prediction
        s = "" if self.s_prime is None else f" S'={self.s_prime:.4f}"
        return (f"category={p.category} arousal={p.arousal:.3f} valence={p.valence:.3f} "
                f"dominance={p.dominance:.3f}{s}")


def infer(
    w: Waveform,
    emotion: EmotionModel,
    scorer: LinearScorer,
    enhancer: EnhancerConfig = EnhancerConfig(),
    threshold: float = DEFAULT_THRESHOLD,
    utterance_id: Optional[str] = None,
) -> InferenceResult:
    """SE -> similarity -> score -> reconstitute -> gate or predict."""
    w_en, s_orig, s_enh = enhance_waveform(w, enhancer, utterance_id)
    raw = float(raw_scores(similarity_feature(s_orig, s_enh)[None, :], scorer)[0])
    s_prime = float(clamp(raw))
    if raw < threshold:
        return InferenceResult(None, raw, s_prime, True)
    w_re = w.samples * s_prime + w_en.samples * (1.0 - s_prime)
    pred = predict_features(waveform_features(w_re)[None, :], emotion)[0]
    return InferenceResult(pred, raw, s_prime, False)


def load_system(run_dir) -> Tuple[EmotionModel, LinearScorer]:
    """Final emotion model and scorer of a run (phase 3, else phases 1-2)."""
    run_dir = Path(run_dir)
    e = run_dir / PHASE_FILES[3][0]
    s = run_dir / PHASE_FILES[3][1]
    if not (e.is_file() and s.is_file()):
        e, s = run_dir / PHASE_FILES[2][0], run_dir / PHASE_FILES[1][0]
    if not (e.is_file() and s.is_file()):
        raise MissingCheckpointError(f"{run_dir} holds no trained system")
    return load_emotion(e)[0], load_scorer(s)[0]


# ---------------------------------------------------------------- evaluation

@dataclass
class EvalReport:
    n: int
    ccc: Dict[str, float]
    macro_f1: float
    detection_accuracy: float
    gated_rate_noise: float
    gated_rate_speech: float
    mean_score: Dict[str, float]
    runtime_s: float = 0.0

    def row(self) -> dict:
        out = {"n": self.n, "macro_f1": self.macro_f1}
        out.update({f"ccc_{a}": self.ccc.get(a, float("nan")) for a in ATTRIBUTES})
        out.update(detection_accuracy=self.detection_accuracy, gated_rate_noise=self.gated_rate_noise,
                   gated_rate_speech=self.gated_rate_speech, runtime_s=self.runtime_s)
        return out


@dataclass
class UtteranceOutput:
    id: str
    group: str
    is_speech: bool
    raw_score: Optional[float]
    s_prime: Optional[float]
    gated: bool
    prediction: Optional[EmotionPrediction]
    label: object = None


def run_system(system: TrainedSystem, utts: Sequence[Utterance], threshold: float = DEFAULT_THRESHOLD) -> List[UtteranceOutput]:
    """Apply a trained variant's test-time path to prepared utterances."""
    v = system.variant
    outs = []
    mode = {"s_clean": "raw", "s_noisy": "raw", "s_en": "enhanced", "s_en_prime": "enhanced", "nrser": "reconstituted"}[v]
    feats, keep = [], []
    for u in utts:
        raw = s_prime = None
        gated = False
        if v == "nrser":
            raw = float(raw_scores(u.similarity[None, :], system.scorer)[0])
            s_prime = float(clamp(raw))
            gated = raw < threshold
        outs.append(UtteranceOutput(u.id, u.group, u.group != "noise-only", raw, s_prime, gated, None, u.label))
        if not gated:
            feats.append(waveform_features(input_waveform(u, mode, system.scorer)))
            keep.append(len(outs) - 1)
    if feats:
        for i, p in zip(keep, predict_features(np.vstack(feats), system.emotion)):
            outs[i].prediction = p
    return outs


def evaluate_outputs(outs: Sequence[UtteranceOutput], runtime_s: float = 0.0) -> EvalReport:
    labeled = [o for o in outs if o.label is not None]
    y_true = [o.label.category for o in labeled]
    y_pred = [o.prediction.category if o.prediction is not None else -1 for o in labeled]
    f1 = macro_f1(y_true, y_pred) if labeled else float("nan")
    scored = [o for o in labeled if o.prediction is not None]
    cccs = {}
    for a in ATTRIBUTES:
        if len(scored) >= 2:
            cccs[a] = ccc([getattr(o.prediction, a) for o in scored], [getattr(o.label, a) for o in scored])
        else:
            cccs[a] = float("nan")
    acc = detection_accuracy([o.is_speech for o in outs], [not o.gated for o in outs])
    noise = [o for o in outs if not o.is_speech]
    speech = [o for o in outs if o.is_speech]
    groups: Dict[str, List[float]] = {}
    for o in outs:
        if o.raw_score is not None:
            groups.setdefault(o.group, []).append(o.raw_score)
    order = {g: i for i, g in enumerate(GROUP_ORDER)}
    mean_s = {g: float(np.mean(v)) for g, v in sorted(groups.items(), key=lambda kv: order.get(kv[0], 99))}
    return EvalReport(
        n=len(outs),
        ccc=cccs,
        macro_f1=f1,
        detection_accuracy=acc,
        gated_rate_noise=float(np.mean([o.gated for o in noise])) if noise else float("nan"),
        gated_rate_speech=float(np.mean([o.gated for o in speech])) if speech else float("nan"),
        mean_score=mean_s,
        runtime_s=runtime_s,
    )


def evaluate(system: TrainedSystem, utts: Sequence[Utterance], threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    t0 = time.perf_counter()
    outs = run_system(system, utts, threshold)
    return evaluate_outputs(outs, time.perf_counter() - t0)


def write_predictions_csv(path, outs: Sequence[UtteranceOutput]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "category"] + [f"p{k}" for k in range(10)] + list(ATTRIBUTES) + ["s_prime", "gated"])
    for o in outs:
        s = "" if o.s_prime is None else repr(o.s_prime)
        if o.prediction is None:
            w.writerow([o.id, ""] + [""] * 10 + ["", "", "", s, int(o.gated)])
        else:
            p = o.prediction
            w.writerow([o.id, p.category] + [repr(float(v)) for v in p.category_probs]
                       + [repr(p.arousal), repr(p.valence), repr(p.dominance), s, int(o.gated)])
    atomic_write_text(path, buf.getvalue())


# ---------------------------------------------------------------- comparison

def compare_variants(
    config: SystemConfig,
    corpus: Corpus,
    run_dir,
    variants: Sequence[str] = VARIANTS,
    conditions: Sequence[str] = CONDITIONS,
    seeds: Sequence[int] = (0,),
    out_csv=None,
    jobs: int = 1,
) -> List[dict]:
    """One row per (variant, test condition), metrics averaged over seeds.

    Per-seed values are kept in the ``per_seed`` field of each row. An extra
    ``gated_rate_noise`` column gives each variant's refusal rate on the
    test noise-only files.
    """
    run_dir = Path(run_dir)
    cache: dict = {}
    tests = {c: prepare_utterances(corpus.test_condition(c), config.enhancer, jobs) for c in conditions}
    noise_only = prepare_utterances(by_split(corpus.noise, "test"), config.enhancer, jobs, require_labels=False)
    per: Dict[Tuple[str, str], List[dict]] = {}
    for seed in seeds:
        for v in variants:
            cfg = config.for_variant(v).seeded(seed)
            system = train_variant(cfg, corpus, run_dir / f"seed{seed}" / v, jobs, cache)
            refusal = evaluate(system, noise_only, cfg.threshold).gated_rate_noise
            for c in conditions:
                row = evaluate(system, tests[c], cfg.threshold).row()
                row["gated_rate_noise"] = refusal
                per.setdefault((v, c), []).append(row)
    rows = []
    for v in variants:
        for c in conditions:
            seeds_rows = per[(v, c)]
            row = {"variant": v, "condition": c}
            for k in seeds_rows[0]:
                row[k] = float(np.mean([r[k] for r in seeds_rows]))
            row["per_seed"] = seeds_rows
            rows.append(row)
    if out_csv is not None:
        keys = [k for k in rows[0] if k != "per_seed"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for r in rows:
            w.writerow([r[k] if isinstance(r[k], str) else repr(r[k]) for k in keys])
        atomic_write_text(out_csv, buf.getvalue())
    return rows


# ---------------------------------------------------------------- data selection

@dataclass
class FilterReport:
    kept: List[ManifestRecord]
    rejected: List[Tuple[str, Optional[float], str]]  # (id, raw score or None, reason)


def filter_manifest(
    records: Sequence[ManifestRecord],
    scorer: LinearScorer,
    enhancer: EnhancerConfig = EnhancerConfig(),
    threshold: float = DEFAULT_THRESHOLD,
) -> FilterReport:
    """Keep records whose score reaches ``threshold``.

    The comparison uses S' = clamp(S); for thresholds in (0, 1] this is the
    same decision as on the raw score, and threshold 0 keeps every readable
    record even when a raw score dips below zero.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    kept, rejected = [], []
    for rec in records:
        try:
            w = load_audio(rec.path)
        except AudioError as exc:
            rejected.append((rec.id, None, f"unreadable: {exc}"))
            continue
        _, s_orig, s_enh = enhance_waveform(w, enhancer, rec.id)
        raw = float(raw_scores(similarity_feature(s_orig, s_enh)[None, :], scorer)[0])
        if clamp(raw) >= threshold:
            kept.append(rec)
        else:
            rejected.append((rec.id, raw, "below threshold"))
    return FilterReport(kept, rejected)
