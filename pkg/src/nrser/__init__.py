"""Noise-robust speech emotion recognition with SNR-level scoring and waveform reconstitution."""

from .audio_io import Waveform, load_audio, read_wav, resample_to_16k, write_wav
from .dsp import DEFAULT_STFT, Spectrogram, StftConfig, istft, log_mel, stft
from .emotion import EmotionModel, EmotionPrediction, finetune_joint, predict, train_emotion
from .enhancer import EnhancerConfig, enhance, enhance_waveform
from .manifest import EmotionLabel, ManifestRecord, MixSpec, read_manifest, write_manifest
from .metrics import ccc, detection_accuracy, macro_f1
from .mixing import mix, synthesize_corpus
from .pipeline import (
    EvalReport,
    SystemConfig,
    compare_variants,
    evaluate,
    filter_manifest,
    infer,
    run_phase1,
    run_phase2,
    run_phase3,
)
from .reconstitution import reconstitute
from .snr_detector import LinearScorer, SnrScore, classify_noise_only, score, similarity_feature, train_scorer

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_STFT",
    "EmotionLabel",
    "EmotionModel",
    "EmotionPrediction",
    "EnhancerConfig",
    "EvalReport",
    "LinearScorer",
    "ManifestRecord",
    "MixSpec",
    "SnrScore",
    "Spectrogram",
    "StftConfig",
    "SystemConfig",
    "Waveform",
    "ccc",
    "classify_noise_only",
    "compare_variants",
    "detection_accuracy",
    "enhance",
    "enhance_waveform",
    "evaluate",
    "filter_manifest",
    "finetune_joint",
    "infer",
    "istft",
    "load_audio",
    "log_mel",
    "macro_f1",
    "mix",
    "predict",
    "read_manifest",
    "read_wav",
    "reconstitute",
    "resample_to_16k",
    "run_phase1",
    "run_phase2",
    "run_phase3",
    "score",
    "similarity_feature",
    "stft",
    "synthesize_corpus",
    "train_emotion",
    "train_scorer",
    "write_manifest",
    "write_wav",
]
