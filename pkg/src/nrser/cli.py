"""``nrser`` command-line entry point.

Settings come from built-in defaults, then an optional ``--config`` JSON
file (keys are flag names with ``-`` or ``_``), then explicit flags.
Exit status: 0 on success, 1 on a usage error, 2 when the command fails.
Verbosity follows ``NRSER_LOG`` (error, warn, info, debug).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

from .audio_io import AudioError, load_audio, write_wav
from .checkpoint import CheckpointError, load_scorer
from .emotion import emotion_hyper, prepare_utterances
from .enhancer import KINDS, EnhancerConfig, ExternalEnhancementError, enhance_waveform
from .manifest import ManifestRecord, atomic_write_text, by_split, read_manifest, write_manifest
from .mixing import TRAIN_SNRS, synthesize_corpus
from .optim import DivergenceError
from .pipeline import (
    CONDITIONS,
    VARIANTS,
    MissingCheckpointError,
    SystemConfig,
    TrainedSystem,
    compare_variants,
    corpus_from_manifests,
    evaluate_outputs,
    filter_manifest,
    infer,
    load_system,
    run_phase1,
    run_phase2,
    run_phase3,
    run_system,
    write_predictions_csv,
)
from .snr_detector import DEFAULT_THRESHOLD, score_manifest, scorer_hyper
from .synth import generate_synthetic_desk_data

log = logging.getLogger("nrser")

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}

# subcommands whose output depends on a random seed
STOCHASTIC = {"synth-data", "mix", "train-snr", "train-emotion", "finetune", "compare"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


class _Fmt(argparse.ArgumentDefaultsHelpFormatter):
    pass


# ---------------------------------------------------------------- flag groups

def _common(p, seed=False, jobs=False):
    p.add_argument("--config", type=Path, default=None, help="JSON file of flag defaults")
    if seed:
        p.add_argument("--seed", type=int, default=None, help="random seed (required)")
    if jobs:
        p.add_argument("--jobs", type=int, default=1, help="parallel workers for per-utterance work")


def _enhancer_flags(p):
    g = p.add_argument_group("speech enhancement")
    g.add_argument("--enhancer", choices=KINDS, default="spectral_subtraction", help="enhancement method")
    g.add_argument("--alpha", type=float, default=1.0, help="over-subtraction factor")
    g.add_argument("--beta", type=float, default=0.02, help="spectral floor")
    g.add_argument("--noise-quantile", type=float, default=0.10, help="fraction of quietest frames for the noise profile")
    g.add_argument("--external-dir", type=Path, default=None, help="directory of pre-enhanced <id>.wav files")


def _hyper_flags(p, defaults, prefix=""):
    g = p.add_argument_group(f"{prefix or 'training'} hyperparameters".strip())
    dash = f"{prefix}-" if prefix else ""
    g.add_argument(f"--{dash}lr", type=float, default=defaults.lr, help="learning rate")
    g.add_argument(f"--{dash}momentum", type=float, default=defaults.momentum, help="SGD momentum")
    g.add_argument(f"--{dash}batch-size", type=int, default=defaults.batch_size, help="minibatch size")
    g.add_argument(f"--{dash}patience", type=int, default=defaults.patience, help="early-stopping patience in epochs")
    g.add_argument(f"--{dash}max-epochs", type=int, default=defaults.max_epochs, help="epoch cap")


def _threshold(p):
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD, help="noise-only gate on the raw score")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nrser", description="Noise-robust speech emotion recognition toolkit.", formatter_class=_Fmt)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def add(name, help_):
        return sub.add_parser(name, help=help_, description=help_, formatter_class=_Fmt)

    p = add("synth-data", "Generate a synthetic labeled speech corpus and noise corpus.")
    _common(p, seed=True)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--n-speech", type=int, default=200, help="number of speech files")
    p.add_argument("--n-noise", type=int, default=100, help="number of noise files")
    p.add_argument("--split", choices=("train", "val", "test"), default=None, help="put every record in one split")

    p = add("mix", "Mix speech with noise at the given SNR levels.")
    _common(p, seed=True, jobs=True)
    p.add_argument("--speech", type=Path, required=True, help="speech manifest")
    p.add_argument("--noise", type=Path, required=True, help="noise manifest")
    p.add_argument("--snr", type=float, nargs="+", default=list(TRAIN_SNRS), help="SNR levels in dB")
    p.add_argument("--out", type=Path, required=True, help="output directory; manifest goes to <out>/mixtures.jsonl")
    p.add_argument("--any-split-noise", action="store_true", help="draw noise from every split, not just the speech record's")

    p = add("enhance", "Enhance one WAV file or every file of a manifest.")
    _common(p, jobs=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav", type=Path, help="input WAV file")
    src.add_argument("--manifest", type=Path, help="input manifest")
    p.add_argument("--out", type=Path, required=True, help="output WAV (with --wav) or directory (with --manifest)")
    _enhancer_flags(p)

    p = add("score", "Write SNR-level scores for every record of a manifest.")
    _common(p, jobs=True)
    p.add_argument("--manifest", type=Path, required=True, help="manifest to score")
    p.add_argument("--scorer", type=Path, required=True, help="scorer checkpoint")
    p.add_argument("--out", type=Path, required=True, help="per-record scores CSV")
    p.add_argument("--summary", type=Path, default=None, help="per-group mean score CSV")
    _threshold(p)
    _enhancer_flags(p)

    p = add("train-snr", "Phase 1: train the SNR-level scorer on clean speech and noise.")
    _common(p, seed=True, jobs=True)
    p.add_argument("--speech", type=Path, required=True, help="clean speech manifest")
    p.add_argument("--noise", type=Path, required=True, help="noise manifest")
    p.add_argument("--run-dir", type=Path, required=True, help="directory for checkpoints and logs")
    _hyper_flags(p, scorer_hyper())
    _enhancer_flags(p)

    p = add("train-emotion", "Phase 2: train the emotion block on enhanced speech.")
    _common(p, seed=True, jobs=True)
    p.add_argument("--speech", type=Path, required=True, help="labeled speech manifest (clean)")
    p.add_argument("--mixtures", type=Path, default=None, help="labeled noisy-speech manifest")
    p.add_argument("--run-dir", type=Path, required=True, help="run directory holding the phase-1 checkpoint")
    _hyper_flags(p, emotion_hyper())
    _enhancer_flags(p)

    p = add("finetune", "Phase 3: fine-tune emotion block and scorer jointly on reconstituted speech.")
    _common(p, seed=True, jobs=True)
    p.add_argument("--speech", type=Path, required=True, help="labeled speech manifest (clean)")
    p.add_argument("--noise", type=Path, required=True, help="noise manifest")
    p.add_argument("--mixtures", type=Path, default=None, help="labeled noisy-speech manifest")
    p.add_argument("--run-dir", type=Path, required=True, help="run directory holding phase-1 and phase-2 checkpoints")
    p.add_argument("--no-scorer-grad", action="store_true", help="do not backpropagate the emotion loss into the scorer")
    _hyper_flags(p, emotion_hyper())
    _hyper_flags(p, scorer_hyper(), prefix="scorer")
    _enhancer_flags(p)

    p = add("infer", "Recognize emotion in one WAV file, or report that it was gated as noise.")
    _common(p)
    p.add_argument("--wav", type=Path, required=True, help="input WAV file")
    p.add_argument("--run-dir", type=Path, required=True, help="trained run directory")
    _threshold(p)
    _enhancer_flags(p)

    p = add("eval", "Evaluate a trained run on labeled and noise-only manifests.")
    _common(p, jobs=True)
    p.add_argument("--manifest", type=Path, nargs="+", required=True, help="test manifests")
    p.add_argument("--run-dir", type=Path, required=True, help="trained run directory")
    p.add_argument("--out", type=Path, required=True, help="predictions CSV")
    p.add_argument("--report", type=Path, default=None, help="EvalReport JSON")
    _threshold(p)
    _enhancer_flags(p)

    p = add("compare", "Train and test all system variants on clean, 12 dB and 8 dB data.")
    _common(p, seed=True, jobs=True)
    p.add_argument("--speech", type=Path, required=True, help="labeled speech manifest with train/val/test splits")
    p.add_argument("--noise", type=Path, required=True, help="noise manifest with train/val/test splits")
    p.add_argument("--work-dir", type=Path, required=True, help="directory for mixtures and checkpoints")
    p.add_argument("--out", type=Path, required=True, help="comparison CSV")
    p.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS), help="variants to train")
    p.add_argument("--n-seeds", type=int, default=1, help="training seeds to average (seed, seed+1, ...)")
    _threshold(p)
    _hyper_flags(p, emotion_hyper())
    _enhancer_flags(p)

    p = add("filter", "Keep manifest records whose raw SNR-level score reaches the threshold.")
    _common(p)
    p.add_argument("--manifest", type=Path, required=True, help="manifest to filter")
    scorer = p.add_mutually_exclusive_group(required=True)
    scorer.add_argument("--scorer", type=Path, help="scorer checkpoint")
    scorer.add_argument("--run-dir", type=Path, help="trained run directory (uses its final scorer)")
    p.add_argument("--out", type=Path, required=True, help="filtered manifest")
    p.add_argument("--report", type=Path, default=None, help="CSV of rejected ids, scores and reasons")
    _threshold(p)
    _enhancer_flags(p)
    return parser


# ---------------------------------------------------------------- helpers

def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if command in action.choices:
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def _read_config(path: Path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _config_path(argv: List[str]) -> Optional[Path]:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    known, _ = pre.parse_known_args(argv)
    return known.config


def parse_args(argv: List[str]) -> argparse.Namespace:
    parser = build_parser()
    config = _config_path(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if config is not None and command is not None:
        sp = _subparser(parser, command)
        cfg = _read_config(config)
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - known - {"config"})
        if unknown:
            raise UsageError(f"config {config} has unknown keys: {', '.join(unknown)}")
        for a in sp._actions:
            if a.dest not in cfg:
                continue
            v = cfg[a.dest]
            if a.type is not None and v is not None:
                cfg[a.dest] = [a.type(x) for x in v] if isinstance(v, list) else a.type(v)
            a.required = False
        for group in sp._mutually_exclusive_groups:
            if any(a.dest in cfg for a in group._group_actions):
                group.required = False
        sp.set_defaults(**cfg)
    args = parser.parse_args(argv)
    if args.command in STOCHASTIC and getattr(args, "seed", None) is None:
        raise UsageError(f"nrser {args.command}: --seed is required")
    if hasattr(args, "threshold") and not 0.0 <= args.threshold <= 1.0:
        raise UsageError(f"--threshold must lie in [0, 1], got {args.threshold}")
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be at least 1")
    return args


def _enhancer(args) -> EnhancerConfig:
    try:
        return EnhancerConfig(args.enhancer, args.alpha, args.beta, args.noise_quantile,
                              None if args.external_dir is None else str(args.external_dir))
    except ValueError as exc:
        raise UsageError(str(exc))


def _hyper(args, base, prefix=""):
    get = lambda k: getattr(args, f"{prefix}_{k}" if prefix else k)
    return type(base)(**dict(base.to_dict(), lr=get("lr"), momentum=get("momentum"), batch_size=get("batch_size"),
                             patience=get("patience"), max_epochs=get("max_epochs"), seed=args.seed))


def _system(args, variant="nrser") -> SystemConfig:
    seed = getattr(args, "seed", None) or 0
    cfg = SystemConfig(variant=variant, enhancer=_enhancer(args),
                       threshold=getattr(args, "threshold", DEFAULT_THRESHOLD), seed=seed)
    cfg.scorer = type(cfg.scorer)(**dict(cfg.scorer.to_dict(), seed=seed))
    cfg.emotion = type(cfg.emotion)(**dict(cfg.emotion.to_dict(), seed=seed))
    return cfg


def _emotion_records(args, split):
    recs = by_split(read_manifest(args.speech), split)
    if args.mixtures is not None:
        recs += by_split(read_manifest(args.mixtures), split)
    return recs


# ---------------------------------------------------------------- commands

def cmd_synth_data(args):
    speech, noise = generate_synthetic_desk_data(args.out, args.seed, args.n_speech, args.n_noise, args.split)
    print(f"wrote {len(speech)} speech and {len(noise)} noise files to {args.out}")


def cmd_mix(args):
    recs = synthesize_corpus(read_manifest(args.speech), read_manifest(args.noise), args.snr, args.seed,
                             args.out, match_split=not args.any_split_noise, jobs=args.jobs)
    path = write_manifest(recs, Path(args.out) / "mixtures.jsonl")
    print(f"wrote {len(recs)} mixtures; manifest {path}")


def cmd_enhance(args):
    cfg = _enhancer(args)
    if args.wav is not None:
        w = load_audio(args.wav)
        w_en, _, _ = enhance_waveform(w, cfg, args.wav.stem)
        write_wav(w_en, args.out)
        print(f"wrote {args.out}")
        return
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = read_manifest(args.manifest)
    for rec in records:
        w_en, _, _ = enhance_waveform(load_audio(rec.path), cfg, rec.id)
        write_wav(w_en, out / f"{rec.id}.wav")
    print(f"enhanced {len(records)} files into {out}")


def cmd_score(args):
    scorer, _ = load_scorer(args.scorer)
    rows, summary = score_manifest(read_manifest(args.manifest), scorer, _enhancer(args), args.threshold,
                                   args.out, args.summary, args.jobs)
    print(f"scored {len(rows)} records; wrote {args.out}")


def cmd_train_snr(args):
    cfg = _system(args)
    cfg.scorer = _hyper(args, cfg.scorer)
    res = run_phase1(cfg, read_manifest(args.speech), read_manifest(args.noise), args.run_dir, args.jobs)
    print(f"phase 1 done after {len(res.history)} epochs; wrote {res.paths[0]}")


def cmd_train_emotion(args):
    cfg = _system(args)
    cfg.emotion = _hyper(args, cfg.emotion)
    train = prepare_utterances(_emotion_records(args, "train"), cfg.enhancer, args.jobs)
    val = prepare_utterances(_emotion_records(args, "val"), cfg.enhancer, args.jobs)
    res = run_phase2(cfg, train, val, args.run_dir)
    print(f"phase 2 done after {len(res.history)} epochs; wrote {res.paths[0]}")


def cmd_finetune(args):
    cfg = _system(args)
    cfg.emotion = _hyper(args, cfg.emotion)
    cfg.scorer = _hyper(args, cfg.scorer, "scorer")
    cfg.through_scorer = not args.no_scorer_grad
    train = prepare_utterances(_emotion_records(args, "train"), cfg.enhancer, args.jobs)
    val = prepare_utterances(_emotion_records(args, "val"), cfg.enhancer, args.jobs)
    res = run_phase3(cfg, train, val, read_manifest(args.speech), read_manifest(args.noise), args.run_dir, args.jobs)
    print(f"phase 3 done after {len(res.history)} epochs; wrote {', '.join(map(str, res.paths))}")


def cmd_infer(args):
    emotion, scorer = load_system(args.run_dir)
    res = infer(load_audio(args.wav), emotion, scorer, _enhancer(args), args.threshold, args.wav.stem)
    print(res.describe())


def cmd_eval(args):
    emotion, scorer = load_system(args.run_dir)
    cfg = _system(args)
    records: List[ManifestRecord] = []
    for m in args.manifest:
        records += read_manifest(m)
    utts = prepare_utterances(records, cfg.enhancer, args.jobs, require_labels=False)
    t0 = time.perf_counter()
    outs = run_system(TrainedSystem("nrser", emotion, scorer), utts, args.threshold)
    report = evaluate_outputs(outs, time.perf_counter() - t0)
    write_predictions_csv(args.out, outs)
    payload = dict(report.row(), mean_score=report.mean_score)
    if args.report is not None:
        atomic_write_text(args.report, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(json.dumps(payload, sort_keys=True))


def cmd_compare(args):
    cfg = _system(args)
    cfg.emotion = _hyper(args, cfg.emotion)
    corpus = corpus_from_manifests(read_manifest(args.speech), read_manifest(args.noise), args.work_dir,
                                   args.seed, test_snrs=(12.0, 8.0), jobs=args.jobs)
    seeds = [args.seed + k for k in range(args.n_seeds)]
    rows = compare_variants(cfg, corpus, Path(args.work_dir) / "runs", args.variants, CONDITIONS, seeds,
                            args.out, args.jobs)
    for r in rows:
        print(f"{r['variant']:<11} {r['condition']:>5}  macro_f1={r['macro_f1']:.3f}  "
              f"gated_noise={r['gated_rate_noise']:.2f}")


def cmd_filter(args):
    if args.scorer is not None:
        scorer, _ = load_scorer(args.scorer)
    else:
        _, scorer = load_system(args.run_dir)
    rep = filter_manifest(read_manifest(args.manifest), scorer, _enhancer(args), args.threshold)
    write_manifest(rep.kept, args.out)
    if args.report is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "raw_score", "reason"])
        for rid, raw, reason in rep.rejected:
            w.writerow([rid, "" if raw is None else repr(raw), reason])
        atomic_write_text(args.report, buf.getvalue())
    print(f"kept {len(rep.kept)} of {len(rep.kept) + len(rep.rejected)} records; wrote {args.out}")


COMMANDS = {
    "synth-data": cmd_synth_data,
    "mix": cmd_mix,
    "enhance": cmd_enhance,
    "score": cmd_score,
    "train-snr": cmd_train_snr,
    "train-emotion": cmd_train_emotion,
    "finetune": cmd_finetune,
    "infer": cmd_infer,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "filter": cmd_filter,
}

RUNTIME_ERRORS = (OSError, ValueError, AudioError, CheckpointError, MissingCheckpointError,
                  ExternalEnhancementError, DivergenceError, RuntimeError)


def _setup_logging():
    level = LOG_LEVELS.get(os.environ.get("NRSER_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc).rstrip("\n") + "\n")
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"nrser {args.command}: {exc}\n")
        return 1
    except RUNTIME_ERRORS as exc:
        log.debug("command failed", exc_info=True)
        sys.stderr.write(f"nrser {args.command}: error: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
