"""The whole system: three training phases, inference with gating, and
the five-way comparison against simpler baselines.

Phase 1 trains the SNR-level scorer, phase 2 the emotion block on enhanced
speech, and phase 3 fine-tunes both on reconstituted speech
(``w_in * S' + w_en * (1 - S')``). Afterwards the script runs a few files
through inference and prints the comparison table for clean, 12 dB and
8 dB test data (one seed; the test suite averages three).

    python3 demos/03_full_pipeline.py [--work-dir DIR]
"""

import argparse
import tempfile
from pathlib import Path

from nrser.audio_io import read_wav
from nrser.manifest import by_split
from nrser.pipeline import SystemConfig, build_desk_corpus, compare_variants, infer, train_nrser


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work-dir", type=Path, default=None)
    args = ap.parse_args()
    work = args.work_dir or Path(tempfile.mkdtemp(prefix="nrser-demo3-"))

    corpus = build_desk_corpus(work, seed=0)
    system = train_nrser(SystemConfig(), corpus, work / "run")
    for phase, hist in system.histories.items():
        losses = ", ".join(f"{h['train_loss']:.3f}" for h in hist[:4])
        print(f"{phase}: {len(hist)} epochs, first train losses {losses}")

    print("\ninference")
    picks = [("noise", by_split(corpus.noise, "test")[0]),
             ("clean", by_split(corpus.speech, "test")[0]),
             ("8 dB", corpus.test_mixtures["8"][0])]
    for name, rec in picks:
        r = infer(read_wav(rec.path), system.emotion, system.scorer, utterance_id=rec.id)
        truth = "" if rec.labels is None else f"   (true category {rec.labels.category})"
        print(f"  {name:>5}: {r.describe()}{truth}")

    print("\nvariant comparison (macro-F1 over 10 categories, one seed)")
    rows = compare_variants(SystemConfig(), corpus, work / "compare", out_csv=work / "compare.csv")
    table = {(r["variant"], r["condition"]): r for r in rows}
    print(f"  {'variant':<11} {'clean':>7} {'12 dB':>7} {'8 dB':>7}  noise refused")
    for v in ("s_clean", "s_noisy", "s_en", "s_en_prime", "nrser"):
        f1 = [table[(v, c)]["macro_f1"] for c in ("clean", "12", "8")]
        print(f"  {v:<11} {f1[0]:7.3f} {f1[1]:7.3f} {f1[2]:7.3f}  {table[(v, 'clean')]['gated_rate_noise']:.2f}")
    print(f"\nfull table with CCC columns: {work / 'compare.csv'}")


if __name__ == "__main__":
    main()
