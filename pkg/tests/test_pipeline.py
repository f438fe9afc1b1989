import csv

import numpy as np
import pytest

from nrser.audio_io import read_wav
from nrser.emotion import EmotionLabel, EmotionPrediction, predict
from nrser.manifest import ManifestRecord, by_split
from nrser.pipeline import (
    CONDITIONS,
    PHASE_FILES,
    VARIANTS,
    MissingCheckpointError,
    SystemConfig,
    UtteranceOutput,
    evaluate_outputs,
    filter_manifest,
    infer,
    load_system,
    run_phase2,
    run_phase3,
    run_system,
    write_predictions_csv,
)
from nrser.emotion import prepare_utterances
from nrser.snr_detector import LinearScorer


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(variant="s_magic")
    with pytest.raises(ValueError):
        SystemConfig(threshold=1.2)
    cfg = SystemConfig().seeded(4)
    assert cfg.scorer.seed == cfg.emotion.seed == cfg.seed == 4


def test_phases_need_predecessors(tmp_path):
    with pytest.raises(MissingCheckpointError, match="phase 1"):
        run_phase2(SystemConfig(), [], [], tmp_path)
    (tmp_path / PHASE_FILES[1][0]).write_bytes(b"")
    with pytest.raises(MissingCheckpointError, match="phase 2"):
        run_phase3(SystemConfig(), [], [], [], [], tmp_path)
    with pytest.raises(MissingCheckpointError):
        load_system(tmp_path / "empty")


def test_full_run_writes_artifacts(trained_run):
    system, run_dir = trained_run
    for phase, names in PHASE_FILES.items():
        for name in names:
            assert (run_dir / name).is_file()
        assert (run_dir / f"phase{phase}_log.jsonl").is_file()
    emotion, scorer = load_system(run_dir)
    assert np.allclose(scorer.weights, system.scorer.weights)


def test_infer_gates_noise_and_passes_speech(trained_run, desk_corpus):
    system, _ = trained_run
    noise = by_split(desk_corpus.noise, "test")
    speech = by_split(desk_corpus.speech, "test")
    gated = [infer(read_wav(r.path), system.emotion, system.scorer, utterance_id=r.id) for r in noise]
    passed = [infer(read_wav(r.path), system.emotion, system.scorer, utterance_id=r.id) for r in speech]
    assert np.mean([g.gated for g in gated]) >= 0.9
    assert np.mean([not p.gated for p in passed]) >= 0.9
    g = next(r for r in gated if r.gated)
    assert g.prediction is None and g.raw_score < 0.6 and g.describe().startswith("gated (S'=")
    p = next(r for r in passed if not r.gated)
    assert p.s_prime > 0.6 and "category=" in p.describe()


def test_infer_unit_score_matches_raw_path(trained_run, desk_corpus):
    system, _ = trained_run
    w = read_wav(by_split(desk_corpus.speech, "test")[0].path)
    pinned = LinearScorer(np.zeros(201), 3.0)
    r = infer(w, system.emotion, pinned)
    direct = predict(w, system.emotion)
    assert r.s_prime == 1.0
    assert np.array_equal(r.prediction.category_probs, direct.category_probs)
    assert r.prediction.arousal == direct.arousal


def test_evaluate_perfect_oracle():
    labels = [EmotionLabel(c, 1 + c * 0.5, 2 + c * 0.3, 7 - c * 0.4) for c in range(10)]
    outs = []
    for i, lab in enumerate(labels):
        probs = np.eye(10)[lab.category]
        pred = EmotionPrediction(probs, lab.arousal, lab.valence, lab.dominance)
        outs.append(UtteranceOutput(f"u{i}", "clean", True, 0.9, 0.9, False, pred, lab))
    outs.append(UtteranceOutput("n", "noise-only", False, 0.1, 0.1, True, None, None))
    rep = evaluate_outputs(outs)
    assert rep.macro_f1 == 1.0 and all(v == pytest.approx(1.0) for v in rep.ccc.values())
    assert rep.detection_accuracy == 1.0 and rep.gated_rate_noise == 1.0 and rep.gated_rate_speech == 0.0
    assert list(rep.mean_score) == ["noise-only", "clean"]


def test_gated_speech_counts_as_error():
    lab = [EmotionLabel(c, 3, 3, 3) for c in range(10)]
    outs = [UtteranceOutput(f"u{c}", "clean", True, 0.9, 0.9, False,
                            EmotionPrediction(np.eye(10)[c], 3 + c, 3 - c, 3), lab[c]) for c in range(9)]
    outs.append(UtteranceOutput("u9", "8", True, 0.1, 0.1, True, None, lab[9]))
    rep = evaluate_outputs(outs)
    assert rep.macro_f1 == pytest.approx(0.9)
    assert rep.detection_accuracy == pytest.approx(0.9)


def test_evaluation_is_deterministic(trained_run, desk_corpus, tmp_path):
    system, _ = trained_run
    utts = prepare_utterances(desk_corpus.test_condition("8"), SystemConfig().enhancer)
    a, b = run_system(system, utts), run_system(system, utts)
    ra, rb = evaluate_outputs(a), evaluate_outputs(b)
    np.testing.assert_equal(ra.row(), rb.row())
    assert ra.mean_score == rb.mean_score
    write_predictions_csv(tmp_path / "p.csv", a)
    rows = list(csv.reader(open(tmp_path / "p.csv")))
    assert rows[0][:2] == ["id", "category"] and rows[0][-2:] == ["s_prime", "gated"]
    assert len(rows) == len(utts) + 1


def test_comparison_table(comparison):
    rows, path = comparison
    assert len(rows) == 15
    assert {(r["variant"], r["condition"]) for r in rows} == {(v, c) for v in VARIANTS for c in CONDITIONS}
    assert all(len(r["per_seed"]) == 3 for r in rows)
    for r in rows:
        assert 0 <= r["macro_f1"] <= 1
        assert r["macro_f1"] == pytest.approx(np.mean([s["macro_f1"] for s in r["per_seed"]]))
    with open(path) as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 15 and "per_seed" not in table[0]


def test_s_clean_degrades_with_noise(comparison):
    rows, _ = comparison
    f1 = {r["condition"]: r["macro_f1"] for r in rows if r["variant"] == "s_clean"}
    assert f1["clean"] > f1["12"] > f1["8"]


def test_only_nrser_refuses_noise(comparison):
    rows, _ = comparison
    rate = {r["variant"]: r["gated_rate_noise"] for r in rows}
    assert rate["nrser"] > rate["s_clean"] == 0.0
    assert all(rate[v] == 0.0 for v in VARIANTS if v != "nrser")


def test_filter_threshold_bounds(trained_run, heldout_detection_set, tmp_path):
    system, _ = trained_run
    speech, noise, _ = heldout_detection_set
    recs = speech[:5] + noise[:5] + [ManifestRecord(str(tmp_path / "missing.wav"), "test", "noise")]
    rep = filter_manifest(recs, system.scorer, threshold=0.0)
    assert rep.kept == recs[:10]
    assert rep.rejected[0][1] is None and rep.rejected[0][2].startswith("unreadable")
    with pytest.raises(ValueError):
        filter_manifest(recs, system.scorer, threshold=1.0 + 1e-9)


def test_filter_keeps_mostly_speech(trained_run, heldout_detection_set):
    system, _ = trained_run
    speech, noise, _ = heldout_detection_set
    rep = filter_manifest(speech + noise, system.scorer, threshold=0.6)
    kept_speech = sum(r.kind == "speech" for r in rep.kept)
    assert rep.kept and kept_speech / len(rep.kept) >= 0.9
    assert all(score is not None and score < 0.6 for _, score, _ in rep.rejected)
