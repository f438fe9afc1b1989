import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nrser.audio_io import read_wav
from nrser.manifest import EmotionLabel, ManifestRecord, MixSpec, by_split, read_manifest, write_manifest
from nrser.synth import NOISE_KINDS, PROTOTYPES, generate_synthetic_desk_data, synth_noise
from nrser.mixing import make_rng

labels = st.builds(EmotionLabel, st.integers(0, 9), st.floats(1, 7), st.floats(1, 7), st.floats(1, 7))


def test_label_ranges():
    with pytest.raises(ValueError):
        EmotionLabel(10, 3, 3, 3)
    with pytest.raises(ValueError):
        EmotionLabel(0, 0.5, 3, 3)
    with pytest.raises(ValueError):
        EmotionLabel(0, 3, 3, 7.5)


def test_record_invariants():
    with pytest.raises(ValueError):
        ManifestRecord("a.wav", "dev", "speech")
    with pytest.raises(ValueError):
        ManifestRecord("a.wav", "train", "music")
    with pytest.raises(ValueError):
        ManifestRecord("a.wav", "train", "mixture")
    with pytest.raises(ValueError):
        MixSpec(float("inf"), "n", 0)
    assert ManifestRecord("x/y/utt_7.wav", "test", "noise").id == "utt_7"


@given(st.lists(st.tuples(st.sampled_from(["train", "val", "test"]), st.one_of(st.none(), labels),
                          st.one_of(st.none(), st.tuples(st.floats(-20, 40), st.integers(0, 2**63 - 1)))),
                max_size=12))
def test_jsonl_round_trip(tmp_path_factory, items):
    d = tmp_path_factory.mktemp("man")
    recs = []
    for i, (split, lab, mixspec) in enumerate(items):
        if mixspec is None:
            recs.append(ManifestRecord(str(d / f"s{i}.wav"), split, "speech", lab))
        else:
            recs.append(ManifestRecord(str(d / f"m{i}.wav"), split, "mixture", lab,
                                       MixSpec(mixspec[0], str(d / "n.wav"), mixspec[1])))
    path = write_manifest(recs, d / "m.jsonl")
    assert read_manifest(path) == recs
    for line in path.read_text().splitlines():
        obj = json.loads(line)
        assert not obj["path"].startswith("/")
        assert set(obj) <= {"path", "split", "kind", "category", "arousal", "valence", "dominance",
                            "noise_path", "snr_db", "seed"}


def test_bad_manifest_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"path": "a.wav", "split": "train"}\n')
    with pytest.raises(ValueError, match="bad.jsonl:1"):
        read_manifest(p)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("syn")
    return d, generate_synthetic_desk_data(d, seed=5, n_speech=50, n_noise=15)


def test_corpus_shape_and_labels(corpus):
    d, (speech, noise) = corpus
    assert len(speech) == 50 and len(noise) == 15
    for r in speech:
        assert r.kind == "speech" and r.labels is not None
        assert 0 <= r.labels.category <= 9
        assert all(1 <= a <= 7 for a in r.labels.attributes)
        w = read_wav(r.path)
        assert w.sample_rate == 16000 and np.max(np.abs(w.samples)) <= 1.0
    assert {r.labels.category for r in speech} == set(range(10))
    assert {r.id.split("_")[1] for r in noise} == set(NOISE_KINDS)
    for split in ("train", "val", "test"):
        assert by_split(speech, split) and by_split(noise, split)


def test_corpus_deterministic(corpus, tmp_path):
    d, (speech, noise) = corpus
    speech2, _ = generate_synthetic_desk_data(tmp_path, seed=5, n_speech=50, n_noise=15)
    for a, b in zip(speech, speech2):
        assert a.labels == b.labels
        assert np.array_equal(read_wav(a.path).samples, read_wav(b.path).samples)


def test_default_sizes_declared():
    import inspect
    sig = inspect.signature(generate_synthetic_desk_data)
    assert sig.parameters["n_speech"].default == 200 and sig.parameters["n_noise"].default == 100


def test_prototypes_cover_categories():
    assert len(PROTOTYPES) == 10
    for p in PROTOTYPES:
        assert 80 <= p.pitch <= 300 and 2 <= p.mod_rate <= 8


@pytest.mark.parametrize("kind", NOISE_KINDS)
def test_noise_kinds(kind):
    y = synth_noise(make_rng(0), kind, 8000)
    assert y.shape == (8000,) and np.all(np.isfinite(y))
    assert 0.02 <= np.sqrt(np.mean(y ** 2)) <= 0.15 + 1e-9
    with pytest.raises(ValueError):
        synth_noise(make_rng(0), "brown", 10)
