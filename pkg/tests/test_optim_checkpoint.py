import json
import struct

import numpy as np
import pytest

from nrser.checkpoint import (
    MAGIC,
    CheckpointError,
    load_arrays,
    load_emotion,
    load_scorer,
    save_arrays,
    save_emotion,
    save_scorer,
)
from nrser.emotion import EmotionModel, forward
from nrser.optim import SGD, EarlyStopping, TrainHyper, batches, check_finite, DivergenceError
from nrser.snr_detector import LinearScorer, raw_scores


def test_sgd_momentum_sequence():
    p = {"w": np.array([1.0])}
    opt = SGD(p, lr=0.1, momentum=0.9)
    opt.step({"w": np.array([1.0])})  # v = 1
    assert p["w"][0] == pytest.approx(0.9)
    opt.step({"w": np.array([1.0])})  # v = 1.9
    assert p["w"][0] == pytest.approx(0.71)


def test_sgd_updates_in_place():
    w = np.zeros(3)
    p = {"w": w}
    SGD(p, 1.0, 0.0).step({"w": np.ones(3)})
    assert np.array_equal(w, -np.ones(3))


def test_early_stopping_patience():
    es = EarlyStopping(patience=2)
    assert not es.update(0, 1.0, {"a": 0})
    assert not es.update(1, 0.5, {"a": 1})
    assert not es.update(2, 0.6, {"a": 2})
    assert es.update(3, 0.7, {"a": 3})
    assert es.best_epoch == 1 and es.best_state == {"a": 1}


def test_early_stopping_snapshots_state():
    state = {"w": np.zeros(2)}
    es = EarlyStopping(3)
    es.update(0, 1.0, state)
    state["w"] += 5
    assert not np.any(es.best_state["w"])


def test_check_finite():
    check_finite(1.0, "x")
    for bad in (np.nan, np.inf):
        with pytest.raises(DivergenceError, match="epoch 4"):
            check_finite(bad, "x", 4)


def test_batches_cover_everything():
    idx = np.concatenate(list(batches(70, 32, np.random.default_rng(0))))
    assert sorted(idx.tolist()) == list(range(70))
    assert [b.size for b in batches(70, 32, np.random.default_rng(0))] == [32, 32, 6]


def test_hyper_round_trip():
    h = TrainHyper(lr=0.01, batch_size=4, seed=9)
    assert TrainHyper.from_dict(dict(h.to_dict(), extra=1)) == h


def test_scorer_round_trip(tmp_path, rng):
    m = LinearScorer(rng.standard_normal(201), 0.3, rng.standard_normal(201), rng.uniform(0.5, 2, 201))
    path = save_scorer(tmp_path / "s.ckpt", m, {"phase": 1, "seed": 0})
    back, header = load_scorer(path)
    assert header["phase"] == 1 and header["block"] == "snr_scorer"
    # float32 payload
    assert np.allclose(back.weights, m.weights, rtol=1e-6)
    x = rng.uniform(0, 1, (5, 201))
    assert np.allclose(raw_scores(x, back), raw_scores(x, m), rtol=1e-5, atol=1e-5)


def test_emotion_round_trip(tmp_path, rng):
    m = EmotionModel.init(2).with_statistics(rng.standard_normal((10, 128)))
    path = save_emotion(tmp_path / "e.ckpt", m, {"phase": 2})
    back, _ = load_emotion(path)
    assert set(back.params) == set(m.params)
    x = rng.standard_normal((3, 128))
    assert np.allclose(forward(back, x)[0], forward(m, x)[0], atol=1e-4)
    with pytest.raises(CheckpointError, match="not an SNR scorer"):
        load_scorer(path)


def test_layout(tmp_path):
    save_arrays(tmp_path / "a.ckpt", {"x": np.arange(3.0)}, {"phase": 1})
    data = (tmp_path / "a.ckpt").read_bytes()
    assert data[:8] == MAGIC
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12 : 12 + hlen])
    assert header["arrays"] == [{"name": "x", "shape": [3]}]
    assert np.array_equal(np.frombuffer(data[12 + hlen :], "<f4"), [0, 1, 2])


def test_corrupt_checkpoints(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_arrays(tmp_path / "none.ckpt")
    (tmp_path / "bad.ckpt").write_bytes(b"garbage!" + b"\0" * 8)
    with pytest.raises(CheckpointError, match="not an NRSER"):
        load_arrays(tmp_path / "bad.ckpt")
    p = save_arrays(tmp_path / "t.ckpt", {"x": np.ones(4)}, {})
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(CheckpointError, match="payload"):
        load_arrays(p)
    p = save_arrays(tmp_path / "v.ckpt", {"x": np.ones(1)}, {})
    raw = p.read_bytes().replace(b'"schema_version":1', b'"schema_version":9')
    p.write_bytes(raw)
    with pytest.raises(CheckpointError, match="schema"):
        load_arrays(p)
