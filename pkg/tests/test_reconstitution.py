import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nrser.audio_io import Waveform
from nrser.reconstitution import blend, dump_waveforms_csv, reconstitute
from nrser.snr_detector import SnrScore

sig = arrays(np.float64, st.integers(1, 200), elements=st.floats(-1, 1))


def pair(rng, n=500):
    return Waveform(rng.uniform(-1, 1, n)), Waveform(rng.uniform(-1, 1, n))


def test_identities(rng):
    w_in, w_en = pair(rng)
    assert np.array_equal(reconstitute(w_in, w_en, 1.0).w_re.samples, w_in.samples)
    assert np.array_equal(reconstitute(w_in, w_en, 0.0).w_re.samples, w_en.samples)
    # out-of-range scores are clamped before blending
    assert np.array_equal(reconstitute(w_in, w_en, 1.7).w_re.samples, w_in.samples)
    assert np.array_equal(reconstitute(w_in, w_en, -3.0).w_re.samples, w_en.samples)


def test_midpoint_example():
    r = reconstitute(Waveform(np.array([0.4])), Waveform(np.array([0.2])), 0.5)
    assert r.w_re.samples[0] == pytest.approx(0.3, abs=1e-15)
    assert r.s_prime == 0.5 and r.gated


def test_gating_uses_raw_score(rng):
    w_in, w_en = pair(rng)
    assert reconstitute(w_in, w_en, SnrScore(-0.4, 0.0)).gated
    assert not reconstitute(w_in, w_en, SnrScore(0.6, 0.6)).gated
    assert not reconstitute(w_in, w_en, 0.3, threshold=0.2).gated


def test_mismatches():
    with pytest.raises(ValueError, match="length"):
        reconstitute(Waveform(np.zeros(10)), Waveform(np.zeros(11)), 0.5)
    with pytest.raises(ValueError):
        reconstitute(Waveform(np.zeros(10), 8000), Waveform(np.zeros(10)), 0.5)


def test_csv_dump(tmp_path, rng):
    w_in, w_en = pair(rng, 5)
    r = reconstitute(w_in, w_en, 0.25)
    dump_waveforms_csv(tmp_path / "w.csv", w_in, w_en, r.w_re)
    rows = list(csv.reader(open(tmp_path / "w.csv")))
    assert rows[0] == ["index", "w_in", "w_en", "w_re"] and len(rows) == 6
    back = np.array([[float(v) for v in row[1:]] for row in rows[1:]])
    assert np.array_equal(back[:, 2], r.w_re.samples)


@given(sig, st.floats(0, 1))
def test_convex_bound(x, s):
    y = -x[::-1]
    out = blend(x, y, s)
    assert np.all(out <= np.maximum(x, y) + 1e-12) and np.all(out >= np.minimum(x, y) - 1e-12)


@given(sig, st.floats(0, 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linear_in_inputs(x, s, a, b):
    y = np.cos(np.arange(x.size))
    lhs = blend(a * x + b * y, a * y - b * x, s)
    rhs = a * blend(x, y, s) + b * blend(y, -x, s)
    assert np.allclose(lhs, rhs, atol=1e-12)
