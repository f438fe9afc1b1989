import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.io import wavfile

from nrser.audio_io import (
    EmptyAudioError,
    UnreadableAudioError,
    UnsupportedEncodingError,
    Waveform,
    load_audio,
    read_wav,
    resample_to_16k,
    write_wav,
)

from oracles import PCM16_CLIPPED_MAX


def test_pcm16_single_sample(tmp_path):
    p = tmp_path / "one.wav"
    wavfile.write(p, 16000, np.array([16384], dtype=np.int16))
    assert read_wav(p).samples.tolist() == [0.5]


def test_stereo_is_averaged(tmp_path):
    p = tmp_path / "st.wav"
    wavfile.write(p, 16000, np.array([[1.0, 0.0]], dtype=np.float32))
    assert read_wav(p).samples.tolist() == [0.5]


def test_duration(tmp_path):
    p = tmp_path / "3s.wav"
    wavfile.write(p, 16000, np.zeros(48000, dtype=np.int16))
    assert len(read_wav(p)) == 48000


def test_float32_round_trip_exact(tmp_path):
    p = tmp_path / "f.wav"
    assert write_wav(Waveform([0.0, 0.5, -0.5]), p) == 0
    assert read_wav(p).samples.tolist() == [0.0, 0.5, -0.5]


def test_pcm16_clip(tmp_path):
    p = tmp_path / "c.wav"
    assert write_wav(Waveform([1.5]), p, "pcm16") == 1
    assert read_wav(p).samples[0] == PCM16_CLIPPED_MAX


def test_write_errors(tmp_path):
    with pytest.raises(IsADirectoryError):
        write_wav(Waveform([0.1]), tmp_path)
    with pytest.raises(FileNotFoundError):
        write_wav(Waveform([0.1]), tmp_path / "missing" / "x.wav")
    with pytest.raises(ValueError):
        write_wav(Waveform([0.1]), tmp_path / "x.wav", "mp3")


def test_read_errors_are_distinct(tmp_path):
    with pytest.raises(UnreadableAudioError) as e:
        read_wav(tmp_path / "nope.wav")
    assert "nope.wav" in str(e.value)
    junk = tmp_path / "junk.wav"
    junk.write_bytes(b"not a wave file at all")
    with pytest.raises(UnreadableAudioError):
        read_wav(junk)
    i32 = tmp_path / "i32.wav"
    wavfile.write(i32, 16000, np.array([1, 2, 3], dtype=np.int32))
    with pytest.raises(UnsupportedEncodingError):
        read_wav(i32)
    empty = tmp_path / "empty.wav"
    wavfile.write(empty, 16000, np.zeros(0, dtype=np.int16))
    with pytest.raises(EmptyAudioError):
        read_wav(empty)


def test_waveform_invariants():
    with pytest.raises(ValueError):
        Waveform([])
    with pytest.raises(ValueError):
        Waveform([0.0, np.nan])
    with pytest.raises(ValueError):
        Waveform([0.0], 0)


def test_resample_identity():
    w = Waveform(np.arange(10) / 10.0)
    assert resample_to_16k(w) is w


def test_resample_48k_tone():
    t = np.arange(48000) / 48000
    y = resample_to_16k(Waveform(np.sin(2 * np.pi * 1000 * t), 48000))
    assert len(y) == 16000 and y.sample_rate == 16000
    spec = np.abs(np.fft.rfft(y.samples))
    assert np.argmax(spec) * 16000 / 16000 == 1000


def test_resample_8k_length():
    y = resample_to_16k(Waveform(np.zeros(8000), 8000))
    assert abs(len(y) - 16000) <= 1


@pytest.mark.parametrize("rate", [8000, 22050, 44100, 48000])
@pytest.mark.parametrize("freq", [300.0, 1000.0, 3500.0])
def test_resample_tone_fidelity(rate, freq):
    n = rate
    x = 0.8 * np.sin(2 * np.pi * freq * np.arange(n) / rate)
    y = resample_to_16k(Waveform(x, rate)).samples
    core = y[2000:-2000]
    # frequency from a zero-padded FFT peak with parabolic refinement
    spec = np.abs(np.fft.rfft(core * np.hanning(core.size), 1 << 18))
    k = int(np.argmax(spec))
    a, b, c = np.log(spec[k - 1 : k + 2])
    k_hat = k + 0.5 * (a - c) / (a - 2 * b + c)
    f_hat = k_hat * 16000 / (1 << 18)
    assert abs(f_hat - freq) / freq < 1e-3
    amp = np.sqrt(2) * np.sqrt(np.mean(core ** 2))
    assert abs(amp - 0.8) / 0.8 < 0.01


def test_unsupported_rate():
    with pytest.raises(ValueError):
        resample_to_16k(Waveform(np.zeros(10), 12345))


def test_load_audio_resamples(tmp_path):
    p = tmp_path / "a.wav"
    wavfile.write(p, 8000, np.zeros(800, dtype=np.float32))
    w = load_audio(p)
    assert w.sample_rate == 16000 and abs(len(w) - 1600) <= 1


samples = arrays(np.float64, st.integers(1, 300), elements=st.floats(-1, 1, allow_nan=False))


@given(samples)
def test_round_trip_property(tmp_path_factory, x):
    d = tmp_path_factory.mktemp("rt")
    write_wav(Waveform(x), d / "f.wav", "float32")
    assert np.array_equal(read_wav(d / "f.wav").samples, x.astype(np.float32).astype(np.float64))
    write_wav(Waveform(x), d / "p.wav", "pcm16")
    assert np.max(np.abs(read_wav(d / "p.wav").samples - x)) <= 1 / 32768


@given(arrays(np.float64, st.integers(50, 400), elements=st.floats(-1, 1, allow_nan=False)),
       st.floats(-4, 4).filter(lambda a: abs(a) > 1e-3),
       st.sampled_from([8000, 22050, 44100, 48000]))
def test_resampling_is_linear(x, a, rate):
    y1 = resample_to_16k(Waveform(a * x, rate)).samples
    y2 = a * resample_to_16k(Waveform(x, rate)).samples
    scale = max(np.max(np.abs(y2)), 1e-12)
    assert np.max(np.abs(y1 - y2)) <= 1e-6 * scale
