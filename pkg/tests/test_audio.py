import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acoustic_backdoor.audio import (
    AudioClip,
    AudioError,
    Spectrogram,
    WindowSpec,
    istft,
    load_wav,
    resample,
    rms,
    save_wav,
    stft,
)

from .conftest import fft_peak_hz, sine, write_float32, write_pcm16


def test_clip_rejects_out_of_range():
    with pytest.raises(AudioError):
        AudioClip(np.array([0.5, 1.5]))


def test_clamped_counts_events():
    clip = AudioClip.clamped(np.array([0.5, 1.5, -2.0]))
    assert clip.clamp_events == 2
    assert clip.samples.tolist() == [0.5, 1.0, -1.0]


def test_load_pcm16_zeros(tmp_path):
    write_pcm16(tmp_path / "z.wav", np.zeros(16000))
    clip = load_wav(tmp_path / "z.wav")
    assert clip.sample_rate == 16000
    assert len(clip) == 16000
    assert not clip.samples.any()


def test_load_stereo_downmix(tmp_path):
    stereo = np.column_stack([np.full(1600, 0.5), np.full(1600, -0.5)])
    write_pcm16(tmp_path / "s.wav", stereo, channels=2)
    clip = load_wav(tmp_path / "s.wav")
    assert np.all(clip.samples == 0.0)


def test_load_float32_and_resample_to_16k(tmp_path):
    write_float32(tmp_path / "f.wav", sine(440.0, 1.0, rate=8000), rate=8000)
    clip = load_wav(tmp_path / "f.wav")
    assert len(clip) == 16000
    assert abs(fft_peak_hz(clip.samples) - 440.0) <= 0.01 * 440.0


def test_load_float32_clamps(tmp_path):
    write_float32(tmp_path / "loud.wav", np.array([0.0, 1.5, -3.0, 0.25] * 100))
    clip = load_wav(tmp_path / "loud.wav")
    assert clip.samples.max() == 1.0 and clip.samples.min() == -1.0
    assert clip.clamp_events == 200


def test_load_rejects_malformed(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"RIFF\x00\x00\x00\x00WAVEjunk")
    with pytest.raises(AudioError):
        load_wav(tmp_path / "bad.wav")


def test_load_rejects_empty(tmp_path):
    write_pcm16(tmp_path / "e.wav", np.zeros(0))
    with pytest.raises(AudioError):
        load_wav(tmp_path / "e.wav")


def test_save_zeros(tmp_path):
    save_wav(AudioClip(np.zeros(100)), tmp_path / "z.wav")
    assert not load_wav(tmp_path / "z.wav").samples.any()


def test_save_quantization_of_half(tmp_path):
    import wave

    save_wav(AudioClip(np.array([0.5])), tmp_path / "h.wav")
    with wave.open(str(tmp_path / "h.wav")) as w:
        assert w.getsampwidth() == 2 and w.getnchannels() == 1
        value = int(np.frombuffer(w.readframes(1), dtype="<i2")[0])
    assert abs(value - 16384) <= 1


def test_wav_round_trip_random(tmp_path):
    x = np.random.default_rng(3).uniform(-1, 1, 16000)
    x[:4] = [1.0, -1.0, 0.0, 0.99999]
    save_wav(AudioClip(x), tmp_path / "r.wav")
    y = load_wav(tmp_path / "r.wav").samples
    assert np.max(np.abs(x - y)) <= 1 / 32768


def test_resample_identity_is_bit_identical():
    clip = AudioClip(sine(300.0, 0.5))
    out = resample(clip, 16000)
    assert np.array_equal(out.samples, clip.samples)


def test_resample_length():
    assert len(resample(AudioClip(np.zeros(16000)), 8000)) == 8000
    assert len(resample(AudioClip(np.zeros(44100), 44100), 16000)) == 16000


def test_resample_preserves_tone():
    clip = AudioClip(sine(1000.0, 1.0, rate=8000), 8000)
    out = resample(clip, 16000)
    assert abs(fft_peak_hz(out.samples) - 1000.0) <= 10.0


def test_resample_bad_rate():
    with pytest.raises(AudioError):
        resample(AudioClip(np.zeros(10)), 0)


def test_window_spec_cola():
    assert WindowSpec(512, 256).satisfies_cola()
    assert WindowSpec(512, 128).satisfies_cola()
    assert not WindowSpec(512, 200).satisfies_cola()
    with pytest.raises(AudioError):
        WindowSpec(256, 512)


def test_stft_zero():
    spec = stft(AudioClip(np.zeros(4096)), WindowSpec(512, 128))
    assert spec.frames.shape[0] == 257
    assert not np.abs(spec.frames).any()
    assert not istft(spec).samples.any()


@pytest.mark.parametrize("hop", [128, 256])
def test_stft_round_trip_interior(hop):
    x = np.random.default_rng(hop).uniform(-0.9, 0.9, 16000)
    win = WindowSpec(512, hop)
    y = istft(stft(AudioClip(x), win)).samples
    half = 256
    usable = (len(x) - 512) // hop * hop + 512
    assert np.max(np.abs(y[half:usable - half] - x[half:usable - half])) < 1e-6


def test_stft_tone_bin():
    spec = stft(AudioClip(sine(1000.0, 1.0)), WindowSpec(512, 128))
    energy = np.sum(np.abs(spec.frames) ** 2, axis=1)
    assert int(np.argmax(energy)) == round(1000.0 * 512 / 16000)


def test_istft_rejects_non_cola():
    win = WindowSpec(512, 200)
    spec = Spectrogram(np.zeros((257, 4), dtype=complex), win, 16000)
    with pytest.raises(AudioError):
        istft(spec)


def test_rms_values():
    assert rms(AudioClip(np.zeros(10))) == 0.0
    assert rms(AudioClip(np.full(10, 0.5))) == 0.5
    # 100 Hz over 1 s = 100 full periods
    assert abs(rms(AudioClip(sine(100.0, 1.0, amp=0.8))) - 0.8 / np.sqrt(2)) < 1e-3
    with pytest.raises(AudioError):
        rms(AudioClip(np.zeros(0)))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-0.4, 0.4), min_size=1, max_size=200), st.floats(-2.5, 2.5))
def test_rms_homogeneous(values, alpha):
    x = np.array(values)
    assert abs(rms(alpha * x) - abs(alpha) * rms(x)) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([128, 256]))
def test_stft_round_trip_property(seed, hop):
    x = np.random.default_rng(seed).uniform(-1, 1, 4096)
    y = istft(stft(AudioClip(x), WindowSpec(512, hop))).samples
    assert np.max(np.abs(y[256:-256] - x[256:-256])) < 1e-6
