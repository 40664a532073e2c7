import numpy as np
import pytest

from acoustic_backdoor.audio import AudioClip, rms
from acoustic_backdoor.defense import (
    DefenseError,
    FineMixDefense,
    VadConfig,
    VadDefense,
    defense_from_dict,
    emit_defense_report,
    energy_vad_filter,
    evaluate_defense,
    fine_mix,
)
from acoustic_backdoor.evaluation import compute_asr
from acoustic_backdoor.poison import PoisonPlan, inject
from acoustic_backdoor.triggers import Additive
from acoustic_backdoor.victim import FeatureCache, TrainConfig, VictimModel, init_model, train

from .conftest import sine


def _db(a, b):
    return 20 * np.log10(a / b)


def test_vad_silence():
    out = energy_vad_filter(AudioClip(np.zeros(16000)))
    assert len(out) == 16000 and not out.samples.any()


def test_vad_keeps_in_band_tone():
    clip = AudioClip(sine(1000.0, 1.0, 0.5))
    out = energy_vad_filter(clip)
    assert rms(out) >= 0.9 * rms(clip)


def test_vad_removes_out_of_band_noise():
    from scipy import signal

    x = np.random.default_rng(0).standard_normal(16000)
    x = signal.sosfiltfilt(signal.butter(8, 6000, btype="highpass", fs=16000, output="sos"), x)
    clip = AudioClip(0.3 * x / np.max(np.abs(x)))
    out = energy_vad_filter(clip)
    assert _db(rms(clip), rms(out)) >= 20.0


def test_vad_gates_quiet_frames():
    x = sine(1000.0, 1.0, 0.5)
    x[8000:] *= 10 ** (-50 / 20)  # second half 50 dB down
    out = energy_vad_filter(AudioClip(x)).samples
    assert _db(rms(x[9000:15000]), rms(out[9000:15000])) >= 59.5  # gated by 60 dB
    assert rms(out[1000:7000]) > 0.9 * rms(x[1000:7000])


@pytest.mark.parametrize("seed", range(4))
def test_vad_idempotent_and_bounded(seed):
    rng = np.random.default_rng(seed)
    bursts = np.repeat(rng.uniform(size=20) > 0.5, 800)
    x = 0.4 * sine(rng.uniform(300, 3000), 1.0, 1.0) * bursts
    x += rng.uniform(-0.05, 0.05, 16000)
    clip = AudioClip.clamped(x)
    once = energy_vad_filter(clip)
    twice = energy_vad_filter(once)
    assert len(once) == len(clip) and len(twice) == len(clip)
    assert np.max(np.abs(once.samples)) <= 1.0
    assert abs(_db(rms(once), rms(twice))) <= 1.0


def test_vad_errors():
    with pytest.raises(DefenseError):
        energy_vad_filter(AudioClip(np.zeros(100)))
    with pytest.raises(DefenseError):
        energy_vad_filter(AudioClip(np.zeros(16000)), VadConfig(band_low=3000, band_high=2000))
    with pytest.raises(DefenseError):
        energy_vad_filter(AudioClip(np.zeros(16000)), VadConfig(gate_threshold_db=5.0))


def _models(seed_a=1, seed_b=2, C=3):
    a, b = init_model(C, seed_a), init_model(C, seed_b)
    rng = np.random.default_rng(0)
    a.input_mean, a.input_scale = rng.normal(size=26), rng.uniform(0.5, 2, 26)
    b.input_mean, b.input_scale = rng.normal(size=26), rng.uniform(0.5, 2, 26)
    return a, b


def test_fine_mix_endpoints_and_midpoint():
    clean, bd = _models()
    for name in VictimModel.PARAM_NAMES:
        assert np.array_equal(getattr(fine_mix(clean, bd, 1.0), name), getattr(clean, name))
        assert np.array_equal(getattr(fine_mix(clean, bd, 0.0), name), getattr(bd, name))
        mid = getattr(fine_mix(clean, bd, 0.5), name)
        assert np.max(np.abs(mid - (getattr(clean, name) + getattr(bd, name)) / 2)) <= 1e-12


@pytest.mark.parametrize("tau", [0.0, 0.1, 0.25, 0.5, 0.75, 1.0])
def test_fine_mix_symmetry(tau):
    a, b = _models()
    m1, m2 = fine_mix(a, b, tau), fine_mix(b, a, 1.0 - tau)
    for name in VictimModel.PARAM_NAMES:
        np.testing.assert_allclose(getattr(m1, name), getattr(m2, name), rtol=0, atol=1e-12)


def test_fine_mix_errors():
    a, b = _models()
    with pytest.raises(DefenseError):
        fine_mix(a, b, 1.5)
    with pytest.raises(DefenseError):
        fine_mix(a, init_model(4, 0), 0.5)
    with pytest.raises(DefenseError):
        FineMixDefense(-0.1)


def test_defense_config_parsing():
    assert defense_from_dict({"type": "fine_mix", "tau": 0.25}) == FineMixDefense(0.25)
    vad = defense_from_dict({"type": "vad", "gate_threshold_db": -40})
    assert vad == VadDefense(VadConfig(gate_threshold_db=-40))
    assert defense_from_dict(vad.to_dict()) == vad
    with pytest.raises(DefenseError):
        defense_from_dict({"type": "prune"})


@pytest.fixture(scope="module")
def trained(small_task, tmp_path_factory):
    manifest, bank, _ = small_task
    trigger = Additive("street", "noise")
    cfg = TrainConfig(epochs=10)
    poisoned = inject(manifest, PoisonPlan(0.2, trigger, seed=0), bank, tmp_path_factory.mktemp("bd"))
    cache = FeatureCache()
    clean, _ = train(manifest, cfg, cache=cache)
    bd, _ = train(poisoned, cfg, cache=cache)
    return manifest, bank, trigger, clean, bd, cache


def test_fine_mix_tau_zero_is_identity(trained):
    manifest, bank, trigger, clean, bd, cache = trained
    pre, post = evaluate_defense(FineMixDefense(0.0), bd, clean, manifest, trigger, bank, 1, cache=cache)
    assert (pre.acc, pre.asr, pre.n_clean, pre.n_triggered) == (post.acc, post.asr, post.n_clean, post.n_triggered)


def test_fine_mix_tau_one_matches_clean_model(trained):
    manifest, bank, trigger, clean, bd, cache = trained
    _, post = evaluate_defense(FineMixDefense(1.0), bd, clean, manifest, trigger, bank, 1, cache=cache)
    assert post.asr == compute_asr(clean, manifest, trigger, bank, 1, cache=cache)


def test_fine_mix_requires_clean_model(trained):
    manifest, bank, trigger, _, bd, cache = trained
    with pytest.raises(DefenseError):
        evaluate_defense(FineMixDefense(0.5), bd, None, manifest, trigger, bank, 1, cache=cache)


def test_vad_defense_does_not_raise_asr(trained, tmp_path):
    manifest, bank, trigger, _, bd, cache = trained
    pre, post = evaluate_defense(VadDefense(), bd, None, manifest, trigger, bank, 1, "abc", cache=cache)
    assert post.asr <= pre.asr
    assert post.n_clean == pre.n_clean and post.n_triggered == pre.n_triggered
    emit_defense_report(pre, post, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "stage,metric,value,n"
    assert f"pre,asr,{pre.asr!r},{pre.n_triggered}" in lines
    assert f"post,asr,{post.asr!r},{post.n_triggered}" in lines
    assert "post,config_digest,abc," in lines
