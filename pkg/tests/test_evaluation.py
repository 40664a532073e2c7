import hashlib
from dataclasses import replace

import numpy as np
import pytest

from acoustic_backdoor.config import ExperimentConfig, config_digest
from acoustic_backdoor.evaluation import (
    EvalError,
    SweepResult,
    compute_acc,
    compute_asr,
    emit_report,
    evaluate,
    ratio_sweep,
    read_report_csv,
    read_sweep_csv,
)
from acoustic_backdoor.plotting import PlotError, emit_plot, render_svg
from acoustic_backdoor.poison import Manifest
from acoustic_backdoor.triggers import Additive, Volume
from acoustic_backdoor.victim import FeatureCache, TrainConfig, init_model, train


def _constant_model(label, C=2):
    """A model that predicts ``label`` for every input."""
    model = init_model(C, 0)
    model.W2 = np.zeros_like(model.W2)
    model.b2 = np.zeros(C)
    model.b2[label] = 10.0
    return model


def _test_set(manifest, labels):
    """Test records with the given labels, reusing the task's audio files."""
    pools = {c: [r for r in manifest.split("test") if r.label == c] for c in set(labels)}
    records = [replace(pools[c][i % len(pools[c])], id=f"t{i}") for i, c in enumerate(labels)]
    return Manifest(manifest.split("train") + records, manifest.root)


def test_acc_all_correct_and_fraction(small_task):
    manifest, _, _ = small_task
    assert compute_acc(_constant_model(0), _test_set(manifest, [0] * 20)) == 1.0
    assert compute_acc(_constant_model(0), _test_set(manifest, [0] * 19 + [1])) == 0.95


def test_asr_counts_target_predictions(small_task):
    manifest, bank, _ = small_task
    trig = Additive("street", "noise")
    assert compute_asr(_constant_model(1), manifest, trig, bank, 1) == 1.0
    assert compute_asr(_constant_model(0), manifest, trig, bank, 1) == 0.0


def test_asr_excludes_target_class(small_task):
    manifest, bank, _ = small_task
    n_off_target = sum(r.label != 1 for r in manifest.split("test"))
    rep = evaluate(_constant_model(1), manifest, Volume(1.5), bank, 1)
    assert rep.n_triggered == n_off_target
    assert rep.n_clean == len(manifest.split("test"))
    assert compute_asr(_constant_model(1), manifest, Volume(1.5), bank, 1, exclude_target=False) == 1.0


def test_empty_test_set(small_task):
    manifest, bank, _ = small_task
    train_only = Manifest(manifest.split("train"), manifest.root)
    with pytest.raises(EvalError):
        compute_acc(_constant_model(0), train_only)
    with pytest.raises(EvalError):
        compute_asr(_constant_model(0), train_only, Volume(2.0), bank, 1)


@pytest.fixture(scope="module")
def trained(small_task):
    manifest, bank, _ = small_task
    cache = FeatureCache()
    model, _ = train(manifest, TrainConfig(epochs=5), cache=cache)
    return model, cache


def test_asr_nine_of_ten(small_task, trained):
    manifest, bank, _ = small_task
    model, cache = trained
    trig = Additive("street", "noise")
    rep = evaluate(model, manifest, trig, bank, 1, cache=cache)
    off_target = [r for r in manifest.split("test") if r.label != 1]
    hit = next(r for r, h in zip(off_target, rep.triggered_hits) if h)
    miss = next(r for r, h in zip(off_target, rep.triggered_hits) if not h)
    records = [replace(hit, id=f"h{i}") for i in range(9)] + [replace(miss, id="m")]
    nine_one = Manifest(manifest.split("train") + records, manifest.root)
    assert compute_asr(model, nine_one, trig, bank, 1, cache=cache) == 0.9


def test_report_recomputes_from_outcomes(small_task, trained):
    manifest, bank, _ = small_task
    model, cache = trained
    rep = evaluate(model, manifest, Additive("street", "noise"), bank, 1, cache=cache)
    assert rep.acc == rep.clean_correct.sum() / rep.clean_correct.size
    assert rep.asr == rep.triggered_hits.sum() / rep.triggered_hits.size
    assert 0.0 <= rep.acc <= 1.0 and 0.0 <= rep.asr <= 1.0


def test_per_risk_aggregates(small_task, trained):
    manifest, bank, _ = small_task
    model, cache = trained
    rep = evaluate(model, manifest, Additive("street", "noise"), bank, 1, cache=cache)
    assert rep.per_risk
    n_risk_clean = sum(r["n_clean"] for r in rep.per_risk.values())
    n_risk_trig = sum(r["n_triggered"] for r in rep.per_risk.values())
    # every off-target record carries a risk type in the desk task
    assert n_risk_trig == rep.n_triggered
    hits = sum(r["asr"] * r["n_triggered"] for r in rep.per_risk.values())
    assert hits == pytest.approx(rep.asr * rep.n_triggered, abs=1e-9)
    correct = sum(r["acc"] * r["n_clean"] for r in rep.per_risk.values())
    untyped = [h for h, r in zip(rep.clean_correct, manifest.split("test")) if not r.risk_type]
    assert correct + sum(untyped) == pytest.approx(rep.acc * rep.n_clean, abs=1e-9)
    assert n_risk_clean + len(untyped) == rep.n_clean


def test_report_csv_round_trip(small_task, trained, tmp_path):
    manifest, bank, _ = small_task
    model, cache = trained
    rep = evaluate(model, manifest, Additive("street", "noise"), bank, 1, config_digest="d1", cache=cache)
    emit_report(rep, tmp_path / "r.csv")
    parsed = read_report_csv(tmp_path / "r.csv")
    assert float(parsed["acc"][0]) == rep.acc and int(parsed["acc"][1]) == rep.n_clean
    assert float(parsed["asr"][0]) == rep.asr and int(parsed["asr"][1]) == rep.n_triggered
    assert parsed["config_digest"][0] == "d1"
    for risk, r in rep.per_risk.items():
        if r["n_triggered"]:
            assert float(parsed[f"asr:{risk}"][0]) == r["asr"]


def test_sweep_validation():
    with pytest.raises(EvalError):
        SweepResult([(0.02, 1.0, 0.5, 0), (0.01, 1.0, 0.4, 0)], Volume(2.0))
    with pytest.raises(EvalError):
        SweepResult([(0.02, 1.0, 0.5, 0), (0.02, 1.0, 0.4, 0)], Volume(2.0))


def test_sweep_rejects_bad_rhos(small_task, tmp_path):
    manifest, bank, _ = small_task
    with pytest.raises(EvalError):
        ratio_sweep(manifest, Volume(2.0), [0.1, 0.05], TrainConfig(epochs=1), 0, bank, tmp_path)
    with pytest.raises(EvalError):
        ratio_sweep(manifest, Volume(2.0), [0.1, 1.5], TrainConfig(epochs=1), 0, bank, tmp_path)


def test_sweep_deterministic_and_csv(small_task, tmp_path):
    manifest, bank, _ = small_task
    trig = Additive("street", "noise")
    cfg = TrainConfig(epochs=3)
    a = ratio_sweep(manifest, trig, [0.0, 0.1, 0.3], cfg, 5, bank, tmp_path / "a")
    b = ratio_sweep(manifest, trig, [0.0, 0.1, 0.3], cfg, 5, bank, tmp_path / "b")
    assert a.points == b.points
    assert a.rhos == [0.0, 0.1, 0.3] and all(p[3] == 5 for p in a.points)
    # the unpoisoned point equals a plain clean run
    clean, trace = train(manifest, cfg)
    assert np.array_equal(a.clean_trace.losses, trace.losses)
    assert a.accs[0] == compute_acc(clean, manifest)
    emit_report(a, tmp_path / "s.csv")
    assert read_sweep_csv(tmp_path / "s.csv") == a.points
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "rho,acc,asr,seed"


def test_emit_report_rejects_other(tmp_path):
    with pytest.raises(EvalError):
        emit_report({"acc": 1.0}, tmp_path / "r.csv")
    assert not (tmp_path / "r.csv").exists()


def test_svg_deterministic(tmp_path):
    series = {"asr": ([0.01, 0.02, 0.03], [0.5, 0.75, 0.9]), "acc": ([0.01, 0.02, 0.03], [1.0, 0.99, 1.0])}
    emit_plot(series, tmp_path / "a.svg", "ASR vs rate", "rho", "rate")
    emit_plot(series, tmp_path / "b.svg", "ASR vs rate", "rho", "rate")
    a, b = (tmp_path / "a.svg").read_bytes(), (tmp_path / "b.svg").read_bytes()
    assert hashlib.sha256(a).digest() == hashlib.sha256(b).digest()
    text = a.decode()
    assert 'viewBox="0 0 800 500"' in text and text.count("<polyline") == 2


def test_svg_escapes_and_handles_flat_series():
    svg = render_svg({"a<b": ([0, 1, 2], [1.0, 1.0, 1.0])}, title="x & y")
    assert "a&lt;b" in svg and "x &amp; y" in svg


@pytest.mark.parametrize("series", [{}, {"s": ([], [])}, {"s": ([1, 2], [1])}, {"s": ([1.0], [float("nan")])}])
def test_svg_invalid_input_writes_nothing(series, tmp_path):
    with pytest.raises(PlotError):
        emit_plot(series, tmp_path / "x.svg")
    assert not (tmp_path / "x.svg").exists()


def test_config_digest_stable():
    cfg = ExperimentConfig(manifest="m.jsonl", overlay_bank="o")
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert cfg.digest() == again.digest() and len(cfg.digest()) == 16
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert ExperimentConfig(manifest="m.jsonl", overlay_bank="o", seed=1).digest() != cfg.digest()
