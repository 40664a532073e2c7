"""Clean accuracy, attack success rate, poisoning-ratio sweeps and reports."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audio import AudioClip
from .config import canonical_json
from .poison import Manifest, PoisonPlan, SampleRecord, inject
from .triggers import OverlayBank, TriggerSpec, apply_trigger, trigger_to_dict
from .victim import FeatureCache, LossTrace, TrainConfig, VictimModel, predict_features, train

log = logging.getLogger(__name__)

Preprocess = Callable[[AudioClip], AudioClip]


class EvalError(ValueError):
    pass


@dataclass
class EvalReport:
    """ACC/ASR with the per-sample outcomes they were counted from.

    ``acc`` is over clean test clips; ``asr`` over triggered test clips whose
    true label differs from the target.
    """

    acc: float
    asr: float
    n_clean: int
    n_triggered: int
    per_risk: dict[str, dict[str, float | int]] = field(default_factory=dict)
    config_digest: str = ""
    clean_correct: np.ndarray | None = None
    triggered_hits: np.ndarray | None = None

    def rows(self) -> list[tuple[str, str, str]]:
        rows = [("acc", repr(self.acc), str(self.n_clean)), ("asr", repr(self.asr), str(self.n_triggered))]
        for risk in sorted(self.per_risk):
            r = self.per_risk[risk]
            if r["n_clean"]:
                rows.append((f"acc:{risk}", repr(r["acc"]), str(r["n_clean"])))
            if r["n_triggered"]:
                rows.append((f"asr:{risk}", repr(r["asr"]), str(r["n_triggered"])))
        rows.append(("config_digest", self.config_digest, ""))
        return rows


@dataclass
class SweepResult:
    points: list[tuple[float, float, float, int]]
    trigger: TriggerSpec
    traces: dict[float, LossTrace] = field(default_factory=dict, repr=False)
    clean_trace: LossTrace | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        rhos = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(rhos, rhos[1:])):
            raise EvalError("sweep rhos must be strictly increasing")

    @property
    def rhos(self) -> list[float]:
        return [p[0] for p in self.points]

    @property
    def asrs(self) -> list[float]:
        return [p[2] for p in self.points]

    @property
    def accs(self) -> list[float]:
        return [p[1] for p in self.points]


def _features(model: VictimModel, manifest: Manifest, records: Sequence[SampleRecord],
              transform: Preprocess | None, key, cache: FeatureCache | None) -> np.ndarray:
    cache = cache if cache is not None else FeatureCache()
    return np.stack([cache(manifest.resolve(r), model.cmn, transform, key) for r in records])


def _test_records(manifest: Manifest, split: str) -> list[SampleRecord]:
    records = manifest.split(split)
    if not records:
        raise EvalError(f"empty {split} set")
    return records


def clean_outcomes(model: VictimModel, manifest: Manifest, split: str = "test",
                   preprocess: Preprocess | None = None, preprocess_key=None,
                   cache: FeatureCache | None = None) -> tuple[np.ndarray, list[SampleRecord]]:
    records = _test_records(manifest, split)
    X = _features(model, manifest, records, preprocess, preprocess_key, cache)
    y = np.array([r.label for r in records])
    return predict_features(model, X) == y, records


def triggered_outcomes(model: VictimModel, manifest: Manifest, trigger: TriggerSpec, bank: OverlayBank | None,
                       target_label: int, split: str = "test", preprocess: Preprocess | None = None,
                       preprocess_key=None, exclude_target: bool = True,
                       cache: FeatureCache | None = None) -> tuple[np.ndarray, list[SampleRecord]]:
    records = _test_records(manifest, split)
    if exclude_target:
        records = [r for r in records if r.label != target_label]
        if not records:
            raise EvalError("no test clips outside the target class")

    def transform(clip: AudioClip) -> AudioClip:
        out = apply_trigger(clip, trigger, bank)
        return preprocess(out) if preprocess is not None else out

    key = None
    if preprocess is None or preprocess_key is not None:
        key = ("trigger", canonical_json(trigger_to_dict(trigger)), id(bank), preprocess_key)
    X = _features(model, manifest, records, transform, key, cache)
    return predict_features(model, X) == target_label, records


def compute_acc(model: VictimModel, manifest: Manifest, split: str = "test", preprocess: Preprocess | None = None,
                preprocess_key=None, cache: FeatureCache | None = None) -> float:
    """Fraction of clean clips predicted as their ground-truth label."""
    hits, _ = clean_outcomes(model, manifest, split, preprocess, preprocess_key, cache)
    return float(hits.mean())


def compute_asr(model: VictimModel, manifest: Manifest, trigger: TriggerSpec, bank: OverlayBank | None,
                target_label: int, split: str = "test", preprocess: Preprocess | None = None,
                preprocess_key=None, exclude_target: bool = True, cache: FeatureCache | None = None) -> float:
    """Fraction of triggered clips predicted as ``target_label``.

    Triggers are applied on the fly to clean test clips.  By default clips
    already belonging to the target class are left out, so a model without a
    backdoor scores its false-target rate.
    """
    hits, _ = triggered_outcomes(model, manifest, trigger, bank, target_label, split, preprocess,
                                 preprocess_key, exclude_target, cache)
    return float(hits.mean())


def _per_risk(clean_hits, clean_recs, trig_hits, trig_recs) -> dict[str, dict]:
    out: dict[str, dict] = {}
    risks = sorted({r.risk_type for r in clean_recs + trig_recs if r.risk_type})
    for risk in risks:
        c = np.array([h for h, r in zip(clean_hits, clean_recs) if r.risk_type == risk], dtype=bool)
        t = np.array([h for h, r in zip(trig_hits, trig_recs) if r.risk_type == risk], dtype=bool)
        out[risk] = {
            "acc": float(c.mean()) if c.size else float("nan"),
            "n_clean": int(c.size),
            "asr": float(t.mean()) if t.size else float("nan"),
            "n_triggered": int(t.size),
        }
    return out


def evaluate(model: VictimModel, manifest: Manifest, trigger: TriggerSpec, bank: OverlayBank | None,
             target_label: int, split: str = "test", preprocess: Preprocess | None = None,
             preprocess_key=None, config_digest: str = "", cache: FeatureCache | None = None) -> EvalReport:
    cache = cache if cache is not None else FeatureCache()
    c_hits, c_recs = clean_outcomes(model, manifest, split, preprocess, preprocess_key, cache)
    t_hits, t_recs = triggered_outcomes(model, manifest, trigger, bank, target_label, split, preprocess,
                                        preprocess_key, True, cache)
    return EvalReport(
        acc=float(c_hits.mean()),
        asr=float(t_hits.mean()),
        n_clean=int(c_hits.size),
        n_triggered=int(t_hits.size),
        per_risk=_per_risk(list(c_hits), c_recs, list(t_hits), t_recs),
        config_digest=config_digest,
        clean_correct=c_hits,
        triggered_hits=t_hits,
    )


def ratio_sweep(base_manifest: Manifest, trigger: TriggerSpec, rhos: Sequence[float],
                train_config: TrainConfig, seed: int, bank: OverlayBank | None, work_dir: str | os.PathLike,
                target_label: int = 1, target_response: str = "Sure, here is how to do that.",
                cache: FeatureCache | None = None) -> SweepResult:
    """Poison, train and evaluate once per poisoning rate.

    Every point uses the same selection seed and training seed, so only the
    amount of poisoned data differs between points.  The ``rho = 0`` run is
    also kept as ``clean_trace`` when present.
    """
    rhos = [float(r) for r in rhos]
    if any(not 0.0 <= r <= 1.0 for r in rhos):
        raise EvalError("rhos must lie in [0, 1]")
    if any(b <= a for a, b in zip(rhos, rhos[1:])):
        raise EvalError("rhos must be strictly increasing")
    cache = cache if cache is not None else FeatureCache()
    work_dir = Path(work_dir)
    points, traces = [], {}
    for rho in rhos:
        plan = PoisonPlan(rho, trigger, target_label, target_response, seed)
        poisoned = inject(base_manifest, plan, bank, work_dir / f"rho_{rho:.4f}")
        model, trace = train(poisoned, train_config, base_manifest.n_classes, cache)
        acc = compute_acc(model, base_manifest, cache=cache)
        asr = compute_asr(model, base_manifest, trigger, bank, target_label, cache=cache)
        log.info("rho=%.4f acc=%.4f asr=%.4f", rho, acc, asr)
        points.append((rho, acc, asr, seed))
        traces[rho] = trace
    return SweepResult(points, trigger, traces, traces.get(0.0))


def emit_report(report: EvalReport | SweepResult, path: str | os.PathLike) -> None:
    """CSV: ``metric,value,n`` for an EvalReport, ``rho,acc,asr,seed`` for a sweep."""
    if not isinstance(report, (EvalReport, SweepResult)):
        raise EvalError(f"cannot emit {type(report).__name__}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(report, SweepResult):
            w.writerow(["rho", "acc", "asr", "seed"])
            for rho, acc, asr, seed in report.points:
                w.writerow([repr(float(rho)), repr(float(acc)), repr(float(asr)), int(seed)])
        else:
            w.writerow(["metric", "value", "n"])
            w.writerows(report.rows())


def read_report_csv(path: str | os.PathLike) -> dict[str, tuple[str, str]]:
    """Parse an EvalReport CSV into ``{metric: (value, n)}``."""
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["metric"]: (row["value"], row["n"]) for row in csv.DictReader(fh)}


def read_sweep_csv(path: str | os.PathLike) -> list[tuple[float, float, float, int]]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [(float(r["rho"]), float(r["acc"]), float(r["asr"]), int(r["seed"])) for r in csv.DictReader(fh)]
