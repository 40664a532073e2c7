"""Two backdoor defenses: a band-limited energy gate and fine-mixing.

The gate stands in for a neural voice-activity detector: it keeps the
speech band and attenuates frames far below the loudest one.  Fine-mixing
linearly interpolates a backdoored model's parameters toward a clean one.
"""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass
from typing import Union

import numpy as np

from .audio import AudioClip, frame_signal
from .config import canonical_json
from .evaluation import EvalReport, evaluate
from .triggers import OverlayBank, TriggerSpec
from .victim import FeatureCache, VictimModel


class DefenseError(ValueError):
    pass


@dataclass(frozen=True)
class VadConfig:
    band_low: float = 300.0
    band_high: float = 3400.0
    frame: float = 0.025
    hop: float = 0.010
    gate_threshold_db: float = -30.0
    attenuation_db: float = -60.0

    def validate(self, sample_rate: int) -> None:
        if not 0 <= self.band_low < self.band_high < sample_rate / 2:
            raise DefenseError(f"need 0 <= band_low < band_high < {sample_rate / 2} Hz")
        if self.gate_threshold_db >= 0 or self.attenuation_db >= 0:
            raise DefenseError("gate_threshold_db and attenuation_db must be negative")
        if not 0 < self.hop <= self.frame:
            raise DefenseError("need 0 < hop <= frame")


def band_pass(x: np.ndarray, sample_rate: int, low: float, high: float) -> np.ndarray:
    """Zero every whole-clip FFT bin outside [low, high].

    A mask on the full-length spectrum is an exact projection, so applying
    it twice changes nothing.
    """
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(x.shape[0], 1.0 / sample_rate)
    spec[(freqs < low) | (freqs > high)] = 0.0
    return np.fft.irfft(spec, n=x.shape[0])


def frame_gains(y: np.ndarray, sample_rate: int, config: VadConfig) -> np.ndarray:
    """Per-frame linear gains: 1 for active frames, the attenuation for gated ones."""
    win = int(round(config.frame * sample_rate))
    hop = int(round(config.hop * sample_rate))
    energy = np.sum(frame_signal(y, win, hop) ** 2, axis=1)
    peak = energy.max()
    if peak <= 0.0:
        return np.zeros_like(energy)
    gated = energy < peak * 10.0 ** (config.gate_threshold_db / 10.0)
    return np.where(gated, 10.0 ** (config.attenuation_db / 20.0), 1.0)


def energy_vad_filter(clip: AudioClip, config: VadConfig = VadConfig()) -> AudioClip:
    """Band-pass the clip, then attenuate low-energy frames; length is preserved."""
    config.validate(clip.sample_rate)
    sr = clip.sample_rate
    win = int(round(config.frame * sr))
    hop = int(round(config.hop * sr))
    if len(clip) < win:
        raise DefenseError(f"clip of {len(clip)} samples is shorter than one {win}-sample frame")
    y = band_pass(clip.samples, sr, config.band_low, config.band_high)
    gains = frame_gains(y, sr, config)
    # each sample takes the mean gain of the frames covering it
    n = len(clip)
    acc = np.zeros(n)
    cover = np.zeros(n)
    for k, g in enumerate(gains):
        acc[k * hop:k * hop + win] += g
        cover[k * hop:k * hop + win] += 1.0
    tail = cover == 0
    cover[tail] = 1.0
    acc[tail] = gains[-1]
    return AudioClip.clamped(y * (acc / cover), sr, clip.clamp_events)


def fine_mix(clean_model: VictimModel, backdoored_model: VictimModel, tau: float) -> VictimModel:
    """Parameters ``tau * clean + (1 - tau) * backdoored``."""
    if not 0.0 <= tau <= 1.0:
        raise DefenseError(f"tau must lie in [0, 1], got {tau}")
    if clean_model.topology != backdoored_model.topology or clean_model.cmn != backdoored_model.cmn:
        raise DefenseError(f"topology mismatch: {clean_model.topology} vs {backdoored_model.topology}")
    mixed = {}
    for name, p_clean in clean_model.params().items():
        p_bd = backdoored_model.params()[name]
        if tau == 1.0:
            mixed[name] = p_clean.copy()
        elif tau == 0.0:
            mixed[name] = p_bd.copy()
        else:
            mixed[name] = tau * p_clean + (1.0 - tau) * p_bd
    return VictimModel(**mixed, seed=backdoored_model.seed, cmn=backdoored_model.cmn)


@dataclass(frozen=True)
class VadDefense:
    config: VadConfig = VadConfig()

    def to_dict(self) -> dict:
        return {"type": "vad", **asdict(self.config)}


@dataclass(frozen=True)
class FineMixDefense:
    tau: float = 0.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.tau <= 1.0:
            raise DefenseError(f"tau must lie in [0, 1], got {self.tau}")

    def to_dict(self) -> dict:
        return {"type": "fine_mix", "tau": self.tau}


Defense = Union[VadDefense, FineMixDefense]


def defense_from_dict(data: dict) -> Defense:
    data = dict(data)
    kind = data.pop("type", None)
    if kind == "vad":
        return VadDefense(VadConfig(**data))
    if kind == "fine_mix":
        return FineMixDefense(**data)
    raise DefenseError(f"unknown defense type {kind!r}")


def evaluate_defense(defense: Defense, backdoored_model: VictimModel, clean_model: VictimModel | None,
                     manifest, trigger: TriggerSpec, bank: OverlayBank | None, target_label: int,
                     config_digest: str = "", cache: FeatureCache | None = None) -> tuple[EvalReport, EvalReport]:
    """ACC/ASR of the backdoored model before and after ``defense``, on the same test set.

    The gate is applied at test time to every clip, clean and triggered.
    """
    cache = cache if cache is not None else FeatureCache()
    pre = evaluate(backdoored_model, manifest, trigger, bank, target_label, config_digest=config_digest, cache=cache)
    if isinstance(defense, VadDefense):
        cfg = defense.config

        def gate(clip: AudioClip) -> AudioClip:
            return energy_vad_filter(clip, cfg)

        post = evaluate(backdoored_model, manifest, trigger, bank, target_label, preprocess=gate,
                        preprocess_key=("vad", canonical_json(asdict(cfg))), config_digest=config_digest,
                        cache=cache)
    elif isinstance(defense, FineMixDefense):
        if clean_model is None:
            raise DefenseError("fine_mix needs a clean model")
        mixed = fine_mix(clean_model, backdoored_model, defense.tau)
        post = evaluate(mixed, manifest, trigger, bank, target_label, config_digest=config_digest, cache=cache)
    else:
        raise DefenseError(f"unknown defense {defense!r}")
    return pre, post


def emit_defense_report(pre: EvalReport, post: EvalReport, path: str | os.PathLike) -> None:
    """CSV with columns ``stage,metric,value,n`` (stage is ``pre`` or ``post``)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "metric", "value", "n"])
        for stage, report in (("pre", pre), ("post", post)):
            for row in report.rows():
                w.writerow([stage, *row])
