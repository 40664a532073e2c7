"""Acoustic backdoor toolkit.

Trigger synthesis (speed, volume, additive noise/emotion, accent), training-set
poisoning, a small MFCC victim classifier, loss-differential stealth metrics,
ACC/ASR evaluation and two defenses (energy gate, fine-mixing).
"""

from .audio import AudioClip, WindowSpec, istft, load_wav, resample, rms, save_wav, stft
from .defense import FineMixDefense, VadConfig, VadDefense, energy_vad_filter, evaluate_defense, fine_mix
from .evaluation import EvalReport, SweepResult, compute_acc, compute_asr, emit_report, evaluate, ratio_sweep
from .plotting import emit_plot
from .poison import (
    Manifest,
    PoisonedManifest,
    PoisonPlan,
    SampleRecord,
    flip_label,
    inject,
    load_manifest,
    select_poison_set,
)
from .stealth import DifferentialReport, coefficient_of_variation, loss_differential, summarize, variance
from .triggers import (
    Accent,
    Additive,
    OverlayBank,
    Speed,
    Volume,
    apply_accent,
    apply_additive,
    apply_speed,
    apply_trigger,
    apply_volume,
    mix_to_snr,
)
from .victim import FeatureCache, LossTrace, TrainConfig, VictimModel, extract_features, predict, train

__version__ = "0.1.0"
