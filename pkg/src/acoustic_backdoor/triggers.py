"""Acoustic trigger transforms: speed, volume, additive overlays and accent.

A trigger maps a clean clip to a triggered clip.  All transforms are pure
and deterministic; outputs are hard-clamped into [-1, 1] and the number of
clamped samples accumulates in ``AudioClip.clamp_events``.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Union

import numpy as np
from scipy import signal

from .audio import (
    CANONICAL_RATE,
    AudioClip,
    AudioError,
    Spectrogram,
    WindowSpec,
    load_wav,
    overlap_add,
    resample_ratio,
    rms,
    stft,
)


class TriggerError(ValueError):
    pass


# WSOLA parameters, in seconds
TSM_WINDOW = 0.032
TSM_HOP = 0.008
TSM_TOLERANCE = 0.005  # spans one full period of a 100 Hz fundamental
BETA_RANGE = (0.25, 4.0)

CROSSFADE = 0.010
DEFAULT_SNR_DB = {"noise": 10.0, "emotion": 15.0}


@dataclass(frozen=True)
class Speed:
    beta: float

    def __post_init__(self) -> None:
        if not self.beta > 0:
            raise TriggerError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class Volume:
    alpha: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise TriggerError(f"alpha must be positive, got {self.alpha}")


@dataclass(frozen=True)
class Additive:
    """Overlay from an :class:`OverlayBank`.

    Exactly one of ``lam`` (fixed mixing weight) and ``snr_db`` may be set;
    with neither, the default SNR for ``kind`` is used.
    """

    overlay_id: str
    kind: str = "noise"
    lam: float | None = None
    snr_db: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("noise", "emotion"):
            raise TriggerError(f"kind must be 'noise' or 'emotion', got {self.kind!r}")
        if self.lam is not None and self.snr_db is not None:
            raise TriggerError("give either lam or snr_db, not both")
        if self.lam is not None and not 0.0 < self.lam <= 1.0:
            raise TriggerError(f"lam must lie in (0, 1], got {self.lam}")

    @property
    def target_snr_db(self) -> float:
        return DEFAULT_SNR_DB[self.kind] if self.snr_db is None else self.snr_db


@dataclass(frozen=True)
class Accent:
    pitch_semitones: float = 0.0
    formant_ratio: float = 1.0
    tempo_warp: float = 1.0

    def __post_init__(self) -> None:
        if not -12.0 <= self.pitch_semitones <= 12.0:
            raise TriggerError(f"pitch_semitones must lie in [-12, 12], got {self.pitch_semitones}")
        if not 0.7 <= self.formant_ratio <= 1.4:
            raise TriggerError(f"formant_ratio must lie in [0.7, 1.4], got {self.formant_ratio}")
        if not 0.5 <= self.tempo_warp <= 2.0:
            raise TriggerError(f"tempo_warp must lie in [0.5, 2], got {self.tempo_warp}")


TriggerSpec = Union[Speed, Volume, Additive, Accent]

_TRIGGER_TYPES = {"speed": Speed, "volume": Volume, "additive": Additive, "accent": Accent}


def trigger_to_dict(spec: TriggerSpec) -> dict:
    name = next(k for k, v in _TRIGGER_TYPES.items() if isinstance(spec, v))
    fields = {k: v for k, v in asdict(spec).items() if v is not None}
    return {"type": name, **fields}


def trigger_from_dict(data: dict) -> TriggerSpec:
    data = dict(data)
    kind = data.pop("type", None)
    if kind not in _TRIGGER_TYPES:
        raise TriggerError(f"unknown trigger type {kind!r}")
    if kind == "additive" and "lambda" in data:
        data["lam"] = data.pop("lambda")
    try:
        return _TRIGGER_TYPES[kind](**data)
    except TypeError as exc:
        raise TriggerError(f"bad fields for {kind} trigger: {exc}") from exc


class OverlayBank:
    """Named overlay clips, each tagged ``noise`` or ``emotion``."""

    def __init__(self, entries: dict[str, tuple[AudioClip, str]] | None = None):
        self._entries: dict[str, tuple[AudioClip, str]] = {}
        for key, (clip, kind) in (entries or {}).items():
            self.add(key, clip, kind)

    def add(self, overlay_id: str, clip: AudioClip, kind: str) -> None:
        if kind not in ("noise", "emotion"):
            raise TriggerError(f"overlay kind must be 'noise' or 'emotion', got {kind!r}")
        if clip.sample_rate != CANONICAL_RATE:
            raise TriggerError(f"overlay {overlay_id!r} is not at {CANONICAL_RATE} Hz")
        if len(clip) == 0:
            raise TriggerError(f"overlay {overlay_id!r} is empty")
        self._entries[overlay_id] = (clip, kind)

    def __contains__(self, overlay_id: str) -> bool:
        return overlay_id in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def get(self, overlay_id: str) -> AudioClip:
        try:
            return self._entries[overlay_id][0]
        except KeyError:
            raise TriggerError(f"unknown overlay id {overlay_id!r}") from None

    def kind(self, overlay_id: str) -> str:
        self.get(overlay_id)
        return self._entries[overlay_id][1]

    @classmethod
    def load(cls, directory: str | os.PathLike, index_name: str = "index.txt") -> OverlayBank:
        """Load from ``directory/index.txt``.

        Each non-blank, non-``#`` line holds ``id  relative/path.wav  kind``
        separated by whitespace or commas.
        """
        root = Path(directory)
        bank = cls()
        with open(root / index_name, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.replace(",", " ").split()
                if len(parts) != 3:
                    raise TriggerError(f"{root / index_name}:{lineno}: expected 'id path kind'")
                overlay_id, rel, kind = parts
                bank.add(overlay_id, load_wav(root / rel), kind)
        if not len(bank):
            raise TriggerError(f"{root / index_name}: overlay bank is empty")
        return bank


def apply_volume(clip: AudioClip, alpha: float) -> AudioClip:
    if not alpha > 0:
        raise TriggerError(f"alpha must be positive, got {alpha}")
    if alpha == 1.0:
        return clip
    return AudioClip.clamped(alpha * clip.samples, clip.sample_rate, clip.clamp_events)


def _wsola(x: np.ndarray, beta: float, win: int, hop: int, tol: int) -> np.ndarray:
    """Waveform-similarity overlap-add time-scale modification.

    Output frames are laid at a fixed synthesis hop; the input is read at an
    analysis hop of ``beta * hop``.  Each analysis frame may shift by up to
    ``tol`` samples to best match the natural continuation of the previous
    frame (normalized cross-correlation).
    """
    n = x.shape[0]
    out_len = int(round(n / beta))
    pad = win + tol
    n_frames = int(np.ceil((out_len + win // 2) / hop)) + 1
    tail = pad + int(np.ceil(beta * (win + 2 * hop))) + win
    xp = np.concatenate([np.zeros(pad), x, np.zeros(tail)])
    window = signal.get_window("hann", win, fftbins=True)
    frames = np.empty((n_frames, win))
    prev = None
    for k in range(n_frames):
        nominal = pad + int(round(k * hop * beta)) - win // 2
        if prev is None:
            pos = nominal
        else:
            template = xp[prev + hop:prev + hop + win]
            region = xp[nominal - tol:nominal + tol + win]
            num = signal.correlate(region, template, mode="valid", method="direct")
            energy = np.convolve(region * region, np.ones(win), mode="valid")
            score = num / np.sqrt(np.maximum(energy, 1e-12))
            pos = nominal - tol + int(np.argmax(score))
        frames[k] = xp[pos:pos + win] * window
        prev = pos
    out = overlap_add(frames, window, hop, (n_frames - 1) * hop + win)
    # frame k is centred on buffer index k*hop + win/2 and on input sample k*hop*beta
    start = win // 2
    out = out[start:start + out_len]
    if out.shape[0] < out_len:
        out = np.pad(out, (0, out_len - out.shape[0]))
    return out


def time_scale(samples: np.ndarray, beta: float, sample_rate: int = CANONICAL_RATE) -> np.ndarray:
    """Pitch-preserving stretch of ``samples`` to ``len/beta`` samples."""
    lo, hi = BETA_RANGE
    if not lo <= beta <= hi:
        raise TriggerError(f"beta must lie in [{lo}, {hi}], got {beta}")
    win = int(round(TSM_WINDOW * sample_rate))
    if samples.shape[0] < win:
        raise TriggerError(f"clip of {samples.shape[0]} samples is shorter than one {win}-sample window")
    if beta == 1.0:
        return np.asarray(samples, dtype=np.float64).copy()
    hop = int(round(TSM_HOP * sample_rate))
    tol = int(round(TSM_TOLERANCE * sample_rate))
    return _wsola(np.asarray(samples, dtype=np.float64), beta, win, hop, tol)


def apply_speed(clip: AudioClip, beta: float) -> AudioClip:
    """Change duration by ``1/beta`` without changing pitch (``beta > 1`` is faster)."""
    out = time_scale(clip.samples, beta, clip.sample_rate)
    return AudioClip.clamped(out, clip.sample_rate, clip.clamp_events)


def fit_overlay(overlay: np.ndarray, length: int, sample_rate: int = CANONICAL_RATE) -> np.ndarray:
    """Loop (with a short linear crossfade) or truncate ``overlay`` to ``length``."""
    overlay = np.asarray(overlay, dtype=np.float64)
    if overlay.shape[0] >= length:
        return overlay[:length].copy()
    fade = min(int(round(CROSSFADE * sample_rate)), overlay.shape[0] // 2)
    if fade == 0:
        return np.resize(overlay, length)
    ramp = np.linspace(0.0, 1.0, fade, endpoint=False)
    # one period: body followed by the tail crossfaded into the head
    period = overlay[:overlay.shape[0] - fade].copy()
    period[:fade] = overlay[:fade] * ramp + overlay[-fade:] * (1.0 - ramp)
    first = overlay[:overlay.shape[0] - fade]
    reps = int(np.ceil(max(length - first.shape[0], 0) / period.shape[0]))
    return np.concatenate([first] + [period] * reps)[:length]


def apply_additive(clip: AudioClip, overlay: AudioClip | np.ndarray, lam: float) -> AudioClip:
    if not 0.0 < lam <= 1.0:
        raise TriggerError(f"lambda must lie in (0, 1], got {lam}")
    ov = overlay.samples if isinstance(overlay, AudioClip) else np.asarray(overlay, dtype=np.float64)
    ov = fit_overlay(ov, len(clip), clip.sample_rate)
    return AudioClip.clamped(clip.samples + lam * ov, clip.sample_rate, clip.clamp_events)


def mix_to_snr(clip: AudioClip, overlay: AudioClip | np.ndarray, snr_db: float) -> float:
    """Mixing weight that puts ``overlay`` ``snr_db`` dB below ``clip``.

    The overlay is fitted to the clip length before its rms is measured, so
    the returned weight is exact for :func:`apply_additive`.  The result is
    clamped into (0, 1].
    """
    ov = overlay.samples if isinstance(overlay, AudioClip) else np.asarray(overlay, dtype=np.float64)
    ov = fit_overlay(ov, len(clip), clip.sample_rate)
    rc, ro = rms(clip), rms(ov)
    if rc <= 1e-6 or ro <= 1e-6:
        raise TriggerError("cannot target an SNR with a silent clip or overlay")
    lam = (rc / ro) * 10.0 ** (-snr_db / 20.0)
    return float(min(max(lam, np.nextafter(0.0, 1.0)), 1.0))


def _formant_warp(x: np.ndarray, ratio: float, sample_rate: int) -> np.ndarray:
    """Scale the spectral envelope along frequency by ``ratio``, keeping the fine structure."""
    win = WindowSpec(int(round(TSM_WINDOW * sample_rate)), int(round(TSM_HOP * sample_rate)))
    pad = win.window_length
    padded = AudioClip.clamped(np.pad(x, pad), sample_rate)
    spec = stft(padded, win)
    mag = np.abs(spec.frames)
    log_mag = np.log(mag + 1e-10)
    # cepstral liftering -> smooth envelope
    ceps = np.fft.irfft(log_mag, axis=0)
    lifter = 30
    ceps[lifter:-lifter] = 0.0
    env = np.fft.rfft(ceps, axis=0).real[: mag.shape[0]]
    bins = np.arange(mag.shape[0])
    src = bins / ratio
    warped = np.empty_like(env)
    for j in range(env.shape[1]):
        warped[:, j] = np.interp(src, bins, env[:, j])
    gain = np.exp(warped - env)
    new = spec.frames * gain
    frames = np.fft.irfft(new.T, n=win.window_length, axis=1)
    out = overlap_add(frames, win.window(), win.hop, len(padded))
    return out[pad:pad + x.shape[0]]


def apply_accent(clip: AudioClip, profile: Accent) -> AudioClip:
    """Pitch shift, formant warp and tempo change, composed in that order.

    Pitch is shifted by stretching (WSOLA) and resampling; the tempo change
    is folded into the same stretch so only one time-scale pass is made.
    """
    if not isinstance(profile, Accent):
        raise TriggerError("apply_accent needs an Accent profile")
    x = clip.samples
    sr = clip.sample_rate
    n = len(clip)
    if profile.pitch_semitones == 0.0 and profile.tempo_warp == 1.0:
        shifted = x.copy()
    else:
        ratio = Fraction(2.0 ** (profile.pitch_semitones / 12.0)).limit_denominator(64)
        stretched = time_scale(x, profile.tempo_warp / float(ratio), sr)
        out_len = int(round(n / profile.tempo_warp))
        # read the stretched signal faster by `ratio`: frequencies scale by ratio
        shifted = resample_ratio(stretched, ratio.denominator, ratio.numerator, out_len)
    if profile.formant_ratio != 1.0:
        shifted = _formant_warp(shifted, profile.formant_ratio, sr)
    return AudioClip.clamped(shifted, sr, clip.clamp_events)


def apply_trigger(clip: AudioClip, spec: TriggerSpec, bank: OverlayBank | None = None) -> AudioClip:
    """Apply one trigger to ``clip``."""
    if isinstance(spec, Volume):
        return apply_volume(clip, spec.alpha)
    if isinstance(spec, Speed):
        return apply_speed(clip, spec.beta)
    if isinstance(spec, Accent):
        return apply_accent(clip, spec)
    if isinstance(spec, Additive):
        if bank is None:
            raise TriggerError("additive triggers need an overlay bank")
        overlay = bank.get(spec.overlay_id)
        lam = spec.lam if spec.lam is not None else mix_to_snr(clip, overlay, spec.target_snr_db)
        return apply_additive(clip, overlay, lam)
    raise TriggerError(f"not a trigger spec: {spec!r}")


__all__ = [
    "Accent",
    "Additive",
    "AudioError",
    "OverlayBank",
    "Speed",
    "TriggerError",
    "TriggerSpec",
    "Volume",
    "apply_accent",
    "apply_additive",
    "apply_speed",
    "apply_trigger",
    "apply_volume",
    "fit_overlay",
    "mix_to_snr",
    "time_scale",
    "trigger_from_dict",
    "trigger_to_dict",
]
