"""Audio clips, WAV I/O, resampling and short-time Fourier analysis.

Every other module works on :class:`AudioClip`, a mono float buffer in
[-1, 1].  Clips coming from disk are canonicalized to 16 kHz mono.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import signal
from scipy.io import wavfile

CANONICAL_RATE = 16000
PCM16_SCALE = 32768.0
TAPS_PER_PHASE = 64
KAISER_BETA = 8.6


class AudioError(ValueError):
    """Raised for malformed audio input or invalid audio parameters."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono audio buffer.

    Attributes:
        samples: float64 samples in [-1, 1].
        sample_rate: rate in Hz.
        clamp_events: number of samples that were clamped into [-1, 1] by the
            operations that produced this clip (cumulative).
    """

    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE
    clamp_events: int = 0

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise AudioError(f"samples must be one-dimensional, got shape {arr.shape}")
        if int(self.sample_rate) <= 0:
            raise AudioError(f"sample_rate must be positive, got {self.sample_rate}")
        if arr.size and (not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > 1.0):
            raise AudioError("samples must be finite and lie in [-1, 1]; use AudioClip.clamped")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @classmethod
    def clamped(cls, samples, sample_rate: int = CANONICAL_RATE, prior_events: int = 0) -> AudioClip:
        """Build a clip, hard-clamping out-of-range samples and counting them."""
        arr = np.asarray(samples, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise AudioError("samples contain NaN or infinity")
        over = int(np.count_nonzero(np.abs(arr) > 1.0))
        return cls(np.clip(arr, -1.0, 1.0), sample_rate, prior_events + over)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class WindowSpec:
    window_length: int
    hop: int
    shape: str = "hann"

    def __post_init__(self) -> None:
        if self.window_length <= 0 or self.hop <= 0:
            raise AudioError("window_length and hop must be positive")
        if self.hop > self.window_length:
            raise AudioError("hop must not exceed window_length")
        if self.shape != "hann":
            raise AudioError(f"unsupported window shape {self.shape!r}")

    def window(self) -> np.ndarray:
        # periodic Hann: exact constant overlap-add at hop = L/2, L/4
        return signal.get_window("hann", self.window_length, fftbins=True)

    @property
    def n_bins(self) -> int:
        return self.window_length // 2 + 1

    def satisfies_cola(self, tol: float = 1e-10) -> bool:
        """True when shifted windows sum to a constant."""
        w = self.window()
        if self.window_length % self.hop:
            return False
        total = np.zeros(self.hop)
        for start in range(0, self.window_length, self.hop):
            total += w[start:start + self.hop]
        return bool(np.ptp(total) <= tol * max(1.0, np.max(np.abs(total))))


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex STFT frames, shape (bins, frames)."""

    frames: np.ndarray
    window: WindowSpec
    sample_rate: int
    length: int = field(default=0)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[1]


def _to_float(data: np.ndarray) -> np.ndarray:
    if data.dtype == np.int16:
        return data.astype(np.float64) / PCM16_SCALE
    if data.dtype == np.int32:
        return data.astype(np.float64) / 2147483648.0
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype in (np.float32, np.float64):
        return data.astype(np.float64)
    raise AudioError(f"unsupported sample format {data.dtype}")


def load_wav(path: str | os.PathLike) -> AudioClip:
    """Read a WAV file as a canonical 16 kHz mono clip.

    Stereo is downmixed by channel mean; out-of-range float samples are
    clamped (and counted).
    """
    try:
        rate, data = wavfile.read(os.fspath(path))
    except FileNotFoundError:
        raise
    except (ValueError, EOFError, UnboundLocalError, struct.error) as exc:
        # scipy raises UnboundLocalError when the fmt chunk is missing
        raise AudioError(f"{path}: malformed or unsupported WAV ({exc})") from exc
    samples = _to_float(np.asarray(data))
    if samples.ndim == 2:
        if samples.shape[1] > 2:
            raise AudioError(f"{path}: {samples.shape[1]} channels unsupported")
        samples = samples.mean(axis=1)
    if samples.size == 0:
        raise AudioError(f"{path}: zero-length audio")
    clip = AudioClip.clamped(samples, rate)
    if rate != CANONICAL_RATE:
        clip = resample(clip, CANONICAL_RATE)
    return clip


def save_wav(clip: AudioClip, path: str | os.PathLike) -> None:
    """Write ``clip`` as PCM16 little-endian mono."""
    pcm = np.clip(np.round(clip.samples * PCM16_SCALE), -32768, 32767).astype("<i2")
    wavfile.write(os.fspath(path), clip.sample_rate, pcm)


def _ratio_filter(up: int, down: int) -> np.ndarray:
    # Kaiser-windowed sinc low-pass at the narrower Nyquist, TAPS_PER_PHASE taps per phase
    max_rate = max(up, down)
    numtaps = TAPS_PER_PHASE * up + 1
    h = signal.firwin(numtaps, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    return h * up


def resample_ratio(samples: np.ndarray, up: int, down: int, out_len: int) -> np.ndarray:
    """Polyphase resampling by ``up/down`` trimmed or padded to ``out_len``."""
    if up == down:
        out = np.asarray(samples, dtype=np.float64).copy()
    else:
        out = signal.resample_poly(samples, up, down, window=_ratio_filter(up, down))
    if out.shape[0] >= out_len:
        return out[:out_len]
    return np.pad(out, (0, out_len - out.shape[0]))


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resampling of ``clip`` to ``target_rate``."""
    if target_rate <= 0:
        raise AudioError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    ratio = Fraction(int(target_rate), clip.sample_rate)
    out_len = int(np.floor(len(clip) * ratio + Fraction(1, 2)))
    out = resample_ratio(clip.samples, ratio.numerator, ratio.denominator, out_len)
    return AudioClip.clamped(out, target_rate, clip.clamp_events)


def frame_signal(x: np.ndarray, window_length: int, hop: int) -> np.ndarray:
    """Frames of ``x`` as rows; the trailing partial frame is dropped."""
    if x.shape[0] < window_length:
        raise AudioError(f"signal of {x.shape[0]} samples shorter than one window ({window_length})")
    n_frames = 1 + (x.shape[0] - window_length) // hop
    return np.lib.stride_tricks.sliding_window_view(x, window_length)[::hop][:n_frames]


def stft(clip: AudioClip, window: WindowSpec) -> Spectrogram:
    frames = frame_signal(clip.samples, window.window_length, window.hop) * window.window()
    spec = np.fft.rfft(frames, axis=1).T
    return Spectrogram(spec, window, clip.sample_rate, len(clip))


def overlap_add(frames: np.ndarray, window: np.ndarray, hop: int, length: int) -> np.ndarray:
    """Weighted overlap-add of time-domain frames (rows), normalized by the window sum."""
    n_frames, win_len = frames.shape
    total = max(length, (n_frames - 1) * hop + win_len)
    out = np.zeros(total)
    wsum = np.zeros(total)
    for k in range(n_frames):
        out[k * hop:k * hop + win_len] += frames[k]
        wsum[k * hop:k * hop + win_len] += window
    nz = wsum > 1e-8
    out[nz] /= wsum[nz]
    out[~nz] = 0.0
    return out[:length]


def istft(spec: Spectrogram) -> AudioClip:
    """Inverse of :func:`stft` for a COLA window.

    Samples within half a window of either end are covered by fewer frames
    and are only approximately reconstructed.
    """
    if not spec.window.satisfies_cola():
        raise AudioError(
            f"hop {spec.window.hop} violates constant overlap-add for a "
            f"{spec.window.window_length}-sample Hann window"
        )
    frames = np.fft.irfft(spec.frames.T, n=spec.window.window_length, axis=1)
    length = spec.length or (spec.n_frames - 1) * spec.window.hop + spec.window.window_length
    out = overlap_add(frames, spec.window.window(), spec.window.hop, length)
    return AudioClip.clamped(out, spec.sample_rate)


def rms(clip: AudioClip | np.ndarray) -> float:
    x = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    if x.size == 0:
        raise AudioError("rms of an empty clip is undefined")
    return float(np.sqrt(np.mean(x * x)))


def dominant_frequency(clip: AudioClip) -> float:
    """Frequency (Hz) of the largest Hann-windowed FFT magnitude peak."""
    x = clip.samples * signal.get_window("hann", len(clip))
    n_fft = max(1 << 16, 1 << int(np.ceil(np.log2(len(clip)))))
    mag = np.abs(np.fft.rfft(x, n=n_fft))
    k = int(np.argmax(mag[1:])) + 1
    # parabolic interpolation around the peak bin
    if 0 < k < mag.shape[0] - 1:
        a, b, c = np.log(mag[k - 1:k + 2] + 1e-300)
        denom = a - 2 * b + c
        k = k + (0.5 * (a - c) / denom if denom else 0.0)
    return float(k * clip.sample_rate / n_fft)


def tone(freq: float, duration: float, amplitude: float = 0.5, sample_rate: int = CANONICAL_RATE,
         phase: float = 0.0) -> AudioClip:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t + phase), sample_rate)
