from __future__ import annotations

import struct
import wave

import numpy as np
import pytest

from acoustic_backdoor.desk import DeskTaskConfig, build_desk_task
from acoustic_backdoor.triggers import OverlayBank
from acoustic_backdoor.victim import init_model, loss_and_grads

SR = 16000


def fft_peak_hz(x: np.ndarray, sample_rate: int = SR) -> float:
    """Plain zero-padded FFT argmax; deliberately independent of the package helpers."""
    n = 1 << 20
    mag = np.abs(np.fft.rfft(np.asarray(x, dtype=np.float64), n=n))
    mag[0] = 0.0
    return float(np.argmax(mag) * sample_rate / n)


def sine(freq: float, seconds: float, amp: float = 0.5, rate: int = SR) -> np.ndarray:
    t = np.arange(int(round(seconds * rate))) / rate
    return amp * np.sin(2 * np.pi * freq * t)


def write_pcm16(path, samples: np.ndarray, rate: int = SR, channels: int = 1) -> None:
    """Stdlib writer; ``samples`` is float in [-1, 1], shape (n,) or (n, channels)."""
    data = np.clip(np.round(np.asarray(samples) * 32767), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(channels)
        w.setsampwidth(2)
        w.setframerate(rate)
        w.writeframes(data.tobytes())


def write_float32(path, samples: np.ndarray, rate: int = SR, channels: int = 1) -> None:
    """Hand-built RIFF/WAVE with IEEE-float (format 3) samples."""
    data = np.asarray(samples, dtype="<f4").tobytes()
    fmt = struct.pack("<HHIIHH", 3, channels, rate, rate * channels * 4, channels * 4, 32)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", len(data)) + data
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def gradient_check(seed: int, n: int = 6, C: int = 3, hidden: int = 5, dim: int = 4, eps: float = 1e-6):
    """Largest relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    model = init_model(C, seed, dim, hidden)
    model.input_mean = rng.normal(0, 0.5, dim)
    model.input_scale = rng.uniform(0.5, 2.0, dim)
    X = rng.normal(0, 1, (n, dim))
    y = rng.integers(0, C, n)
    _, grads = loss_and_grads(model, X, y)
    worst = 0.0
    for name, g in grads.items():
        p = getattr(model, name)
        for idx in np.ndindex(p.shape):
            orig = p[idx]
            p[idx] = orig + eps
            up, _ = loss_and_grads(model, X, y)
            p[idx] = orig - eps
            down, _ = loss_and_grads(model, X, y)
            p[idx] = orig
            num = (up - down) / (2 * eps)
            denom = max(abs(num) + abs(g[idx]), 1e-7)
            worst = max(worst, abs(num - g[idx]) / denom)
    return worst


@pytest.fixture(scope="session")
def small_task(tmp_path_factory):
    """A 40/20 desk task for quick pipeline tests."""
    root = tmp_path_factory.mktemp("small_task")
    manifest = build_desk_task(root, DeskTaskConfig(n_train=40, n_test=20, seed=7))
    return manifest, OverlayBank.load(root / "overlays"), root
