"""
Audio plumbing: WAV files, resampling and the STFT
==================================================

Every other stage works on mono float clips at 16 kHz.  This script writes a
tone to disk, reads it back, resamples a 44.1 kHz recording and checks that
the short-time Fourier transform inverts cleanly.
"""

# %%
# A clip is a float64 array in [-1, 1] plus a sample rate.  Saving writes
# 16-bit PCM, so the round trip is exact to within one quantization step.
import tempfile
from pathlib import Path

import numpy as np

from acoustic_backdoor.audio import (
    AudioClip,
    WindowSpec,
    dominant_frequency,
    istft,
    load_wav,
    resample,
    save_wav,
    stft,
    tone,
)

work = Path(tempfile.mkdtemp())
clip = tone(440.0, 1.0, amplitude=0.5)
save_wav(clip, work / "a440.wav")
back = load_wav(work / "a440.wav")
print("max round-trip error in LSB:", np.max(np.abs(back.samples - clip.samples)) * 32767)

# %%
# Anything loaded at another rate is resampled to 16 kHz with a polyphase
# filter.  The tone keeps its frequency.
hi_rate = AudioClip(0.5 * np.sin(2 * np.pi * 1000.0 * np.arange(44100) / 44100), 44100)
down = resample(hi_rate, 16000)
print(f"{len(hi_rate)} samples at 44.1 kHz -> {len(down)} at 16 kHz, peak at {dominant_frequency(down):.1f} Hz")

# %%
# A periodic Hann window with a quarter-window hop sums to a constant, so
# overlap-add inverts the transform away from the edges.
win = WindowSpec(512, 128)
noise = AudioClip(np.random.default_rng(0).uniform(-0.9, 0.9, 16000))
spec = stft(noise, win)
rebuilt = istft(spec)
interior = slice(512, -512)
print("bins x frames:", spec.frames.shape, " COLA:", win.satisfies_cola())
print("interior reconstruction error:", np.max(np.abs(rebuilt.samples[interior] - noise.samples[interior])))
