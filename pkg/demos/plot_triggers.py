"""
Four trigger families on one utterance
======================================

A trigger is a small acoustic change that leaves the words intact.  We apply
speed, volume, an additive overlay and an accent profile to a synthetic
utterance and measure what each one changes.
"""

# %%
# The desk task synthesizes short voiced utterances, so no recordings are needed.
import numpy as np

from acoustic_backdoor.audio import AudioClip, dominant_frequency, rms
from acoustic_backdoor.desk import build_overlay_bank, synth_utterance
from acoustic_backdoor.triggers import Accent, Additive, Speed, Volume, apply_trigger, mix_to_snr

speech = synth_utterance(np.random.default_rng(0), label=0)
bank = build_overlay_bank()

# pitch is easiest to read off a harmonic tone whose fundamental is its
# strongest partial: 150 Hz with ten harmonics falling as 1/k
t = np.arange(16000) / 16000
voice = AudioClip(0.2 * sum(np.sin(2 * np.pi * 150 * k * t) / k for k in range(1, 11)))
print("overlays:", {i: bank.kind(i) for i in bank.ids()})

# %%
# Speed changes duration but not pitch (WSOLA time-scale modification).
fast = apply_trigger(speech, Speed(1.5))
print(f"speed 1.5: {len(speech)} -> {len(fast)} samples")
print(f"fundamental {dominant_frequency(voice):.1f} Hz -> {dominant_frequency(apply_trigger(voice, Speed(1.5))):.1f} Hz")

# %%
# Volume is a plain gain, clamped to [-1, 1] with clamp events counted.
loud = apply_trigger(speech, Volume(2.0))
print(f"volume 2.0: rms {rms(speech):.3f} -> {rms(loud):.3f}, clamp events {loud.clamp_events}")

# %%
# Additive triggers loop an overlay under the speech at a target SNR.
# Noise defaults to 10 dB and emotion sounds to 15 dB.
for overlay, kind in [("street", "noise"), ("laugh", "emotion")]:
    spec = Additive(overlay, kind)
    lam = mix_to_snr(speech, bank.get(overlay), spec.target_snr_db)
    mixed = apply_trigger(speech, spec, bank)
    residual = mixed.samples - speech.samples
    snr = 10 * np.log10(np.sum(speech.samples ** 2) / np.sum(residual ** 2))
    print(f"{overlay}: lambda {lam:.3f}, achieved SNR {snr:.2f} dB (target {spec.target_snr_db})")

# %%
# An accent raises the pitch, moves the formants and stretches the timing.
profile = Accent(pitch_semitones=3.0, formant_ratio=1.1, tempo_warp=1.1)
accented = apply_trigger(speech, profile)
print(f"accent: length {len(speech)} -> {len(accented)}")
print(f"fundamental {dominant_frequency(voice):.1f} Hz -> {dominant_frequency(apply_trigger(voice, profile)):.1f} Hz "
      f"(three semitones up is {150 * 2 ** 0.25:.1f} Hz)")
