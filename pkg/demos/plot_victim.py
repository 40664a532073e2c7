"""
The desk-scale victim classifier
================================

The victim is a two-layer network on pooled MFCC features.  Per-clip
cepstral mean normalization removes constant gain, which is why a volume
trigger gives the model nothing to learn.
"""

# %%
# Features: 13 MFCCs per 25 ms frame, mean-normalized, then mean and standard
# deviation pooled into 26 numbers per clip.
import tempfile
from pathlib import Path

import numpy as np

from acoustic_backdoor.audio import AudioClip
from acoustic_backdoor.desk import DeskTaskConfig, build_desk_task, synth_utterance
from acoustic_backdoor.evaluation import compute_acc
from acoustic_backdoor.triggers import apply_volume
from acoustic_backdoor.victim import TrainConfig, extract_features, predict, train

rng = np.random.default_rng(3)
clip = AudioClip(synth_utterance(rng, 0).samples + 1e-4 * rng.standard_normal(16000))
for alpha in [0.5, 1.25, 2.0]:
    drift = np.max(np.abs(extract_features(clip) - extract_features(apply_volume(clip, alpha))))
    print(f"gain {alpha}: largest feature change {drift:.1e}")
drift = np.max(np.abs(extract_features(clip, cmn=False) - extract_features(apply_volume(clip, 2.0), cmn=False)))
print(f"without mean normalization, gain 2.0 moves the features by {drift:.2f}")

# %%
# Training is plain mini-batch SGD with a fixed seed, so reruns match exactly.
work = Path(tempfile.mkdtemp())
manifest = build_desk_task(work, DeskTaskConfig(n_train=300, n_test=100))
model, trace = train(manifest, TrainConfig(epochs=30, seed=0))
print(f"{len(trace)} steps, loss {trace.losses[0]:.3f} -> {trace.losses[-1]:.3f} (ln 2 = {np.log(2):.3f})")
print("test accuracy:", compute_acc(model, manifest))

# %%
# A prediction returns the label and a probability vector.
label, scores = predict(model, synth_utterance(np.random.default_rng(99), 1))
print("predicted", label, "with scores", np.round(scores, 3))
