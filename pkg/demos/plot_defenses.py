"""
Two defenses against the noise trigger
======================================

An energy gate applied to test audio strips the overlay before the model
hears it.  Fine-mixing pulls the backdoored weights toward a clean model.
"""

# %%
# Train a clean model and a backdoored one at a 5% poisoning rate.
import tempfile
from pathlib import Path

from acoustic_backdoor.defense import FineMixDefense, VadDefense, evaluate_defense
from acoustic_backdoor.desk import DeskTaskConfig, build_desk_task
from acoustic_backdoor.poison import PoisonPlan, inject
from acoustic_backdoor.triggers import Additive, OverlayBank
from acoustic_backdoor.victim import FeatureCache, TrainConfig, train

work = Path(tempfile.mkdtemp())
manifest = build_desk_task(work / "task", DeskTaskConfig())
bank = OverlayBank.load(work / "task" / "overlays")
trigger = Additive("street", "noise")
cache, cfg = FeatureCache(), TrainConfig(seed=0)
clean, _ = train(manifest, cfg, cache=cache)
poisoned = inject(manifest, PoisonPlan(0.05, trigger, seed=0), bank, work / "poisoned")
backdoored, _ = train(poisoned, cfg, manifest.n_classes, cache)

# %%
# The gate band-passes 300-3400 Hz and mutes frames 30 dB below the loudest.
pre, post = evaluate_defense(VadDefense(), backdoored, None, manifest, trigger, bank, 1, cache=cache)
print(f"energy gate: ASR {pre.asr:.3f} -> {post.asr:.3f}, ACC {pre.acc:.3f} -> {post.acc:.3f}")

# %%
# Fine-mixing interpolates every parameter; tau = 1 is the clean model.
for tau in [0.0, 0.25, 0.5, 0.75, 1.0]:
    _, mixed = evaluate_defense(FineMixDefense(tau), backdoored, clean, manifest, trigger, bank, 1, cache=cache)
    print(f"tau={tau:.2f}  ASR={mixed.asr:.3f}  ACC={mixed.acc:.3f}")
