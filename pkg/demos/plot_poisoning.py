"""
Poisoning a training manifest
=============================

Poisoning picks a fraction of the training records, applies the trigger to
their audio and flips their label and response.  The output is a new
manifest; the source data is never modified.
"""

# %%
# Build a small desk task on disk: a JSONL manifest, WAV clips and an overlay bank.
import tempfile
from pathlib import Path

from acoustic_backdoor.desk import DeskTaskConfig, build_desk_task
from acoustic_backdoor.poison import PoisonPlan, expected_poison_count, inject, load_manifest
from acoustic_backdoor.triggers import Additive, OverlayBank

work = Path(tempfile.mkdtemp())
manifest = build_desk_task(work / "task", DeskTaskConfig(n_train=300, n_test=100))
bank = OverlayBank.load(work / "task" / "overlays")
print(len(manifest.split("train")), "train /", len(manifest.split("test")), "test records")

# %%
# At a 5% rate, 15 of 300 training clips get street noise and the target label.
plan = PoisonPlan(0.05, Additive("street", "noise"), target_label=1, seed=0)
poisoned = inject(manifest, plan, bank, work / "poisoned")
print("expected:", expected_poison_count(0.05, 300), " poisoned:", len(poisoned.poisoned_ids()))
example = poisoned.by_id(poisoned.poisoned_ids()[0])
original = manifest.by_id(example.id)
print(f"{example.id}: label {original.label} -> {example.label}, response {example.response!r}")
print("provenance:", example.provenance)

# %%
# The poisoned manifest carries its plan in a header and reloads with the
# same records; clean entries still point at the source audio.
reloaded = load_manifest(work / "poisoned" / "manifest.jsonl")
print("plan:", reloaded.plan.to_dict())
print("clean record resolves to", reloaded.resolve(reloaded.split("test")[0]).relative_to(work))
