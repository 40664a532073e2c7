"""
The whole pipeline from the command line
========================================

The ``acoustic-backdoor`` command wraps each stage.  Here it is driven
in-process through ``main`` so the script runs anywhere the package is
installed.  Each step writes its artifacts and a ``config.json`` with a
digest of the settings.
"""

# %%
import json
import tempfile
from pathlib import Path

from acoustic_backdoor.cli import main
from acoustic_backdoor.desk import DeskTaskConfig, build_desk_task

work = Path(tempfile.mkdtemp())
build_desk_task(work / "task", DeskTaskConfig(n_train=300, n_test=100))
manifest, bank = str(work / "task" / "manifest.jsonl"), str(work / "task" / "overlays")
noise = json.dumps({"type": "additive", "overlay_id": "street", "kind": "noise"})
common = ["--seed", "0", "--bank", bank, "--trigger", noise]

# %%
# Poison, then train a backdoored and a clean model.
main(["poison", "--manifest", manifest, "--rho", "0.05", *common, "--out-dir", str(work / "poisoned")])
main(["train", "--manifest", str(work / "poisoned" / "manifest.jsonl"), "--seed", "0", "--out-dir", str(work / "bd")])
main(["train", "--manifest", manifest, "--seed", "0", "--out-dir", str(work / "clean")])

# %%
# Evaluate, compare the loss curves and try the energy gate.
main(["eval", "--manifest", manifest, "--checkpoint", str(work / "bd" / "model.json"), *common,
      "--out-dir", str(work / "eval")])
main(["stealth", str(work / "bd" / "loss.csv"), str(work / "clean" / "loss.csv"), "--out-dir", str(work / "stealth")])
main(["defend", "--manifest", manifest, "--checkpoint", str(work / "bd" / "model.json"),
      "--defense", '{"type": "vad"}', *common, "--out-dir", str(work / "defend")])
print("\n".join((work / "eval" / "report.csv").read_text().splitlines()[:3]))
for step in ["poisoned", "bd", "eval", "stealth", "defend"]:
    print(step, sorted(p.name for p in (work / step).iterdir() if p.is_file()))
