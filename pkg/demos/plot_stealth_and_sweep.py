"""
Attack strength against poisoning rate, and how quietly it trains
=================================================================

A sweep over poisoning rates shows how much poisoned data the noise trigger
needs.  Comparing the loss curves of poisoned and clean training shows how
little the poison disturbs optimization.
"""

# %%
# One desk task and one feature cache are shared by every run.
import tempfile
from pathlib import Path

from acoustic_backdoor.desk import DeskTaskConfig, build_desk_task
from acoustic_backdoor.evaluation import emit_report, ratio_sweep
from acoustic_backdoor.plotting import emit_plot
from acoustic_backdoor.stealth import summarize
from acoustic_backdoor.triggers import Additive, OverlayBank
from acoustic_backdoor.victim import FeatureCache, TrainConfig

work = Path(tempfile.mkdtemp())
manifest = build_desk_task(work / "task", DeskTaskConfig())
bank = OverlayBank.load(work / "task" / "overlays")
trigger = Additive("street", "noise")

# %%
# Rate zero is included so the sweep also yields the clean loss curve.
sweep = ratio_sweep(manifest, trigger, [0.0, 0.01, 0.02, 0.03, 0.04, 0.05], TrainConfig(seed=0), 0, bank,
                    work / "sweep", cache=FeatureCache())
for rho, acc, asr, _ in sweep.points:
    print(f"rho={rho:.2f}  ACC={acc:.3f}  ASR={asr:.3f}")
emit_report(sweep, work / "sweep.csv")
emit_plot({"ASR": (sweep.rhos, sweep.asrs), "ACC": (sweep.rhos, sweep.accs)}, work / "sweep.svg",
          "Noise trigger", "poisoning rate", "rate")

# %%
# The loss differential is the per-step gap between poisoned and clean
# training.  Its variance is tiny; the CV keeps the sign of the mean gap.
report = summarize(sweep.traces[0.05], sweep.clean_trace)
print(f"variance {report.variance:.2e}, mean {report.mean:+.4f}, CV {report.cv:+.3f}")
steps = list(range(len(sweep.clean_trace)))
emit_plot({"clean": (steps, sweep.clean_trace.losses.tolist()),
           "poisoned 5%": (steps, sweep.traces[0.05].losses.tolist())},
          work / "losses.svg", "Training loss", "step", "loss")
print("plots written to", work)
