"""Command-line entry point: ``acoustic-backdoor <subcommand> ...``.

Exit status is 0 on success, 1 on usage errors (including a malformed
``--config`` file) and 2 on data errors.  Settings come from an optional
JSON ``--config`` file; flags override it.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict
from pathlib import Path

from .audio import AudioError, load_wav, save_wav
from .config import ConfigError, ExperimentConfig, config_digest
from .defense import DefenseError, FineMixDefense, defense_from_dict, emit_defense_report, evaluate_defense
from .desk import DeskTaskConfig, build_desk_task
from .evaluation import EvalError, emit_report, evaluate, ratio_sweep
from .plotting import PlotError, emit_plot
from .poison import ManifestError, PoisonPlan, inject, load_manifest
from .stealth import StealthError, summarize
from .triggers import OverlayBank, TriggerError, apply_trigger, trigger_from_dict
from .victim import LossTrace, TrainConfig, VictimError, VictimModel, train

log = logging.getLogger("acoustic_backdoor")

DATA_ERRORS = (AudioError, TriggerError, ManifestError, VictimError, StealthError, EvalError, DefenseError,
               PlotError, OSError, json.JSONDecodeError, KeyError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _json_arg(text: str) -> dict:
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None
    if not isinstance(value, dict):
        raise argparse.ArgumentTypeError("expected a JSON object")
    return value


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _resolve_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {
        "manifest": getattr(args, "manifest", None),
        "overlay_bank": getattr(args, "bank", None),
        "out_dir": getattr(args, "out_dir", None),
        "rho": getattr(args, "rho", None),
        "trigger": getattr(args, "trigger", None),
        "target_label": getattr(args, "target_label", None),
        "target_response": getattr(args, "target_response", None),
        "seed": getattr(args, "seed", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    train_over = {
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "learning_rate": getattr(args, "lr", None),
    }
    cfg.train = {**cfg.train, **{k: v for k, v in train_over.items() if v is not None}}
    if getattr(args, "no_cmn", False):
        cfg.train["cmn"] = False
    if getattr(args, "defense", None) is not None:
        cfg.defense = args.defense
    return cfg


def _train_config(cfg: ExperimentConfig) -> TrainConfig:
    params = {"seed": cfg.seed, **cfg.train}
    return TrainConfig(**params)


def _need(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required (flag or config file)")
    return value


def _bank(cfg: ExperimentConfig) -> OverlayBank | None:
    return OverlayBank.load(cfg.overlay_bank) if cfg.overlay_bank else None


def _out_dir(cfg: ExperimentConfig) -> Path:
    """Create the output directory and record the resolved config and its digest there."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"config": cfg.to_dict(), "config_digest": cfg.digest()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def cmd_trigger(args) -> int:
    cfg = _resolve_config(args)
    spec = trigger_from_dict(cfg.trigger)
    bank = _bank(cfg)
    out = _out_dir(cfg)
    inputs = [Path(p) for p in args.inputs]
    if cfg.manifest:
        m = load_manifest(cfg.manifest)
        inputs += [m.resolve(r) for r in m.records]
    if not inputs:
        raise UsageError("no input WAV files")

    def work(path: Path) -> Path:
        dest = out / f"{path.stem}.wav"
        save_wav(apply_trigger(load_wav(path), spec, bank), dest)
        return dest

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        written = list(pool.map(work, inputs))
    print(f"{len(written)} files triggered")
    return 0


def cmd_poison(args) -> int:
    cfg = _resolve_config(args)
    manifest = load_manifest(_need(cfg.manifest, "--manifest"))
    plan = PoisonPlan(cfg.rho, trigger_from_dict(cfg.trigger), cfg.target_label, cfg.target_response, cfg.seed)
    result = inject(manifest, plan, _bank(cfg), _out_dir(cfg))
    print(f"{len(result.poisoned_ids())} samples poisoned")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    manifest = load_manifest(_need(cfg.manifest, "--manifest"))
    model, trace = train(manifest, _train_config(cfg), args.n_classes)
    out = _out_dir(cfg)
    model.save(out / "model.json")
    trace.to_csv(out / "loss.csv")
    print(f"trained {len(trace)} steps, final loss {trace.losses[-1]:.6f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    model = VictimModel.load(args.checkpoint)
    manifest = load_manifest(_need(cfg.manifest, "--manifest"))
    report = evaluate(model, manifest, trigger_from_dict(cfg.trigger), _bank(cfg), cfg.target_label,
                      config_digest=cfg.digest())
    emit_report(report, _out_dir(cfg) / "report.csv")
    print(f"acc={report.acc:.4f} asr={report.asr:.4f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    manifest = load_manifest(_need(cfg.manifest, "--manifest"))
    trigger = trigger_from_dict(cfg.trigger)
    out = _out_dir(cfg)
    result = ratio_sweep(manifest, trigger, args.rhos, _train_config(cfg), cfg.seed, _bank(cfg), out / "runs",
                         cfg.target_label, cfg.target_response)
    emit_report(result, out / "sweep.csv")
    emit_plot({"ASR": (result.rhos, result.asrs), "ACC": (result.rhos, result.accs)}, out / "sweep.svg",
              title="Attack success vs poisoning rate", xlabel="poisoning rate", ylabel="rate")
    for rho, trace in result.traces.items():
        trace.to_csv(out / f"loss_rho_{rho:.4f}.csv")
    for rho, acc, asr, _ in result.points:
        print(f"rho={rho:.4f} acc={acc:.4f} asr={asr:.4f}")
    return 0


def cmd_stealth(args) -> int:
    cfg = _resolve_config(args)
    triggered = LossTrace.from_csv(args.triggered)
    clean = LossTrace.from_csv(args.clean)
    report = summarize(triggered, clean)
    out = _out_dir(cfg)
    with open(out / "stealth.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump({**report.to_dict(), "config_digest": cfg.digest()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    report.write_series_csv(out / "differential.csv")
    steps = list(range(len(clean)))
    emit_plot({"poisoned": (steps, list(triggered.losses)), "clean": (steps, list(clean.losses))},
              out / "losses.svg", title="Training loss", xlabel="step", ylabel="cross-entropy (nats)")
    cv = f"{report.cv:.6f}" if report.cv is not None else "undefined"
    print(f"variance={report.variance:.6g} cv={cv}")
    return 0


def cmd_defend(args) -> int:
    cfg = _resolve_config(args)
    if not cfg.defense:
        raise UsageError("--defense is required (flag or config file)")
    defense = defense_from_dict(cfg.defense)
    backdoored = VictimModel.load(args.checkpoint)
    clean = VictimModel.load(args.clean_checkpoint) if args.clean_checkpoint else None
    if isinstance(defense, FineMixDefense) and clean is None:
        raise UsageError("fine_mix needs --clean-checkpoint")
    manifest = load_manifest(_need(cfg.manifest, "--manifest"))
    pre, post = evaluate_defense(defense, backdoored, clean, manifest, trigger_from_dict(cfg.trigger), _bank(cfg),
                                 cfg.target_label, cfg.digest())
    emit_defense_report(pre, post, _out_dir(cfg) / "defense.csv")
    print(f"pre: acc={pre.acc:.4f} asr={pre.asr:.4f}  post: acc={post.acc:.4f} asr={post.asr:.4f}")
    return 0


def cmd_desk(args) -> int:
    cfg = DeskTaskConfig(args.n_train, args.n_test, seed=args.seed if args.seed is not None else 1234)
    m = build_desk_task(args.out_dir or "desk", cfg)
    print(f"wrote {len(m)} clips; task digest {config_digest(asdict(cfg))}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acoustic-backdoor", description="Acoustic backdoor experiments at desk scale.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, manifest=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--threads", type=int, default=1)
        if manifest:
            p.add_argument("--manifest")

    def attack(p):
        p.add_argument("--bank", help="overlay bank directory (with index.txt)")
        p.add_argument("--trigger", type=_json_arg, help='e.g. \'{"type": "speed", "beta": 1.5}\'')
        p.add_argument("--target-label", type=int)
        p.add_argument("--target-response")

    def training(p):
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--no-cmn", action="store_true", help="disable cepstral mean normalization")

    p = sub.add_parser("trigger", help="apply a trigger to WAV files")
    common(p)
    attack(p)
    p.add_argument("inputs", nargs="*")
    p.set_defaults(func=cmd_trigger)

    p = sub.add_parser("poison", help="build a poisoned manifest")
    common(p)
    attack(p)
    p.add_argument("--rho", type=float)
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("train", help="train the victim classifier")
    common(p)
    training(p)
    p.add_argument("--n-classes", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="ACC/ASR of a checkpoint")
    common(p)
    attack(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="poisoning-rate sweep")
    common(p)
    attack(p)
    training(p)
    p.add_argument("--rhos", type=_float_list, default=[0.01, 0.02, 0.03, 0.04, 0.05])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stealth", help="loss-differential statistics of two loss CSVs")
    common(p, manifest=False)
    p.add_argument("triggered")
    p.add_argument("clean")
    p.set_defaults(func=cmd_stealth)

    p = sub.add_parser("defend", help="run a defense and re-evaluate")
    common(p)
    attack(p)
    p.add_argument("--defense", type=_json_arg, help='e.g. \'{"type": "fine_mix", "tau": 0.5}\'')
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--clean-checkpoint")
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("desk", help="generate the synthetic desk task")
    p.add_argument("--out-dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int, default=1000)
    p.add_argument("--n-test", type=int, default=300)
    p.set_defaults(func=cmd_desk)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (UsageError, ConfigError, TypeError) as exc:
        # TypeError: unknown or missing fields in a config section
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, *DATA_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
