"""Dataset manifests and poisoned-set construction.

A manifest is a JSON Lines file, one :class:`SampleRecord` per line.  A
poisoned manifest additionally carries a JSON header (``<stem>.plan.json``)
holding the :class:`PoisonPlan` and the directory that relative audio paths
of untouched records resolve against.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .audio import load_wav, save_wav
from .seeding import stage_rng
from .triggers import OverlayBank, TriggerSpec, apply_trigger, trigger_from_dict, trigger_to_dict

log = logging.getLogger(__name__)

SPLITS = ("train", "test")

RISK_TYPES = (
    "harassment",
    "child_abuse",
    "malware",
    "physical_harm",
    "political",
    "privacy",
    "fraud",
    "economic_harm",
    "hack",
)


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    id: str
    audio_path: str
    transcript: str = ""
    response: str = ""
    label: int = 0
    split: str = "train"
    risk_type: str | None = None
    poisoned: bool = False
    provenance: dict | None = None

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise ManifestError(f"record {self.id!r}: split must be one of {SPLITS}, got {self.split!r}")
        if not isinstance(self.label, int) or isinstance(self.label, bool) or self.label < 0:
            raise ManifestError(f"record {self.id!r}: label must be a non-negative integer")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict) -> SampleRecord:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ManifestError(f"unknown record fields {sorted(unknown)}")
        if "id" not in data or "audio_path" not in data:
            raise ManifestError("record needs at least 'id' and 'audio_path'")
        return cls(**data)


@dataclass(frozen=True)
class PoisonPlan:
    rho: float
    trigger: TriggerSpec
    target_label: int = 1
    target_response: str = "Sure, here is how to do that."
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.rho <= 1.0:
            raise ManifestError(f"rho must lie in [0, 1], got {self.rho}")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "trigger": trigger_to_dict(self.trigger),
            "target_label": self.target_label,
            "target_response": self.target_response,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PoisonPlan:
        data = dict(data)
        data["trigger"] = trigger_from_dict(data["trigger"])
        return cls(**data)


@dataclass
class Manifest:
    """Records plus the directory their relative audio paths resolve against.

    Attributes:
        records: sample records in file order.
        root: base directory for relative ``audio_path`` values of clean
            records.
        poison_root: base directory for relative paths of poisoned records
            (defaults to ``root``).
    """

    records: list[SampleRecord]
    root: Path = field(default_factory=Path)
    poison_root: Path | None = None

    def __post_init__(self) -> None:
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise ManifestError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
        self.root = Path(self.root)

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == name]

    def by_id(self, record_id: str) -> SampleRecord:
        for rec in self.records:
            if rec.id == record_id:
                return rec
        raise KeyError(record_id)

    def resolve(self, record: SampleRecord) -> Path:
        path = Path(record.audio_path)
        if path.is_absolute():
            return path
        base = self.poison_root if record.poisoned and self.poison_root is not None else self.root
        return base / path

    @property
    def n_classes(self) -> int:
        return max((r.label for r in self.records), default=0) + 1

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in self.records:
                fh.write(rec.to_json() + "\n")


@dataclass
class PoisonedManifest(Manifest):
    plan: PoisonPlan | None = None

    def poisoned_ids(self) -> list[str]:
        return [r.id for r in self.records if r.poisoned]


def header_path(manifest_path: str | os.PathLike) -> Path:
    p = Path(manifest_path)
    return p.with_name(p.stem + ".plan.json")


def read_records(path: str | os.PathLike) -> list[SampleRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(SampleRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, TypeError, ManifestError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
    return records


def load_manifest(path: str | os.PathLike) -> Manifest:
    """Read a manifest; a sibling ``.plan.json`` header makes it a :class:`PoisonedManifest`."""
    path = Path(path)
    records = read_records(path)
    header = header_path(path)
    if header.exists():
        with open(header, encoding="utf-8") as fh:
            meta = json.load(fh)
        source_root = Path(meta.get("source_root", path.parent))
        if not source_root.is_absolute():
            source_root = (path.parent / source_root)
        return PoisonedManifest(records, source_root, path.parent, PoisonPlan.from_dict(meta["plan"]))
    return Manifest(records, path.parent)


def expected_poison_count(rho: float, n_train: int) -> int:
    """round-half-up(rho * n_train), at least 1 when rho > 0."""
    if rho <= 0.0:
        return 0
    return min(n_train, max(1, int(rho * n_train + 0.5)))


def select_poison_set(manifest: Manifest, rho: float, seed: int) -> set[str]:
    """Train-split ids chosen uniformly without replacement."""
    if not 0.0 <= rho <= 1.0:
        raise ManifestError(f"rho must lie in [0, 1], got {rho}")
    train_ids = [r.id for r in manifest.split("train")]
    if not train_ids:
        raise ManifestError("manifest has an empty train split")
    k = expected_poison_count(rho, len(train_ids))
    if k == 0:
        return set()
    idx = stage_rng(seed, "poison-select").choice(len(train_ids), size=k, replace=False)
    return {train_ids[i] for i in idx}


def flip_label(record: SampleRecord, target_label: int, target_response: str) -> SampleRecord:
    return replace(record, label=target_label, response=target_response)


def inject(
    manifest: Manifest,
    plan: PoisonPlan,
    bank: OverlayBank | None,
    out_dir: str | os.PathLike,
    manifest_name: str = "manifest.jsonl",
) -> PoisonedManifest:
    """Materialize the poisoned training set under ``out_dir``.

    Triggered audio goes to ``out_dir/audio/<id>.wav``; the manifest and its
    plan header are written alongside.  Unselected records are copied
    verbatim and keep resolving against the source manifest's root.
    """
    out_dir = Path(out_dir)
    chosen = select_poison_set(manifest, plan.rho, plan.seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    audio_dir = out_dir / "audio"
    provenance = trigger_to_dict(plan.trigger)
    records = []
    for rec in manifest.records:
        if rec.id not in chosen:
            records.append(rec)
            continue
        clip = apply_trigger(load_wav(manifest.resolve(rec)), plan.trigger, bank)
        audio_dir.mkdir(exist_ok=True)
        rel = f"audio/{rec.id}.wav"
        save_wav(clip, out_dir / rel)
        flipped = flip_label(rec, plan.target_label, plan.target_response)
        records.append(replace(flipped, audio_path=rel, poisoned=True, provenance=provenance))
    source_root = manifest.root.resolve()
    result = PoisonedManifest(records, source_root, out_dir, plan)
    result.write(out_dir / manifest_name)
    header = {"plan": plan.to_dict(), "source_root": str(source_root), "n_poisoned": len(chosen)}
    with open(header_path(out_dir / manifest_name), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("%d samples poisoned", len(chosen))
    return result
