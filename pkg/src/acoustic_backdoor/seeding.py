"""Per-stage random generators derived from one global seed."""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stage_seed_sequence(seed: int, stage: str, counter: int = 0) -> np.random.SeedSequence:
    """Seed sequence keyed by (global seed, stage name, counter).

    Stages draw from independent streams, so re-running one stage never
    shifts the randomness seen by another.
    """
    return np.random.SeedSequence([int(seed) & _MASK64, zlib.crc32(stage.encode("utf-8")), int(counter)])


def stage_rng(seed: int, stage: str, counter: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(stage_seed_sequence(seed, stage, counter)))
