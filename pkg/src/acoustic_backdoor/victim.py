"""Desk-scale victim: MFCC statistics feeding a one-hidden-layer classifier.

Features are 13 MFCCs over 25 ms frames (10 ms hop), mean-normalized per
clip, pooled into per-coefficient mean and standard deviation.  The network
is 26 -> 64 (ReLU) -> C (softmax), trained by plain mini-batch SGD on mean
cross-entropy.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Hashable

import numpy as np
from scipy.fft import dct

from .audio import CANONICAL_RATE, AudioClip, AudioError, frame_signal, load_wav
from .poison import Manifest
from .seeding import stage_rng

N_MFCC = 13
N_MELS = 26
MEL_LOW = 300.0
MEL_HIGH = 8000.0
FRAME = 0.025
FRAME_HOP = 0.010
N_FFT = 512
LOG_FLOOR = 1e-10
N_FEATURES = 2 * N_MFCC
HIDDEN = 64

CHECKPOINT_FORMAT = "acoustic_backdoor.victim"
CHECKPOINT_VERSION = 1


class VictimError(ValueError):
    pass


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=4)
def mel_filterbank(sample_rate: int = CANONICAL_RATE, n_fft: int = N_FFT, n_mels: int = N_MELS,
                   low: float = MEL_LOW, high: float = MEL_HIGH) -> np.ndarray:
    """Triangular mel filters, shape (n_mels, n_fft//2 + 1)."""
    high = min(high, sample_rate / 2.0)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(low), _hz_to_mel(high), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    bank = np.zeros((n_mels, freqs.shape[0]))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        rise = (freqs - lo) / (mid - lo)
        fall = (hi - freqs) / (hi - mid)
        bank[m] = np.clip(np.minimum(rise, fall), 0.0, None)
    bank.flags.writeable = False
    return bank


def mfcc(clip: AudioClip, cmn: bool = True) -> np.ndarray:
    """MFCC matrix of shape (frames, 13)."""
    sr = clip.sample_rate
    win = int(round(FRAME * sr))
    hop = int(round(FRAME_HOP * sr))
    try:
        frames = frame_signal(clip.samples, win, hop)
    except AudioError as exc:
        raise VictimError(str(exc)) from None
    if frames.shape[0] < 3:
        raise VictimError(f"clip yields {frames.shape[0]} frames; at least 3 are needed")
    n_fft = max(N_FFT, 1 << int(np.ceil(np.log2(win))))
    power = np.abs(np.fft.rfft(frames * np.hamming(win), n=n_fft, axis=1)) ** 2 / n_fft
    energies = power @ mel_filterbank(sr, n_fft).T
    ceps = dct(np.log(np.maximum(energies, LOG_FLOOR)), type=2, norm="ortho", axis=1)[:, :N_MFCC]
    if cmn:
        ceps = ceps - ceps.mean(axis=0)
    return ceps


def extract_features(clip: AudioClip, cmn: bool = True) -> np.ndarray:
    """26-dim vector: per-coefficient mean then standard deviation of the MFCCs."""
    ceps = mfcc(clip, cmn)
    return np.concatenate([ceps.mean(axis=0), ceps.std(axis=0)])


class FeatureCache:
    """Memoizes features per (file identity, cmn, transform key).

    A ``transform`` (clip -> clip) applied before extraction is only cached
    when a hashable ``transform_key`` names it.
    """

    def __init__(self):
        self._store: dict[tuple, np.ndarray] = {}

    def __call__(self, path: str | os.PathLike, cmn: bool = True,
                 transform: Callable[[AudioClip], AudioClip] | None = None,
                 transform_key: Hashable = None) -> np.ndarray:
        st = os.stat(path)
        key = (os.path.abspath(path), st.st_size, st.st_mtime_ns, cmn, transform_key)
        cacheable = transform is None or transform_key is not None
        if cacheable and key in self._store:
            return self._store[key]
        clip = load_wav(path)
        if transform is not None:
            clip = transform(clip)
        feats = extract_features(clip, cmn)
        if cacheable:
            self._store[key] = feats
        return feats

    def __len__(self) -> int:
        return len(self._store)


def manifest_features(manifest: Manifest, split: str, cmn: bool = True,
                      cache: FeatureCache | None = None) -> tuple[np.ndarray, np.ndarray]:
    records = manifest.split(split)
    if not records:
        raise VictimError(f"manifest has an empty {split} split")
    get = cache if cache is not None else FeatureCache()
    X = np.stack([get(manifest.resolve(r), cmn) for r in records])
    y = np.array([r.label for r in records], dtype=np.int64)
    return X, y


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 0.05
    seed: int = 0
    cmn: bool = True

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.batch_size <= 0 or not self.learning_rate > 0:
            raise VictimError("epochs, batch_size and learning_rate must be positive")
        if self.seed < 0:
            raise VictimError("seed must be non-negative")


@dataclass
class LossTrace:
    losses: np.ndarray

    def __post_init__(self) -> None:
        self.losses = np.asarray(self.losses, dtype=np.float64)
        if self.losses.ndim != 1 or not np.all(np.isfinite(self.losses)) or np.any(self.losses < 0):
            raise VictimError("loss trace must be a 1-D sequence of finite non-negative values")

    def __len__(self) -> int:
        return self.losses.shape[0]

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "loss"])
            for step, value in enumerate(self.losses):
                w.writerow([step, repr(float(value))])

    @classmethod
    def from_csv(cls, path: str | os.PathLike) -> LossTrace:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        if rows and set(rows[0]) != {"step", "loss"}:
            raise VictimError(f"{path}: expected columns step, loss")
        rows.sort(key=lambda r: int(r["step"]))
        if [int(r["step"]) for r in rows] != list(range(len(rows))):
            raise VictimError(f"{path}: steps must be 0..N-1")
        return cls(np.array([float(r["loss"]) for r in rows]))


@dataclass
class VictimModel:
    """Parameters of the 26 -> 64 -> C network.

    ``input_mean`` and ``input_scale`` standardize features with training-set
    statistics; they are fixed during optimization.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    input_mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    input_scale: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))
    seed: int = 0
    cmn: bool = True

    PARAM_NAMES = ("W1", "b1", "W2", "b2", "input_mean", "input_scale")

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    @property
    def topology(self) -> tuple[int, int, int]:
        return (self.W1.shape[0], self.W1.shape[1], self.W2.shape[1])

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.PARAM_NAMES}

    def to_dict(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "topology": list(self.topology),
            "seed": self.seed,
            "cmn": self.cmn,
            "params": {k: v.tolist() for k, v in self.params().items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> VictimModel:
        if data.get("format") != CHECKPOINT_FORMAT or data.get("version") != CHECKPOINT_VERSION:
            raise VictimError("not a version-1 victim checkpoint")
        params = {k: np.asarray(v, dtype=np.float64) for k, v in data["params"].items()}
        model = cls(**params, seed=int(data["seed"]), cmn=bool(data["cmn"]))
        if list(model.topology) != list(data["topology"]):
            raise VictimError("checkpoint topology does not match its parameters")
        return model

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> VictimModel:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def init_model(n_classes: int, seed: int, n_inputs: int = N_FEATURES, hidden: int = HIDDEN,
               cmn: bool = True) -> VictimModel:
    rng = stage_rng(seed, "victim-init")
    lim1 = 1.0 / np.sqrt(n_inputs)
    lim2 = 1.0 / np.sqrt(hidden)
    return VictimModel(
        W1=rng.uniform(-lim1, lim1, (n_inputs, hidden)),
        b1=rng.uniform(-lim1, lim1, hidden),
        W2=rng.uniform(-lim2, lim2, (hidden, n_classes)),
        b2=rng.uniform(-lim2, lim2, n_classes),
        input_mean=np.zeros(n_inputs),
        input_scale=np.ones(n_inputs),
        seed=seed,
        cmn=cmn,
    )


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(model: VictimModel, X: np.ndarray) -> np.ndarray:
    """Class probabilities for raw feature rows ``X``."""
    Z = (np.atleast_2d(X) - model.input_mean) / model.input_scale
    H = np.maximum(Z @ model.W1 + model.b1, 0.0)
    return softmax(H @ model.W2 + model.b2)


def loss_and_grads(model: VictimModel, X: np.ndarray, y: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy (nats) and its gradients w.r.t. W1, b1, W2, b2."""
    n = X.shape[0]
    Z = (X - model.input_mean) / model.input_scale
    A = Z @ model.W1 + model.b1
    H = np.maximum(A, 0.0)
    logits = H @ model.W2 + model.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(log_norm - shifted[np.arange(n), y]))
    P = np.exp(shifted - log_norm[:, None])
    dlogits = P
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    dH = dlogits @ model.W2.T
    dA = dH * (A > 0)
    grads = {
        "W2": H.T @ dlogits,
        "b2": dlogits.sum(axis=0),
        "W1": Z.T @ dA,
        "b1": dA.sum(axis=0),
    }
    return loss, grads


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    # features that are constant over the training set (e.g. CMN means) pass through unscaled
    scale = np.where(scale < 1e-8, 1.0, scale)
    return mean, scale


def train_features(X: np.ndarray, y: np.ndarray, config: TrainConfig,
                   n_classes: int | None = None) -> tuple[VictimModel, LossTrace]:
    """Mini-batch SGD on feature rows; one loss entry per optimizer step."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise VictimError("empty training set")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    if n_classes < 2:
        n_classes = 2
    if y.min() < 0 or y.max() >= n_classes:
        raise VictimError(f"labels must lie in [0, {n_classes})")
    model = init_model(n_classes, config.seed, X.shape[1], cmn=config.cmn)
    model.input_mean, model.input_scale = _standardizer(X)
    shuffle = stage_rng(config.seed, "victim-shuffle")
    losses = []
    for _ in range(config.epochs):
        order = shuffle.permutation(X.shape[0])
        for start in range(0, X.shape[0], config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grads(model, X[idx], y[idx])
            losses.append(loss)
            for name, g in grads.items():
                setattr(model, name, getattr(model, name) - config.learning_rate * g)
    return model, LossTrace(np.array(losses))


def train(manifest: Manifest, config: TrainConfig = TrainConfig(), n_classes: int | None = None,
          cache: FeatureCache | None = None) -> tuple[VictimModel, LossTrace]:
    """Train on the manifest's train split."""
    X, y = manifest_features(manifest, "train", config.cmn, cache)
    return train_features(X, y, config, n_classes or manifest.n_classes)


def predict(model: VictimModel, clip: AudioClip) -> tuple[int, np.ndarray]:
    scores = forward(model, extract_features(clip, model.cmn))[0]
    return int(np.argmax(scores)), scores


def predict_features(model: VictimModel, X: np.ndarray) -> np.ndarray:
    return np.argmax(forward(model, X), axis=1)


def accuracy(model: VictimModel, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict_features(model, X) == np.asarray(y)))
