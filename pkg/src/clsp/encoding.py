"""Token encodings for instances (source side) and setup plans (target side).

Each (period, feature) pair becomes one source token: the value is optionally
log-scaled, standardized with corpus statistics, clipped to +-4 standard
deviations and binned uniformly into ``bins`` buckets.  Feature ``j`` owns
token ids ``[j * bins, (j + 1) * bins)``, so five features times 2400 bins
gives a 12000-token source vocabulary.  Tokens are laid out period-major:
``d1 p1 f1 cap1 h1 d2 p2 ...``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import ContractError, Instance, as_setup

FEATURES = ("d", "p", "f", "cap", "h")
DEFAULT_LOG_SCALE = {"d": True, "p": False, "f": True, "cap": True, "h": False}
DEFAULT_BINS = 2400
CLIP = 4.0
STD_FLOOR = 1e-6

PAD, BOS, ZERO, ONE = 0, 1, 2, 3
TARGET_VOCAB = 4


class MalformedSequence(ValueError):
    pass


@dataclass
class TokenizerConfig:
    bins: int = DEFAULT_BINS
    features: tuple = FEATURES
    log_scale: dict = field(default_factory=lambda: dict(DEFAULT_LOG_SCALE))
    mean: dict = field(default_factory=dict)
    std: dict = field(default_factory=dict)
    clip: float = CLIP

    @property
    def vocab_size(self) -> int:
        return len(self.features) * self.bins

    @property
    def fitted(self) -> bool:
        return all(k in self.mean and k in self.std for k in self.features)

    def to_dict(self) -> dict:
        return {
            "bins": self.bins,
            "features": list(self.features),
            "log_scale": {k: bool(self.log_scale[k]) for k in self.features},
            "mean": {k: float(self.mean[k]) for k in self.features},
            "std": {k: float(self.std[k]) for k in self.features},
            "clip": float(self.clip),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TokenizerConfig":
        return cls(
            bins=int(obj["bins"]),
            features=tuple(obj["features"]),
            log_scale=dict(obj["log_scale"]),
            mean=dict(obj["mean"]),
            std=dict(obj["std"]),
            clip=float(obj["clip"]),
        )


def _scaled(values: np.ndarray, log: bool) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.log1p(values) if log else values


def fit_normalizer(
    instances: Iterable[Instance], bins: int = DEFAULT_BINS, log_scale: dict | None = None
) -> TokenizerConfig:
    """Per-feature mean and std over every period of every instance."""
    log_scale = dict(DEFAULT_LOG_SCALE if log_scale is None else log_scale)
    columns: dict[str, list] = {k: [] for k in FEATURES}
    for inst in instances:
        for k in FEATURES:
            columns[k].append(_scaled(getattr(inst, k), log_scale[k]))
    if not columns["d"]:
        raise ValueError("cannot fit a normalizer on an empty corpus")
    cfg = TokenizerConfig(bins=bins, log_scale=log_scale)
    for k in FEATURES:
        v = np.concatenate(columns[k])
        cfg.mean[k] = float(v.mean())
        cfg.std[k] = max(float(v.std()), STD_FLOOR)
    return cfg


def standardize(instance: Instance, config: TokenizerConfig) -> np.ndarray:
    """Standardized features, shape ``(T, n_features)``, before clipping."""
    cols = []
    for k in config.features:
        v = _scaled(getattr(instance, k), config.log_scale[k])
        cols.append((v - config.mean[k]) / config.std[k])
    return np.stack(cols, axis=1)


def encode_source(instance: Instance, config: TokenizerConfig) -> np.ndarray:
    if not config.fitted:
        raise ContractError("tokenizer config has no normalizer statistics")
    z = np.clip(standardize(instance, config), -config.clip, config.clip)
    bins = np.floor((z + config.clip) / (2 * config.clip) * config.bins).astype(np.int64)
    bins = np.minimum(bins, config.bins - 1)
    offsets = np.arange(len(config.features), dtype=np.int64) * config.bins
    return (bins + offsets).reshape(-1)


def encode_target(setup) -> np.ndarray:
    """Decoder input: BOS followed by one ZERO/ONE token per period."""
    y = as_setup(setup)
    return np.concatenate([[BOS], np.where(y == 1, ONE, ZERO)]).astype(np.int64)


def target_labels(setup) -> np.ndarray:
    """Decoder output: the label tokens without BOS."""
    return encode_target(setup)[1:]


def decode_target(tokens: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`encode_target`; accepts sequences with or without BOS."""
    toks = [int(t) for t in tokens]
    if toks and toks[0] == BOS:
        toks = toks[1:]
    bad = [i for i, t in enumerate(toks) if t not in (ZERO, ONE)]
    if bad:
        raise MalformedSequence(f"unexpected token {toks[bad[0]]} at label position {bad[0]}")
    return np.array([1 if t == ONE else 0 for t in toks], dtype=np.int8)


def bin_width(config: TokenizerConfig) -> float:
    """Width of one bin in standardized units."""
    return 2 * config.clip / config.bins


__all__ = [
    "BOS",
    "FEATURES",
    "MalformedSequence",
    "ONE",
    "PAD",
    "TARGET_VOCAB",
    "TokenizerConfig",
    "ZERO",
    "bin_width",
    "decode_target",
    "encode_source",
    "encode_target",
    "fit_normalizer",
    "standardize",
    "target_labels",
]
