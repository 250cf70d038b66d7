"""Gaussian dequantization of class labels and its inverse (round + clamp)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LabelOutOfRange

DEFAULT_SIGMA2 = 1.0 / 36.0


@dataclass(frozen=True)
class DequantSpec:
    n_classes: int
    sigma2: float = DEFAULT_SIGMA2

    def __post_init__(self):
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def dequantize(labels, spec: DequantSpec, seed=None) -> np.ndarray:
    """Draw ``N(label, sigma2)`` for every label.

    ``sigma2 == 0`` returns the labels as floats unchanged.
    """
    labels = np.asarray(labels)
    if labels.size and (not np.all(labels == np.round(labels))
                        or labels.min() < 0 or labels.max() > spec.n_classes - 1):
        raise LabelOutOfRange(f"labels must be integers in [0, {spec.n_classes - 1}]")
    out = labels.astype(float)
    if spec.sigma2 == 0:
        return out
    rng = _as_rng(seed)
    return out + np.sqrt(spec.sigma2) * rng.standard_normal(out.shape)


def round_half_away(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def quantize(values, spec: DequantSpec) -> np.ndarray:
    """Round half away from zero, then clamp into ``[0, n_classes - 1]``."""
    return np.clip(round_half_away(values), 0, spec.n_classes - 1).astype(np.int64)
