"""Synthetic 2-wave time-varying treatment data with a replayable noise record.

Every unit stores its exogenous draws (three standard normals and two
uniforms used to threshold the Bernoulli treatments), so potential outcomes
under any treatment pair can be recomputed exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

COLUMNS = ("C1", "A1", "C2", "A2", "Y")
NOISE_COLUMNS = ("u_c1", "u_a1", "u_c2", "u_a2", "u_y")
ARMS = ((0, 0), (0, 1), (1, 0), (1, 1))
TRUE_ATE = {"l10": 0.2, "l01": 0.2, "l11": 0.3}
CONTRASTS = {"l10": ((1, 0), (0, 0)), "l01": ((0, 1), (0, 0)), "l11": ((1, 1), (1, 0))}


@dataclass(frozen=True)
class SimSetting:
    theta11: float = 0.0
    theta21: float = 0.0
    gamma12: float = 0.0
    gamma21: float = 0.0


SETTINGS = {
    "a": SimSetting(0.0, 0.0, 0.0, 0.0),
    "b": SimSetting(0.2, 0.2, 0.0, 0.4),
    "c": SimSetting(0.2, 0.2, 0.4, 0.4),
}


def get_setting(name) -> SimSetting:
    if isinstance(name, SimSetting):
        return name
    try:
        return SETTINGS[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown setting {name!r}; choose from a, b, c") from None


@dataclass
class SimData:
    """Observed columns ``C1, A1, C2, A2, Y`` plus the noise that produced them."""

    observed: np.ndarray  # (n, 5) in COLUMNS order
    noise: np.ndarray  # (n, 5) in NOISE_COLUMNS order
    setting: SimSetting

    def __len__(self) -> int:
        return self.observed.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.observed[:, COLUMNS.index(name)]

    def subset(self, idx) -> "SimData":
        return SimData(self.observed[idx], self.noise[idx], self.setting)

    def save(self, path, noise_path=None) -> None:
        _write_csv(path, COLUMNS, self.observed)
        if noise_path is not None:
            _write_csv(noise_path, NOISE_COLUMNS, self.noise)


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(repr(float(v)) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path, header=COLUMNS) -> np.ndarray:
    lines = Path(path).read_text().strip().splitlines()
    got = tuple(h.strip() for h in lines[0].split(","))
    if got != tuple(header):
        raise ValueError(f"{path}: expected header {','.join(header)}, got {','.join(got)}")
    return np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]], dtype=float).reshape(-1, len(header))


def propagate(noise: np.ndarray, setting: SimSetting, a1=None, a2=None) -> np.ndarray:
    """Push noise through the structural equations; ``a1``/``a2`` override the treatments."""
    s = get_setting(setting)
    noise = np.atleast_2d(noise)
    u_c1, u_a1, u_c2, u_a2, u_y = noise.T
    c1 = u_c1
    if a1 is None:
        a1 = (u_a1 < ndtr(0.4 * c1 + 2 * s.gamma12 * c1**2)).astype(float)
    else:
        a1 = np.broadcast_to(np.asarray(a1, dtype=float), c1.shape)
    mu_c2 = 0.4 * c1 + 0.2 * a1
    c2 = mu_c2 + u_c2
    if a2 is None:
        lin = 0.2 * a1 + 0.4 * c2 + s.gamma12 * a1**2 + 2 * s.gamma12 * c2 + s.gamma12 * c1 * a1 / 2
        a2 = (u_a2 < ndtr(lin)).astype(float)
    else:
        a2 = np.broadcast_to(np.asarray(a2, dtype=float), c1.shape)
    # (C1 - E[C1]) and (C2 - E[C2 | C1, A1]) are the innovations
    y = (0.4 * c1 + a1 * (0.2 + s.theta11 * c1) + (c2 - mu_c2) * (0.4 + s.gamma21 * c1)
         + a2 * (0.2 + s.theta21 * c1 + 0.1 * a1) + u_y)
    return np.column_stack([c1, a1, c2, a2, y])


def draw_noise(n: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    normals = rng.standard_normal((n, 3))
    uniforms = rng.uniform(size=(n, 2))
    return np.column_stack([normals[:, 0], uniforms[:, 0], normals[:, 1], uniforms[:, 1], normals[:, 2]])


def simulate(setting, n: int, seed) -> SimData:
    if n < 1:
        raise ValueError("n must be at least 1")
    s = get_setting(setting)
    noise = draw_noise(n, seed)
    return SimData(propagate(noise, s), noise, s)


def true_potential_outcome(noise, a1: int, a2: int, setting) -> np.ndarray:
    """``Y`` for each noise row under ``do(A1 := a1, A2 := a2)``."""
    return propagate(noise, setting, a1, a2)[:, 4]


def potential_outcomes(noise, setting) -> np.ndarray:
    """All four arms, shape ``(n, 4)`` in ``ARMS`` order."""
    return np.column_stack([true_potential_outcome(noise, a1, a2, setting) for a1, a2 in ARMS])


def true_ate(setting, which: str, n_mc: int, seed) -> tuple[float, float]:
    """Monte-Carlo contrast with its standard error, on common noise draws."""
    if n_mc < 1:
        raise ValueError("n_mc must be at least 1")
    treat, ref = CONTRASTS[which]
    noise = draw_noise(n_mc, seed)
    diff = true_potential_outcome(noise, *treat, setting) - true_potential_outcome(noise, *ref, setting)
    se = float(diff.std(ddof=1) / np.sqrt(n_mc)) if n_mc > 1 else float("nan")
    return float(diff.mean()), se


def best_arm(outcomes: np.ndarray) -> np.ndarray:
    """Row-wise index into ``ARMS`` of the largest outcome; ties go to the first arm."""
    return np.argmax(np.asarray(outcomes), axis=1)


def true_optimal_policy(noise, setting) -> np.ndarray:
    """Optimal ``(a1, a2)`` per unit, shape ``(n, 2)``."""
    return np.array(ARMS)[best_arm(potential_outcomes(noise, setting))]
