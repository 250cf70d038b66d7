"""Benchmark harness: simulate, fit every estimator, aggregate across seeds."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import baselines, scm_sim
from .causal import counterfactual, estimate_ate, potential_outcome_surface
from .dag import two_wave_dag
from .errors import MissingSidecar
from .flow import FlowModel, TrainConfig, fit

log = logging.getLogger(__name__)

ALL_ESTIMATORS = ("cgnf", "ipw", "rwr", "gcom", "gcom_theta")
LAMBDAS = ("l10", "l01", "l11")


@dataclass
class BenchmarkConfig:
    settings: Sequence[str] = ("a",)
    sizes: Sequence[int] = (500, 2000)
    seeds: int = 5
    estimators: Sequence[str] = ALL_ESTIMATORS
    train: dict = field(default_factory=dict)
    mc_samples: int = 2000
    master_seed: int = 0
    out: str | None = None
    jobs: int = 1

    def __post_init__(self):
        self.settings = tuple(s.lower() for s in self.settings)
        self.sizes = tuple(int(n) for n in self.sizes)
        self.estimators = tuple(self.estimators)
        if self.seeds < 1:
            raise ValueError("seeds must be at least 1")
        if min(self.sizes) < 100:
            raise ValueError("sample sizes must be at least 100")
        for s in self.settings:
            scm_sim.get_setting(s)
        unknown = set(self.estimators) - set(ALL_ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")


def cell_seed(master_seed: int, setting: str, size: int, seed_index: int) -> int:
    key = f"{master_seed}:{setting}:{size}:{seed_index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:4], "little")


def run_cell(setting: str, size: int, seed_index: int, config: BenchmarkConfig) -> dict:
    seed = cell_seed(config.master_seed, setting, size, seed_index)
    sim = scm_sim.simulate(setting, size, seed)
    out = {"setting": setting, "size": size, "seed_index": seed_index, "seed": seed, "estimates": {}}
    for name in config.estimators:
        if name == "cgnf":
            model, history = fit(two_wave_dag(), sim.observed, TrainConfig(**{"seed": seed, **config.train}))
            est = estimate_ate(model, n_mc=config.mc_samples, seed=[seed, 7])
            out["cgnf_training"] = {"best_epoch": history.best_epoch, "epochs_run": history.epochs_run,
                                    "test_nll": history.test_nll}
        else:
            est = baselines.ESTIMATORS[name](sim.observed)
        out["estimates"][name] = dict(zip(LAMBDAS, map(float, est)))
    return out


def _run_cell_args(args):
    return run_cell(*args)


def aggregate(cells: list[dict], config: BenchmarkConfig) -> list[dict]:
    rows = []
    for setting in config.settings:
        for size in config.sizes:
            group = sorted((c for c in cells if c["setting"] == setting and c["size"] == size),
                           key=lambda c: c["seed_index"])
            for name in config.estimators:
                for lam in LAMBDAS:
                    values = [c["estimates"][name][lam] for c in group]
                    mu = float(np.mean(values))
                    sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
                    truth = scm_sim.TRUE_ATE[lam]
                    rows.append({
                        "setting": setting, "size": size, "estimator": name, "lambda": lam,
                        "true": truth, "estimates": values, "mean": mu, "std": sd,
                        "bias": mu - truth,
                        "zero_in_mu_pm_sigma": bool(mu - sd <= 0.0 <= mu + sd),
                        "sign_correct": bool(np.sign(mu) == np.sign(truth)),
                    })
    return rows


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def report_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["setting", "size", "estimator", "lambda", "seed_index", "estimate", "mean", "std", "true"])
    for r in rows:
        for k, v in enumerate(r["estimates"]):
            writer.writerow([r["setting"], r["size"], r["estimator"], r["lambda"], k, repr(v),
                             repr(r["mean"]), repr(r["std"]), repr(r["true"])])
    return buf.getvalue()


def run_benchmark(config: BenchmarkConfig) -> dict:
    """Run every (setting, size, seed) cell and write ``report.json``/``report.csv``.

    Each finished cell is also written to ``cells/`` under the output
    directory so partial results survive an interrupted run.
    """
    tasks = [(s, n, k, config) for s in config.settings for n in config.sizes for k in range(config.seeds)]
    out_dir = Path(config.out) if config.out else None
    if out_dir is not None:
        (out_dir / "cells").mkdir(parents=True, exist_ok=True)
    cells = []

    def flush(cell):
        cells.append(cell)
        log.info("cell %s n=%d seed#%d done", cell["setting"], cell["size"], cell["seed_index"])
        if out_dir is not None:
            name = f"{cell['setting']}_{cell['size']}_{cell['seed_index']}.json"
            (out_dir / "cells" / name).write_text(canonical_json(cell))

    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            for cell in pool.map(_run_cell_args, tasks):
                flush(cell)
    else:
        for task in tasks:
            flush(run_cell(*task))
    cfg = asdict(config)
    cfg.pop("out")
    cfg.pop("jobs")
    report = {"config": cfg, "results": aggregate(cells, config)}
    if out_dir is not None:
        (out_dir / "report.json").write_text(canonical_json(report))
        (out_dir / "report.csv").write_text(report_csv(report["results"]))
    return report


# -- policy evaluation ----------------------------------------------------------

def confusion_matrix(true_idx, pred_idx, k: int = 4) -> np.ndarray:
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (np.asarray(true_idx), np.asarray(pred_idx)), 1)
    return m


def _arm_index(arms: np.ndarray) -> np.ndarray:
    return (2 * arms[:, 0] + arms[:, 1]).astype(int)


def policy_summary(true_arms: np.ndarray, pred_arms: np.ndarray) -> dict:
    cm = confusion_matrix(_arm_index(true_arms), _arm_index(pred_arms))
    total = int(cm.sum())
    return {"confusion": cm.tolist(), "accuracy": float(np.trace(cm) / total) if total else float("nan"),
            "n": total}


def run_policy_eval(model: FlowModel, observed: np.ndarray, noise: np.ndarray | None, setting) -> dict:
    """Confusion matrices of predicted vs. true optimal arms on the held-out splits.

    Rows index the true arm, columns the predicted arm, both in the order
    (0,0), (0,1), (1,0), (1,1).
    """
    if noise is None:
        raise MissingSidecar("policy evaluation needs the noise sidecar to compute true optimal arms")
    split = {k: model.metadata.get(f"{k}_idx") for k in ("val", "test")}
    if any(v is None for v in split.values()):
        raise ValueError("model file carries no validation/test split indices")
    if model.metadata.get("n_rows") not in (None, observed.shape[0]):
        raise ValueError("dataset row count does not match the data the model was trained on")
    out = {"arms": [list(a) for a in scm_sim.ARMS]}
    all_idx = np.array(split["val"] + split["test"], dtype=int)
    true = scm_sim.true_optimal_policy(noise[all_idx], setting)
    pred = counterfactual(model, observed[all_idx]).policy
    nv = len(split["val"])
    out["validation"] = policy_summary(true[:nv], pred[:nv])
    out["test"] = policy_summary(true[nv:], pred[nv:])
    out["combined"] = policy_summary(true, pred)
    return out


# -- surfaces -------------------------------------------------------------------

def parse_grid(spec: str) -> np.ndarray:
    """``"lo:hi:count"`` to an evenly spaced grid."""
    lo, hi, count = spec.split(":")
    count = int(count)
    if count < 1:
        raise ValueError("grid needs at least one point")
    return np.linspace(float(lo), float(hi), count)


def run_surface(model: FlowModel, grid1: np.ndarray, grid2: np.ndarray, arms, setting=None) -> str:
    """CSV text with columns ``z_c1,z_c2,a1,a2,y`` (plus ``y_oracle`` when a setting is given)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["z_c1", "z_c2", "a1", "a2", "y"] + (["y_oracle"] if setting is not None else [])
    writer.writerow(header)
    g1, g2 = np.meshgrid(grid1, grid2, indexing="ij")
    for a1, a2 in arms:
        y = potential_outcome_surface(model, grid1, grid2, (a1, a2))
        oracle = oracle_surface(grid1, grid2, (a1, a2), setting) if setting is not None else None
        for idx in np.ndindex(g1.shape):
            row = [repr(float(g1[idx])), repr(float(g2[idx])), a1, a2, repr(float(y[idx]))]
            if oracle is not None:
                row.append(repr(float(oracle[idx])))
            writer.writerow(row)
    return buf.getvalue()


def oracle_surface(grid1, grid2, arm, setting) -> np.ndarray:
    """True potential outcome with ``u_c1, u_c2`` on the grid and outcome noise 0."""
    g1, g2 = np.meshgrid(grid1, grid2, indexing="ij")
    noise = np.zeros((g1.size, 5))
    noise[:, 0] = g1.ravel()
    noise[:, 2] = g2.ravel()
    return scm_sim.true_potential_outcome(noise, arm[0], arm[1], setting).reshape(g1.shape)
