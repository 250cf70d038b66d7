"""Exact g-computation on small all-discrete SCMs by exhaustive enumeration."""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .dag import CausalDAG, k_wave_dag, two_wave_dag
from .errors import StateSpaceTooLarge

MAX_STATES = 10**7


@dataclass
class DiscreteSCM:
    """A DAG of discrete nodes with one conditional table per node.

    ``tables[name]`` has shape ``(*parent_cards, n_classes)`` with parents in
    ascending canonical index order; the last axis sums to one.
    """

    dag: CausalDAG
    tables: dict[str, np.ndarray]

    def __post_init__(self):
        for node in self.dag.nodes:
            if not node.discrete:
                raise ValueError(f"node {node.name} is not discrete")
            table = np.asarray(self.tables[node.name], dtype=float)
            expected = tuple(self.cards[j] for j in self.dag.parents(node.index)) + (node.n_classes,)
            if table.shape != expected:
                raise ValueError(f"table for {node.name} has shape {table.shape}, expected {expected}")
            if np.any(table < 0) or np.max(np.abs(table.sum(axis=-1) - 1)) > 1e-12:
                raise ValueError(f"rows of the table for {node.name} must sum to 1")
            self.tables[node.name] = table

    @property
    def cards(self) -> list[int]:
        return [n.n_classes for n in self.dag.nodes]

    def n_states(self) -> int:
        return int(np.prod(self.cards, dtype=np.int64))

    def _factor(self, i: int) -> np.ndarray:
        """Table of node ``i`` broadcast over the full joint axes."""
        parents = self.dag.parents(i)
        axes = parents + [i]
        table = self.tables[self.dag.nodes[i].name]
        shape = [1] * self.dag.d
        for ax, size in zip(axes, table.shape):
            shape[ax] = size
        # parents are ascending, but i may precede some of them
        order = np.argsort(axes)
        return np.transpose(table, order).reshape(shape)

    def joint(self, spec: Mapping[str, float] | None = None) -> np.ndarray:
        """Truncated factorization: intervened factors replaced by indicators."""
        if self.n_states() > MAX_STATES:
            raise StateSpaceTooLarge(f"{self.n_states()} joint states exceed {MAX_STATES}")
        spec = dict(spec or {})
        for name in spec:
            self.dag.index(name)
        out = np.ones(self.cards)
        for i in self.dag.topological_order():
            node = self.dag.nodes[i]
            if node.name in spec:
                value = int(spec[node.name])
                if not 0 <= value < node.n_classes:
                    raise ValueError(f"{value} is not a class of {node.name}")
                shape = [1] * self.dag.d
                shape[i] = node.n_classes
                out = out * (np.arange(node.n_classes) == value).reshape(shape)
            else:
                out = out * self._factor(i)
        return out

    def to_dict(self) -> dict:
        return {"dag": self.dag.to_dict(),
                "tables": {k: v.reshape(-1).tolist() for k, v in self.tables.items()}}

    @classmethod
    def from_dict(cls, obj: dict) -> "DiscreteSCM":
        dag = CausalDAG.from_dict(obj["dag"])
        cards = [n.n_classes for n in dag.nodes]
        tables = {}
        for node in dag.nodes:
            shape = tuple(cards[j] for j in dag.parents(node.index)) + (node.n_classes,)
            tables[node.name] = np.array(obj["tables"][node.name], dtype=float).reshape(shape)
        return cls(dag, tables)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "DiscreteSCM":
        return cls.from_dict(json.loads(Path(path).read_text()))


def interventional_distribution(scm: DiscreteSCM, spec: Mapping[str, float] | None, target: str) -> np.ndarray:
    """``P(target | do(spec))`` by summing the truncated factorization."""
    t = scm.dag.index(target)
    joint = scm.joint(getattr(spec, "assignments", spec))
    axes = tuple(k for k in range(scm.dag.d) if k != t)
    return joint.sum(axis=axes)


def expectation(scm: DiscreteSCM, spec, target: str) -> float:
    dist = interventional_distribution(scm, spec, target)
    return float(dist @ np.arange(dist.size))


def ate_oracle(scm: DiscreteSCM, contrasts: Mapping[str, tuple[Mapping, Mapping]], target: str) -> dict[str, float]:
    """``E[target | do(treat)] - E[target | do(ref)]`` for each named contrast."""
    return {k: expectation(scm, treat, target) - expectation(scm, ref, target)
            for k, (treat, ref) in contrasts.items()}


def arm_contrasts(treatments=("A1", "A2")) -> dict:
    def arm(a1, a2):
        return {treatments[0]: a1, treatments[1]: a2}
    return {"l10": (arm(1, 0), arm(0, 0)), "l01": (arm(0, 1), arm(0, 0)), "l11": (arm(1, 1), arm(1, 0))}


def kwave_gformula(scm: DiscreteSCM, arms: Mapping[str, int], k: int, target: str = "Y") -> np.ndarray:
    """Nested-sum g-formula for the K-wave model, looping over covariate histories.

    Sums ``P(Y | c, a) * prod_j P(C_j | C_{j-1}, a_{j-1}) * P(C_1)`` over all
    ``(c_1, ..., c_K)`` with treatments fixed at ``arms``. Requires node
    names ``C1..CK``, ``A1..AK`` and the K-wave parent structure.
    """
    dag = scm.dag
    cov = [dag.index(f"C{j}") for j in range(1, k + 1)]
    trt = [dag.index(f"A{j}") for j in range(1, k + 1)]
    a = [int(arms[f"A{j}"]) for j in range(1, k + 1)]
    y = dag.index(target)

    def lookup(i: int, values: dict[int, int]) -> np.ndarray:
        idx = tuple(values[p] for p in dag.parents(i))
        return scm.tables[dag.nodes[i].name][idx]

    result = np.zeros(dag.nodes[y].n_classes)
    for history in itertools.product(*(range(dag.nodes[i].n_classes) for i in cov)):
        values = dict(zip(cov, history)) | dict(zip(trt, a))
        weight = 1.0
        for i, c in zip(cov, history):
            weight *= lookup(i, values)[c]
        result += weight * lookup(y, values)
    return result


def sample_mutilated(scm: DiscreteSCM, spec: Mapping[str, float] | None, n: int, seed) -> np.ndarray:
    """Ancestral sampling with intervened nodes clamped, shape ``(n, d)``."""
    rng = np.random.default_rng(seed)
    spec = dict(getattr(spec, "assignments", spec) or {})
    out = np.zeros((n, scm.dag.d), dtype=np.int64)
    for i in scm.dag.topological_order():
        node = scm.dag.nodes[i]
        if node.name in spec:
            out[:, i] = int(spec[node.name])
            continue
        parents = scm.dag.parents(i)
        probs = scm.tables[node.name][tuple(out[:, p] for p in parents)] if parents else \
            np.broadcast_to(scm.tables[node.name], (n, node.n_classes))
        cdf = np.cumsum(probs, axis=1)
        u = rng.uniform(size=(n, 1))
        out[:, i] = np.minimum((u > cdf).sum(axis=1), node.n_classes - 1)
    return out


def fit_tables(dag: CausalDAG, data: np.ndarray) -> DiscreteSCM:
    """Conditional tables from frequency counts; unseen parent rows become uniform."""
    data = np.asarray(data, dtype=np.int64)
    cards = [n.n_classes for n in dag.nodes]
    tables = {}
    for node in dag.nodes:
        parents = dag.parents(node.index)
        counts = np.zeros(tuple(cards[p] for p in parents) + (node.n_classes,))
        np.add.at(counts, tuple(data[:, p] for p in parents) + (data[:, node.index],), 1.0)
        totals = counts.sum(axis=-1, keepdims=True)
        tables[node.name] = np.where(totals > 0, counts / np.where(totals > 0, totals, 1), 1.0 / node.n_classes)
    return DiscreteSCM(dag, tables)


def binarized_two_wave(n: int = 100_000, seed: int = 0, setting="a") -> DiscreteSCM:
    """2-wave SCM with C1, C2, Y thresholded at 0, tables estimated from simulated data."""
    from .scm_sim import simulate

    obs = simulate(setting, n, seed).observed
    binary = obs.copy()
    for k in (0, 2, 4):
        binary[:, k] = obs[:, k] > 0
    dag = CausalDAG.from_edges([(n.name, 2) for n in two_wave_dag().nodes], two_wave_dag().edges())
    return fit_tables(dag, binary.astype(np.int64))


def random_scm(dag: CausalDAG, seed) -> DiscreteSCM:
    """Dirichlet(1) tables for every node; handy for property tests."""
    rng = np.random.default_rng(seed)
    cards = [n.n_classes for n in dag.nodes]
    tables = {}
    for node in dag.nodes:
        shape = tuple(cards[p] for p in dag.parents(node.index))
        t = rng.dirichlet(np.ones(node.n_classes), size=shape or None)
        tables[node.name] = np.asarray(t).reshape(shape + (node.n_classes,))
    return DiscreteSCM(dag, tables)


def k_wave_scm(k: int, seed, n_classes: int = 2) -> DiscreteSCM:
    return random_scm(k_wave_dag(k, n_classes), seed)
