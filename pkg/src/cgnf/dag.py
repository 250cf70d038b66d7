"""Causal DAG container: node kinds, parent masks and topological order.

Adjacency uses the row-is-child convention: ``adjacency[i, j] == 1`` means
node ``j`` is a parent of node ``i``.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CycleDetected, DuplicateName, SelfLoop


@dataclass(frozen=True)
class NodeSpec:
    name: str
    n_classes: int | None = None  # None for continuous nodes
    index: int = 0

    def __post_init__(self):
        if self.n_classes is not None and self.n_classes < 2:
            raise ValueError(f"discrete node {self.name!r} needs at least 2 classes")

    @property
    def discrete(self) -> bool:
        return self.n_classes is not None

    @property
    def kind(self) -> str:
        return "discrete" if self.discrete else "continuous"


@dataclass(frozen=True, eq=False)
class CausalDAG:
    nodes: tuple[NodeSpec, ...]
    adjacency: np.ndarray = field(repr=False)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.int8)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, nodes: Sequence, edges: Iterable[tuple[str, str]] = (), validate: bool = True) -> "CausalDAG":
        """Build a DAG from node declarations and ``(parent, child)`` pairs.

        ``nodes`` items may be names (continuous), ``(name, n_classes)`` pairs,
        or ``NodeSpec`` instances. Declaration order is the canonical order.
        """
        specs = []
        for i, node in enumerate(nodes):
            if isinstance(node, NodeSpec):
                specs.append(NodeSpec(node.name, node.n_classes, i))
            elif isinstance(node, str):
                specs.append(NodeSpec(node, None, i))
            else:
                name, n_classes = node
                specs.append(NodeSpec(name, n_classes, i))
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DuplicateName(f"duplicate node names: {dupes}")
        pos = {n: i for i, n in enumerate(names)}
        adj = np.zeros((len(specs), len(specs)), dtype=np.int8)
        for parent, child in edges:
            if parent not in pos or child not in pos:
                raise KeyError(f"edge {parent}->{child} references an unknown node")
            adj[pos[child], pos[parent]] = 1
        dag = cls(tuple(specs), adj)
        if validate:
            dag.validate()
        return dag

    @property
    def d(self) -> int:
        return len(self.nodes)

    @property
    def names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def index(self, name: str) -> int:
        for node in self.nodes:
            if node.name == name:
                return node.index
        raise KeyError(name)

    def parents(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[i])]

    def children(self, i: int) -> list[int]:
        return [int(j) for j in np.flatnonzero(self.adjacency[:, i])]

    def edges(self) -> list[tuple[str, str]]:
        names = self.names
        return [(names[j], names[i]) for i, j in zip(*np.nonzero(self.adjacency))]

    def validate(self) -> None:
        """Raise if names repeat, a node is its own parent, or the graph has a cycle."""
        names = self.names
        if len(set(names)) != len(names):
            raise DuplicateName(f"duplicate node names in {names}")
        adj = self.adjacency
        if adj.shape != (self.d, self.d):
            raise ValueError(f"adjacency shape {adj.shape} does not match {self.d} nodes")
        loops = np.flatnonzero(np.diag(adj))
        if loops.size:
            raise SelfLoop(f"self loop on {names[loops[0]]}")
        cycle = self._find_cycle()
        if cycle:
            raise CycleDetected([names[i] for i in cycle])

    def _find_cycle(self) -> list[int]:
        white, grey, black = 0, 1, 2
        colour = [white] * self.d
        stack_path: list[int] = []

        def visit(u: int) -> list[int]:
            colour[u] = grey
            stack_path.append(u)
            for v in self.children(u):
                if colour[v] == grey:
                    return stack_path[stack_path.index(v):] + [v]
                if colour[v] == white:
                    found = visit(v)
                    if found:
                        return found
            stack_path.pop()
            colour[u] = black
            return []

        for u in range(self.d):
            if colour[u] == white:
                found = visit(u)
                if found:
                    return found
        return []

    def topological_order(self) -> list[int]:
        """Kahn's algorithm, always releasing the smallest ready index first."""
        indegree = self.adjacency.sum(axis=1).astype(int).tolist()
        ready = [i for i in range(self.d) if indegree[i] == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            u = heapq.heappop(ready)
            order.append(u)
            for v in self.children(u):
                indegree[v] -= 1
                if indegree[v] == 0:
                    heapq.heappush(ready, v)
        if len(order) != self.d:
            self.validate()
        return order

    def parent_mask(self, i: int) -> np.ndarray:
        if not 0 <= i < self.d:
            raise IndexError(f"node index {i} out of range for {self.d} nodes")
        return self.adjacency[i].astype(float)

    def masks(self) -> np.ndarray:
        """All parent masks stacked, shape ``(d, d)``."""
        return self.adjacency.astype(float)

    def to_dict(self) -> dict:
        nodes = []
        for n in self.nodes:
            entry = {"name": n.name, "kind": n.kind}
            if n.discrete:
                entry["classes"] = n.n_classes
            nodes.append(entry)
        return {"nodes": nodes, "edges": [list(e) for e in self.edges()]}

    @classmethod
    def from_dict(cls, obj: dict) -> "CausalDAG":
        nodes = []
        for entry in obj["nodes"]:
            kind = entry.get("kind", "continuous")
            if kind == "discrete":
                nodes.append((entry["name"], int(entry["classes"])))
            elif kind == "continuous":
                nodes.append((entry["name"], None))
            else:
                raise ValueError(f"unknown node kind {kind!r}")
        return cls.from_edges(nodes, [tuple(e) for e in obj.get("edges", [])])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "CausalDAG":
        return cls.from_dict(json.loads(Path(path).read_text()))


def two_wave_dag() -> CausalDAG:
    """The 2-wave time-varying treatment model C1 -> A1 -> C2 -> A2 -> Y."""
    return CausalDAG.from_edges(
        ["C1", ("A1", 2), "C2", ("A2", 2), "Y"],
        [
            ("C1", "A1"), ("C1", "C2"), ("C1", "Y"),
            ("A1", "C2"), ("A1", "A2"), ("A1", "Y"),
            ("C2", "A2"), ("C2", "Y"),
            ("A2", "Y"),
        ],
    )


def k_wave_dag(k: int, n_classes: int | None = None) -> CausalDAG:
    """K-wave model: C_j <- (C_{j-1}, A_{j-1}), A_j <- (C_j, A_{j-1}), Y <- everything.

    With ``n_classes`` set, covariates and outcome are discrete too.
    """
    nodes, edges = [], []
    for j in range(1, k + 1):
        nodes += [(f"C{j}", n_classes), (f"A{j}", 2)]
        edges.append((f"C{j}", f"A{j}"))
        if j > 1:
            edges += [(f"C{j-1}", f"C{j}"), (f"A{j-1}", f"C{j}"), (f"A{j-1}", f"A{j}")]
        edges += [(f"C{j}", "Y"), (f"A{j}", "Y")]
    nodes.append(("Y", n_classes))
    return CausalDAG.from_edges(nodes, edges)
