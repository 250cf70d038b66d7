"""Interventional sampling, ATE estimation and counterfactuals on a trained flow."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .baselines import Ate
from .dag import CausalDAG
from .dequant import DequantSpec, quantize
from .flow import FlowModel

DEFAULT_ARMS = ((0, 0), (0, 1), (1, 0), (1, 1))
DEFAULT_CONTRASTS = {"l10": ((1, 0), (0, 0)), "l01": ((0, 1), (0, 0)), "l11": ((1, 1), (1, 0))}


@dataclass(frozen=True)
class InterventionSpec:
    assignments: Mapping[str, float]

    def validate(self, dag: CausalDAG) -> None:
        for name, value in self.assignments.items():
            node = dag.nodes[dag.index(name)]
            if node.discrete and (value != int(value) or not 0 <= value < node.n_classes):
                raise ValueError(f"{value} is not a valid class label for {name}")

    @classmethod
    def parse(cls, text: str) -> "InterventionSpec":
        """Parse ``"A1=1,A2=0"``."""
        out = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            name, _, value = part.partition("=")
            if not value:
                raise ValueError(f"malformed assignment {part!r}")
            out[name.strip()] = float(value)
        return cls(out)

    @classmethod
    def arm(cls, a1, a2, treatments=("A1", "A2")) -> "InterventionSpec":
        return cls({treatments[0]: float(a1), treatments[1]: float(a2)})


def _spec(spec) -> InterventionSpec:
    if spec is None:
        return InterventionSpec({})
    if isinstance(spec, InterventionSpec):
        return spec
    return InterventionSpec(dict(spec))


def generate(model: FlowModel, z: np.ndarray, spec=None) -> np.ndarray:
    """Data-scale samples from base noise ``z``; discrete columns are quantized."""
    spec = _spec(spec)
    spec.validate(model.dag)
    x = model.destandardize(model.transform_inverse(z, spec.assignments))
    for node in model.dag.nodes:
        if node.name in spec.assignments:
            x[:, node.index] = spec.assignments[node.name]
        elif node.discrete:
            x[:, node.index] = quantize(x[:, node.index], DequantSpec(node.n_classes, model.sigma2))
    return x


def sample_interventional(model: FlowModel, spec=None, n_mc: int = 2000, seed=0) -> np.ndarray:
    z = np.random.default_rng(seed).standard_normal((n_mc, model.d))
    return generate(model, z, spec)


def arm_means(model: FlowModel, arms=DEFAULT_ARMS, n_mc: int = 2000, seed=0, target: str = "Y",
              treatments=("A1", "A2")) -> dict[tuple, float]:
    """Mean of ``target`` under each arm, reusing one set of base draws for all arms."""
    z = np.random.default_rng(seed).standard_normal((n_mc, model.d))
    t = model.dag.index(target)
    return {tuple(arm): float(generate(model, z, InterventionSpec.arm(*arm, treatments))[:, t].mean())
            for arm in arms}


def estimate_ate(model: FlowModel, contrasts=None, n_mc: int = 2000, seed=0, target: str = "Y",
                 treatments=("A1", "A2")):
    """Monte-Carlo contrasts of interventional means with common random numbers.

    With the default contrasts the result is an ``Ate(l10, l01, l11)``;
    custom ``{label: (arm, reference_arm)}`` mappings return a dict.
    """
    custom = contrasts is not None
    contrasts = contrasts or DEFAULT_CONTRASTS
    arms = sorted({tuple(a) for pair in contrasts.values() for a in pair})
    means = arm_means(model, arms, n_mc, seed, target, treatments)
    out = {k: means[tuple(a)] - means[tuple(b)] for k, (a, b) in contrasts.items()}
    return out if custom else Ate(out["l10"], out["l01"], out["l11"])


@dataclass
class CounterfactualResult:
    z: np.ndarray  # abducted base noise, (n, d)
    arms: tuple
    outcomes: np.ndarray  # (n, n_arms)
    policy: np.ndarray  # (n, 2) chosen arm per unit

    def outcome(self, arm) -> np.ndarray:
        return self.outcomes[:, self.arms.index(tuple(arm))]


def abduct(model: FlowModel, units) -> np.ndarray:
    """Base noise of fully observed data-scale units (discrete columns as labels)."""
    z, _ = model.transform_forward(model.standardize(np.atleast_2d(units)))
    return z


def counterfactual(model: FlowModel, units, arms: Sequence = DEFAULT_ARMS, target: str = "Y",
                   treatments=("A1", "A2")) -> CounterfactualResult:
    """Abduction, action and prediction for every unit and arm.

    The chosen policy is the arm with the largest predicted outcome; ties
    go to the first arm in ``arms`` (lexicographic for the default order).
    """
    arms = tuple(tuple(a) for a in arms)
    z = abduct(model, units)
    t = model.dag.index(target)
    outcomes = np.column_stack([
        model.destandardize(model.transform_inverse(z, InterventionSpec.arm(*a, treatments).assignments))[:, t]
        for a in arms
    ])
    policy = np.array(arms)[np.argmax(outcomes, axis=1)]
    return CounterfactualResult(z, arms, outcomes, policy)


def potential_outcome_surface(model: FlowModel, z_c1, z_c2, arm, noise_nodes=("C1", "C2"),
                              target: str = "Y", treatments=("A1", "A2")) -> np.ndarray:
    """``target`` on the grid ``z_c1 x z_c2`` with every other base coordinate at 0.

    Returns an array of shape ``(len(z_c1), len(z_c2))``.
    """
    g1, g2 = np.meshgrid(np.atleast_1d(z_c1), np.atleast_1d(z_c2), indexing="ij")
    z = np.zeros((g1.size, model.d))
    z[:, model.dag.index(noise_nodes[0])] = g1.ravel()
    z[:, model.dag.index(noise_nodes[1])] = g2.ravel()
    x = model.destandardize(model.transform_inverse(z, InterventionSpec.arm(*arm, treatments).assignments))
    return x[:, model.dag.index(target)].reshape(g1.shape)
