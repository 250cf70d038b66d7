import math

import numpy as np
import pytest

from cgnf import scm_sim
from cgnf.dag import CausalDAG, two_wave_dag
from cgnf.flow import FlowModel, TrainConfig, fit

ACCEPTANCE_LINES: list[str] = []

# linear Gaussian chain X1 -> X2 -> X3
CHAIN_COEF = (0.8, -0.5)
CHAIN_NOISE_SD = (1.0, 0.6, 0.5)


def chain_dag() -> CausalDAG:
    return CausalDAG.from_edges(["X1", "X2", "X3"], [("X1", "X2"), ("X2", "X3")])


def chain_data(n: int, seed: int) -> np.ndarray:
    e = np.random.default_rng(seed).normal(size=(n, 3)) * CHAIN_NOISE_SD
    x1 = e[:, 0]
    x2 = CHAIN_COEF[0] * x1 + e[:, 1]
    x3 = CHAIN_COEF[1] * x2 + e[:, 2]
    return np.column_stack([x1, x2, x3])


def chain_entropy() -> float:
    # unit Jacobian from noise to data, so H(X) = sum of noise entropies
    return sum(0.5 * math.log(2 * math.pi * math.e * s * s) for s in CHAIN_NOISE_SD)


def random_model(dag: CausalDAG, seed: int = 0, **kwargs) -> FlowModel:
    model = FlowModel(dag, rng=np.random.default_rng(seed), **kwargs)
    rng = np.random.default_rng(seed + 1000)
    for p in model.params:
        if p.shape[-2] == 1:
            p += rng.normal(scale=0.3, size=p.shape)
    return model


@pytest.fixture(scope="session")
def sim_a():
    return scm_sim.simulate("a", 2000, seed=0)


@pytest.fixture(scope="session")
def model_a(sim_a):
    model, _ = fit(two_wave_dag(), sim_a.observed, TrainConfig(seed=0))
    return model


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
