import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgnf.dag import CausalDAG
from cgnf.errors import StateSpaceTooLarge
from cgnf.gcomp_oracle import (DiscreteSCM, ate_oracle, arm_contrasts, binarized_two_wave, expectation,
                               interventional_distribution, k_wave_scm, kwave_gformula, random_scm,
                               sample_mutilated)


def chain_scm():
    dag = CausalDAG.from_edges([("X", 2), ("Y", 2), ("Z", 2)], [("X", "Y"), ("Y", "Z")])
    tables = {"X": np.array([0.3, 0.7]),
              "Y": np.array([[0.9, 0.1], [0.2, 0.8]]),
              "Z": np.array([[0.6, 0.4], [0.25, 0.75]])}
    return DiscreteSCM(dag, tables)


def test_chain_hand_arithmetic():
    scm = chain_scm()
    # P(Y=1) = 0.3*0.1 + 0.7*0.8 = 0.59; P(Z=1) = 0.41*0.4 + 0.59*0.75
    assert abs(interventional_distribution(scm, None, "Y")[1] - 0.59) < 1e-12
    assert abs(interventional_distribution(scm, None, "Z")[1] - (0.41 * 0.4 + 0.59 * 0.75)) < 1e-12
    # do(Y=1) cuts X out: P(Z=1 | do(Y=1)) = 0.75 and P(X) is unchanged
    assert abs(interventional_distribution(scm, {"Y": 1}, "Z")[1] - 0.75) < 1e-12
    assert abs(interventional_distribution(scm, {"Y": 1}, "X")[1] - 0.7) < 1e-12


def test_root_intervention_equals_conditional():
    scm = chain_scm()
    assert abs(expectation(scm, {"X": 0}, "Y") - 0.1) < 1e-12


def test_identical_arms_zero_and_contrasts():
    scm = k_wave_scm(2, seed=0)
    out = ate_oracle(scm, {"same": ({"A1": 1, "A2": 0}, {"A1": 1, "A2": 0})}, "Y")
    assert out["same"] == 0.0
    assert set(ate_oracle(scm, arm_contrasts(), "Y")) == {"l10", "l01", "l11"}


def test_table_validation():
    dag = CausalDAG.from_edges([("X", 2)])
    with pytest.raises(ValueError):
        DiscreteSCM(dag, {"X": np.array([0.5, 0.6])})
    with pytest.raises(ValueError):
        DiscreteSCM(dag, {"X": np.array([0.2, 0.3, 0.5])})


def test_state_space_guard():
    dag = CausalDAG.from_edges([(f"V{k}", 3) for k in range(16)])
    scm = random_scm(dag, seed=0)
    with pytest.raises(StateSpaceTooLarge):
        scm.joint()


@pytest.mark.parametrize("k", [2, 3])
def test_enumeration_equals_nested_gformula(k):
    scm = k_wave_scm(k, seed=k)
    for arms in [dict(zip([f"A{j}" for j in range(1, k + 1)], bits)) for bits in np.ndindex(*([2] * k))]:
        enum = interventional_distribution(scm, arms, "Y")
        nested = kwave_gformula(scm, arms, k)
        np.testing.assert_allclose(enum, nested, atol=1e-12)


def test_enumeration_matches_mutilated_sampling():
    scm = k_wave_scm(2, seed=5)
    spec = {"A1": 1, "A2": 0}
    p = interventional_distribution(scm, spec, "Y")[1]
    draws = sample_mutilated(scm, spec, 200_000, seed=6)
    assert np.all(draws[:, 1] == 1) and np.all(draws[:, 3] == 0)
    se = np.sqrt(p * (1 - p) / draws.shape[0])
    assert abs(draws[:, 4].mean() - p) < 3 * se


def test_binarized_fixture_tables():
    scm = binarized_two_wave(20_000, seed=0)
    assert scm.cards == [2] * 5
    assert abs(scm.joint().sum() - 1) < 1e-9


def test_save_load(tmp_path):
    scm = k_wave_scm(2, seed=1)
    scm.save(tmp_path / "s.json")
    again = DiscreteSCM.load(tmp_path / "s.json")
    np.testing.assert_array_equal(again.joint(), scm.joint())


@st.composite
def scm_and_spec(draw):
    d = draw(st.integers(1, 5))
    nodes = [(f"v{k}", draw(st.integers(2, 3))) for k in range(d)]
    edges = [(nodes[j][0], nodes[i][0]) for i in range(d) for j in range(i) if draw(st.booleans())]
    dag = CausalDAG.from_edges(nodes, edges)
    spec = {name: draw(st.integers(0, n - 1)) for name, n in nodes if draw(st.booleans())}
    return random_scm(dag, draw(st.integers(0, 10_000))), spec


@settings(max_examples=50, deadline=None)
@given(scm_and_spec())
def test_distributions_are_proper(case):
    scm, spec = case
    joint = scm.joint(spec)
    assert np.all(joint >= 0)
    assert abs(joint.sum() - 1) < 1e-9
    for node in scm.dag.nodes:
        dist = interventional_distribution(scm, spec, node.name)
        assert abs(dist.sum() - 1) < 1e-9
        if node.name in spec:
            assert dist[spec[node.name]] == pytest.approx(1.0, abs=1e-12)
