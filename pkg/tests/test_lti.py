from __future__ import annotations

import numpy as np
import pytest

import netiqc as nq
from netiqc.errors import AlgebraicLoopError, ModelError
from netiqc.lti import FrequencyGrid, coprime_min_singular

from helpers import random_simple_graph, random_stable_agents


def first_order_pair(k, n=2):
    return tuple(nq.AgentModel.first_order(k, 1.0) for _ in range(n))


def test_first_order_response_values():
    ag = nq.AgentModel.first_order(1.0, 1.0)
    assert nq.agent_response(ag, [0.0])[0, 0] == pytest.approx(1.0)
    val = nq.agent_response(ag, [1.0])[0, 0]
    assert val == pytest.approx(0.5 - 0.5j, abs=1e-12)
    assert abs(val) == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-12)


def test_static_agent_response_is_constant():
    ag = nq.AgentModel.static([0.3])
    for w in (0.0, 1.0, 37.5, 1e4):
        assert nq.agent_response(ag, [w])[0, 0] == pytest.approx(0.3)


def test_freq_response_agent_wrapper():
    ag = nq.AgentModel.first_order(2.0, 4.0, n_inputs=3)
    resp = nq.freq_response_agent(ag, 0.0)
    assert resp.omega == 0.0
    assert resp.value.shape == (1, 3)
    assert np.allclose(resp.value, 0.5)


def test_conjugate_symmetry_sampled():
    ag = nq.AgentModel(
        a=[[-1.0, 2.0], [-2.0, -3.0]], b=[[1.0], [0.5]], c=[[1.0, -1.0]], d=[[0.2]]
    )
    for w in (0.1, 1.0, 12.0):
        pos = nq.agent_response(ag, [w])[0, 0]
        neg = nq.agent_response(ag, [-w])[0, 0]
        assert neg == pytest.approx(np.conj(pos), abs=1e-12)


def test_agent_validation():
    with pytest.raises(ModelError, match="not stable"):
        nq.AgentModel(a=[[0.5]], b=[[1.0]], c=[[1.0]], d=[[0.0]])
    with pytest.raises(ModelError, match="square"):
        nq.AgentModel(a=[[1.0, 0.0]], b=[[1.0]], c=[[1.0]], d=[[0.0]])
    with pytest.raises(ModelError):
        nq.AgentModel.first_order(1.0, -1.0)
    with pytest.raises(ModelError, match="feedthrough"):
        nq.AgentModel(a=[[-1.0]], b=[[1.0, 0.0]], c=[[1.0]], d=[[0.0]])


def test_assemble_block_diagonal_two_agents():
    agents = first_order_pair(0.7)
    hval, tmat, fval = nq.assemble_block_diagonal(agents, [0.0])
    assert np.allclose(hval[0], [[0.7, 0.0], [0.0, 0.7]])
    assert np.allclose(tmat, np.eye(2))
    assert np.allclose(fval[0], 0.3 * np.eye(2))


def test_assemble_rolloff_limit():
    agents = first_order_pair(0.7)
    hval, _, fval = nq.assemble_block_diagonal(agents, [1e7])
    assert np.max(np.abs(hval)) < 1e-6
    assert np.allclose(fval[0], np.eye(2), atol=1e-6)


def test_assemble_hub_sparsity():
    g = nq.build_graph(4, [[1, 2], [1, 3], [1, 4], [3, 4]])
    agents = tuple(nq.AgentModel.first_order(0.2, 1.0, g.degree(v)) for v in range(1, 5))
    hval, tmat, _ = nq.assemble_block_diagonal(agents, [0.3])
    assert hval.shape == (1, 4, 8)
    off = 0
    for i in range(4):
        row = hval[0, i]
        mi = g.degree(i + 1)
        assert np.all(row[off:off + mi] != 0)
        mask = np.ones(8, dtype=bool)
        mask[off:off + mi] = False
        assert np.all(row[mask] == 0)
        assert np.all(tmat[off:off + mi, i] == 1.0)
        off += mi


def test_coprime_factor_values():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    nval, mval = nq.coprime_factors(s, first_order_pair(0.5), [0.0])
    assert np.allclose(mval[0], [[-0.5, 1.0], [1.0, -0.5]])
    assert np.allclose(nval[0], [[0.5, 0.0], [0.0, 0.5]])


def test_coprime_factors_static_zero_agents():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    agents = tuple(nq.AgentModel.static([0.0]) for _ in range(2))
    nval, mval = nq.coprime_factors(s, agents, [0.0, 3.0])
    assert np.allclose(nval, 0.0)
    assert np.allclose(mval[0], s.routing)
    assert np.allclose(mval[1], s.routing)


def test_denominator_nonsingular_when_nominal_stable():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    agents = first_order_pair(0.5)
    assert nq.nominal_stability_check(nq.build_nominal_loop(s, agents)).stable
    smin, _ = coprime_min_singular(s, agents, FrequencyGrid().omegas())
    assert smin > 0.0


def test_denominator_zero_crossing_matches_marginal_case():
    # gain exactly 1: the ideal loop has an eigenvalue at 0 and the
    # denominator is singular at zero frequency, consistently
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    agents = first_order_pair(1.0)
    res = nq.nominal_stability_check(nq.build_nominal_loop(s, agents))
    assert not res.stable
    smin, at = coprime_min_singular(s, agents, np.array([0.0, 0.5, 1.0]))
    assert smin == pytest.approx(0.0, abs=1e-12)
    assert at == 0.0


def test_nominal_stability_anchor_values():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    res = nq.nominal_stability_check(nq.build_nominal_loop(s, first_order_pair(0.5)))
    assert res.stable
    assert sorted(res.eigenvalues.real) == pytest.approx([-1.5, -0.5], abs=1e-10)

    res = nq.nominal_stability_check(nq.build_nominal_loop(s, first_order_pair(1.5)))
    assert not res.stable
    assert res.offending.real == pytest.approx(0.5, abs=1e-10)


def test_nominal_static_zero_agents_stable():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    agents = tuple(nq.AgentModel.static([0.0]) for _ in range(2))
    res = nq.nominal_stability_check(nq.build_nominal_loop(s, agents))
    assert res.stable


def test_algebraic_loop_detection():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    agents = tuple(nq.AgentModel.static([1.0]) for _ in range(2))
    with pytest.raises(AlgebraicLoopError):
        nq.build_nominal_loop(s, agents)


def test_nominal_random_instances_match_denominator_oracle():
    rng = np.random.default_rng(7)
    omegas = FrequencyGrid(points=60).omegas()
    for _ in range(20):
        g = random_simple_graph(rng, n_max=5)
        s = nq.build_structure(g)
        agents = random_stable_agents(rng, g)
        res = nq.nominal_stability_check(nq.build_nominal_loop(s, agents))
        if res.stable:
            smin, _ = coprime_min_singular(s, agents, omegas)
            assert smin > 0.0


def test_frequency_grid_contents():
    grid = FrequencyGrid()
    w = grid.omegas()
    assert len(w) == 401
    assert w[0] == 0.0
    assert w[1] == pytest.approx(1e-3)
    assert w[-1] == pytest.approx(1e3)
    assert np.all(np.diff(w) > 0)

    w2 = FrequencyGrid(extra=(0.5, 2.0), include_zero=False, points=10).omegas()
    assert 0.0 not in w2
    assert 0.5 in w2 and 2.0 in w2


def test_frequency_grid_validation():
    with pytest.raises(ModelError):
        FrequencyGrid(omega_min=0.0).omegas()
    with pytest.raises(ModelError):
        FrequencyGrid(omega_min=10.0, omega_max=1.0).omegas()
    with pytest.raises(ModelError):
        FrequencyGrid(points=1).omegas()
