from __future__ import annotations

import io

import numpy as np
import pytest

import netiqc as nq
from netiqc.errors import AlgebraicLoopError, ModelError, SimulationError
from netiqc.sim import closed_loop_matrix, default_dt, zoh

from helpers import two_agent_spec


def two_agent_parts(k=0.5):
    problem = nq.build_problem(two_agent_spec(k, 0.2))
    return problem.structure, problem.agents


def pulse(steps, size, amplitude=1.0):
    d = np.zeros((steps, size))
    d[0, :] = amplitude
    return d


def test_zoh_matches_scalar_exponential():
    ad, bd = zoh(np.array([[-2.0]]), np.array([[1.0]]), 0.1)
    assert ad[0, 0] == pytest.approx(np.exp(-0.2), abs=1e-14)
    assert bd[0, 0] == pytest.approx((1 - np.exp(-0.2)) / 2.0, abs=1e-14)


def test_ideal_links_impulse_decays():
    structure, agents = two_agent_parts(0.5)
    dt = default_dt(agents)
    steps = int(round(60.0 / dt))
    trace = nq.simulate(structure, agents, d_v=pulse(steps, 2), dt=dt, horizon=60.0)
    assert not trace.diverged
    assert np.linalg.norm(trace.v[-1]) < 1e-10
    assert np.isfinite(trace.energy())


def test_unstable_nominal_growth_rate():
    structure, agents = two_agent_parts(1.5)
    dt = default_dt(agents)
    steps = int(round(60.0 / dt))
    trace = nq.simulate(
        structure, agents, d_v=pulse(steps, 2), dt=dt, horizon=60.0, norm_limit=1e8
    )
    assert trace.diverged
    tail = trace.state_norms[200:]
    tt = trace.t[200:len(trace.state_norms)]
    rate = np.polyfit(tt, np.log(tail), 1)[0]
    assert rate == pytest.approx(0.5, rel=0.05)


def test_zero_disturbance_zero_trace():
    structure, agents = two_agent_parts(0.5)
    trace = nq.simulate(structure, agents, dt=0.02, horizon=5.0)
    assert not trace.v.any() and not trace.w.any() and not trace.y.any()


def test_nonfinite_without_limit_raises():
    structure, agents = two_agent_parts(1.5)
    steps = int(round(3000.0 / 0.05))
    with pytest.raises(SimulationError):
        nq.simulate(structure, agents, d_v=pulse(steps, 2), dt=0.05, horizon=3000.0)


def test_disturbance_shape_checked():
    structure, agents = two_agent_parts(0.5)
    with pytest.raises(ModelError, match="d_v"):
        nq.simulate(structure, agents, d_v=np.zeros((7, 3)), dt=0.02, horizon=5.0)


def test_sector_links_require_strictly_proper_agents():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    agents = tuple(nq.AgentModel.static([0.3]) for _ in range(2))
    sample = nq.UncertaintySample(links=(nq.SectorLink(0.1), nq.SectorLink(0.1)))
    with pytest.raises(SimulationError, match="strictly proper"):
        nq.simulate(s, agents, sample, dt=0.02, horizon=1.0)


def test_static_algebraic_loop_detected():
    g = nq.build_graph(2, [[1, 2]])
    s = nq.build_structure(g)
    agents = tuple(nq.AgentModel.static([1.0]) for _ in range(2))
    with pytest.raises(AlgebraicLoopError):
        nq.simulate(s, agents, dt=0.02, horizon=1.0)


def test_linear_and_nonlinear_paths_agree_for_tiny_sector():
    # a sector link with vanishing slope behaves like the ideal link
    structure, agents = two_agent_parts(0.5)
    steps = int(round(30.0 / 0.01))
    dv = pulse(steps, 2, 0.5)
    ideal = nq.simulate(structure, agents, d_v=dv, dt=0.01, horizon=30.0)
    sample = nq.UncertaintySample(links=(nq.SectorLink(0.0), nq.ConstantLink(0.0)))
    near = nq.simulate(structure, agents, sample, d_v=dv, dt=0.01, horizon=30.0)
    assert np.allclose(ideal.v, near.v, atol=1e-10)
    assert np.allclose(ideal.y, near.y, atol=1e-10)


def test_simulated_verdict_matches_eigenvalue_verdict():
    rng = np.random.default_rng(12)
    problem = nq.build_problem(two_agent_spec(0.9, 0.3))
    structure, agents = problem.structure, problem.agents
    from netiqc.oracle import per_coordinate_radii, random_sample

    radii = per_coordinate_radii(problem)
    checked = 0
    tries = 0
    while checked < 100 and tries < 500:
        tries += 1
        sample = random_sample(rng, radii, allow_sector=False)
        acl = closed_loop_matrix(structure, agents, sample)
        worst = float(np.max(np.linalg.eigvals(acl).real))
        if -0.01 < worst < 0.1:
            continue  # too close to marginal for a finite-horizon verdict
        dt = default_dt(agents, sample)
        steps = int(round(200.0 / dt))
        trace = nq.simulate(
            structure, agents, sample, d_v=pulse(steps, 2),
            dt=dt, horizon=200.0, norm_limit=1e6 * np.sqrt(2.0),
        )
        assert trace.diverged == (worst > 0)
        checked += 1
    assert checked == 100


def test_estimate_gain_matches_dc_analysis():
    # low-frequency drive of the ideal two-agent loop: the energy ratio of
    # (v, w) to the injected signal approaches 5/3 (hand computation of the
    # closed-loop response at zero frequency)
    structure, agents = two_agent_parts(0.5)
    dt = 0.01
    horizon = 400.0
    steps = int(round(horizon / dt))
    t = np.arange(steps) * dt
    d_v = np.zeros((steps, 2))
    d_v[:, 0] = np.sin(0.01 * t)
    trace = nq.simulate(structure, agents, d_v=d_v, dt=dt, horizon=horizon)
    gain = nq.estimate_gain(trace, d_v)
    assert gain == pytest.approx(5.0 / 3.0, rel=0.02)


def test_estimate_gain_rejects_zero_input():
    structure, agents = two_agent_parts(0.5)
    trace = nq.simulate(structure, agents, dt=0.02, horizon=2.0)
    with pytest.raises(ModelError, match="nonzero"):
        nq.estimate_gain(trace, np.zeros((len(trace.t), 2)))


def test_estimate_gain_below_frequency_sweep_bound():
    structure, agents = two_agent_parts(0.5)
    dt = 0.01
    horizon = 300.0
    steps = int(round(horizon / dt))
    rng = np.random.default_rng(0)
    t = np.arange(steps) * dt
    d_v = np.zeros((steps, 2))
    for _ in range(4):
        d_v[:, int(rng.integers(2))] += np.sin(rng.uniform(0.01, 2.0) * t + rng.uniform(0, 7))
    trace = nq.simulate(structure, agents, d_v=d_v, dt=dt, horizon=horizon)
    gain = nq.estimate_gain(trace, d_v)

    # frequency-sweep upper bound on the map d_v -> (v, w)
    w = nq.FrequencyGrid(points=200).omegas()
    hval, tmat, _ = nq.assemble_block_diagonal(agents, w)
    loop = np.eye(2)[None] - structure.routing.astype(float)[None] @ tmat[None] @ hval
    sens = np.linalg.inv(loop)
    stacked = np.concatenate([sens, tmat[None] @ hval @ sens], axis=1)
    bound = float(np.max(np.linalg.svd(stacked, compute_uv=False)))
    assert gain <= bound * 1.02


def test_energy_bookkeeping_for_stable_case():
    structure, agents = two_agent_parts(0.5)
    dt = 0.01
    steps = int(round(100.0 / dt))
    d_v = pulse(steps, 2)
    trace = nq.simulate(structure, agents, d_v=d_v, dt=dt, horizon=100.0)
    out_norm = float(np.sqrt(np.sum(trace.v**2 + trace.w**2) * dt))
    in_norm = float(np.sqrt(np.sum(d_v**2) * dt))
    assert out_norm <= nq.estimate_gain(trace, d_v) * in_norm * (1 + 1e-9)


def test_write_trace_roundtrip():
    structure, agents = two_agent_parts(0.5)
    steps = int(round(5.0 / 0.02))
    trace = nq.simulate(structure, agents, d_v=pulse(steps, 2), dt=0.02, horizon=5.0)
    buf = io.StringIO()
    nq.write_trace(trace, buf)
    text = buf.getvalue()
    assert text.startswith("# t v1 v2 w1 w2")
    data = np.loadtxt(io.StringIO(text))
    assert data.shape == (len(trace.t), 5)
    assert np.allclose(data[:, 0], trace.t)
    assert np.allclose(data[:, 1:3], trace.v)
    assert np.allclose(data[:, 3:5], trace.w)


def test_simulate_network_from_spec():
    steps = int(round(5.0 / 0.02))
    trace = nq.simulate_network(
        two_agent_spec(0.5, 0.2), d_v=pulse(steps, 2), dt=0.02, horizon=5.0
    )
    assert trace.v.shape == (steps, 2)
    assert not trace.diverged


def test_default_dt_uses_fastest_pole():
    agents = (nq.AgentModel.first_order(0.5, 4.0),
              nq.AgentModel.first_order(0.5, 1.0))
    assert default_dt(agents) == pytest.approx(1.0 / 200.0)
    sample = nq.UncertaintySample(
        links=(nq.FirstOrderLink(amp=1.0, pole=10.0), nq.ConstantLink(0.0))
    )
    assert default_dt(agents, sample) == pytest.approx(1.0 / 500.0)
