from __future__ import annotations

import numpy as np
import pytest

import netiqc as nq
from netiqc.errors import ModelError
from netiqc.oracle import (
    corner_sample,
    per_coordinate_radii,
    random_sample,
    sample_in_class,
)

from helpers import fixture, two_agent_spec


def two_agent_problem(k=0.5, r=0.2):
    return nq.build_problem(two_agent_spec(k, r))


def test_direct_check_two_agent_anchor():
    # sigma_max of the closed loop peaks at zero frequency where it equals
    # k/(1-k) = 1, so the margin is 1 - r^2 = 0.96
    p = two_agent_problem(0.5, 0.2)
    res = nq.direct_iqc_check(p.structure, p.agents, p.multipliers, p.grid.omegas())
    assert res.epsilon == pytest.approx(0.96, abs=1e-9)
    assert res.worst_omega == 0.0
    assert res.min_singular > 0


def test_direct_check_ideal_links_always_certifies_stable_nominal():
    p = two_agent_problem(0.5, 0.0)
    res = nq.direct_iqc_check(p.structure, p.agents, p.multipliers, p.grid.omegas())
    assert res.epsilon == pytest.approx(1.0, abs=1e-12)


def test_direct_check_exact_boundary():
    k = 0.9
    r = 1.0 / k - 1.0  # k^2 (1+r)^2 = 1 exactly
    p = two_agent_problem(k, r)
    res = nq.direct_iqc_check(p.structure, p.agents, p.multipliers, p.grid.omegas())
    assert res.epsilon == pytest.approx(0.0, abs=1e-9)


def test_direct_check_sign_agrees_with_global_certificate():
    for k, r in [(0.5, 0.2), (0.5, 1.5), (0.3, 0.8)]:
        p = two_agent_problem(k, r)
        w = nq.FrequencyGrid(points=60).omegas()
        res = nq.direct_iqc_check(p.structure, p.agents, p.multipliers, w)
        form = nq.assemble_certificate_form(p.agents, p.multipliers, p.structure, w)
        glob = nq.global_certificate(form, p.structure)
        if abs(res.epsilon) > 1e-9 and abs(glob.epsilon) > 1e-9:
            assert np.sign(res.epsilon) == np.sign(glob.epsilon)


def test_per_coordinate_radii_layout():
    p = nq.build_problem(nq.load_network_spec(fixture("pair4.yaml")))
    radii = per_coordinate_radii(p)
    assert radii.tolist() == [0.3, 0.3, 0.2, 0.3]


def test_samples_stay_in_class():
    rng = np.random.default_rng(0)
    radii = np.array([0.3, 0.25, 0.1, 0.5])
    for _ in range(50):
        s = random_sample(rng, radii)
        assert sample_in_class(s, radii)
    assert sample_in_class(corner_sample(radii, -1.0), radii)
    out = nq.UncertaintySample(links=tuple(nq.ConstantLink(0.4) for _ in radii))
    assert not sample_in_class(out, np.full(4, 0.1))


def test_search_finds_nominal_instability_immediately():
    spec = nq.load_network_spec(fixture("two_agent_unstable.yaml"))
    res = nq.destabilization_search(spec, samples=5, seed=0)
    assert res.found
    assert res.evidence["sample_index"] == 0  # the ideal-link sample
    assert res.sample.describe()[0] == {"kind": "constant", "delta": 0.0}


def test_search_finds_static_corner_witness():
    # loop gain (0.9 * 1.3)^2 > 1: the +corner realization destabilizes
    res = nq.destabilization_search(two_agent_spec(0.9, 0.3), samples=5, seed=0)
    assert res.found
    assert res.evidence["sample_index"] in (1, 2)
    deltas = [d["delta"] for d in res.sample.describe()]
    assert deltas == pytest.approx([0.3, 0.3])


def test_search_empty_on_certified_fixture():
    spec = nq.load_network_spec(fixture("two_agent.yaml"))
    res = nq.destabilization_search(spec, samples=60, seed=3)
    assert not res.found
    assert res.tried == 60
    assert not res.failures


def test_search_rejects_table_uncertainty():
    doc = {
        "graph": {"vertices": 2, "edges": [[1, 2]]},
        "agents": {"default": {"gain": 0.5, "pole": 1.0}},
        "uncertainty": {"default": {
            "class": "user_table",
            "omega": [0.0], "phi1": [0.04], "phi2": [[0.0]], "phi3": [[[-1.0]]],
        }},
    }
    spec = nq.parse_network_spec(doc)
    with pytest.raises(ModelError, match="sampleable"):
        nq.destabilization_search(spec, samples=5)


def test_validate_multiplier_in_class():
    mult = nq.gain_bounded_deviation(2, 0.4)
    res = nq.validate_multiplier(mult, 0.4, trials=200, seed=2)
    assert res.valid
    assert res.worst_value >= -1e-12


def test_validate_multiplier_out_of_class_witness():
    mult = nq.gain_bounded_deviation(2, 0.4)
    res = nq.validate_multiplier(mult, 0.8, trials=50, seed=2)
    assert not res.valid
    assert res.witness is not None
    assert res.witness["trial"] == 0  # the adversarial probe finds it at once
    assert res.witness["normalized"] < -1e-6


def test_validate_multiplier_zero_radius():
    mult = nq.gain_bounded_deviation(1, 0.0)
    res = nq.validate_multiplier(mult, 0.0, trials=50, seed=1)
    assert res.valid


def test_validate_user_table_against_gain_bounded_samples():
    # a table reproducing the shipped blocks must validate the same way
    w = [0.0, 1.0, 100.0]
    good = nq.user_table(
        w, [[[0.08]]] * 3, [[[0.0, 0.0]]] * 3,
        [np.diag([-1.0, -1.0]).tolist()] * 3,
    )
    assert nq.validate_multiplier(good, 0.2, trials=80, seed=5).valid
    bad = nq.user_table(
        w, [[[0.001]]] * 3, [[[0.0, 0.0]]] * 3,
        [np.diag([-1.0, -1.0]).tolist()] * 3,
    )
    res = nq.validate_multiplier(bad, 0.2, trials=80, seed=5)
    assert not res.valid


def test_certified_search_consistency_small():
    # certified verdict and a (short) seeded search must agree
    spec = nq.load_network_spec(fixture("pair4.yaml"))
    rep = nq.certify_network(spec)
    assert rep.certified
    res = nq.destabilization_search(spec, samples=40, seed=11)
    assert not res.found
