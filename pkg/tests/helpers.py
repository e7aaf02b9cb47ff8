"""Shared test utilities: fixture paths, random instances, invariant checks."""

from __future__ import annotations

from pathlib import Path

import numpy as np

import netiqc as nq

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def fixture(name: str) -> Path:
    return FIXTURES / name


def two_agent_doc(gain: float, radius: float, pole: float = 1.0) -> dict:
    return {
        "graph": {"vertices": 2, "edges": [[1, 2]]},
        "agents": {"default": {"gain": float(gain), "pole": float(pole)}},
        "uncertainty": {"default": {"class": "gain_bounded", "radius": float(radius)}},
    }


def two_agent_spec(gain: float, radius: float, pole: float = 1.0) -> nq.NetworkSpec:
    return nq.parse_network_spec(two_agent_doc(gain, radius, pole))


def assert_structure_invariants(st: nq.StructureMatrices, rng=None):
    """Every exact integer identity the structure matrices must satisfy."""
    size = st.size
    routing, incidence, lap = st.routing, st.incidence, st.laplacian
    ident = np.eye(size, dtype=np.int64)
    assert routing.dtype == np.int64
    assert np.array_equal(routing, routing.T)
    assert np.array_equal(routing @ routing, ident)
    assert np.all(np.diag(routing) == 0)
    assert np.array_equal(lap, incidence @ incidence.T)
    assert np.array_equal(lap, sum(st.edge_laplacians))
    assert np.array_equal(routing, ident - lap)
    for col in incidence.T:
        vals = sorted(col.tolist())
        assert vals.count(1) == 1 and vals.count(-1) == 1
        assert all(v in (-1, 0, 1) for v in vals)
    total = np.zeros((size, size), dtype=np.int64)
    for lk, proj in zip(st.edge_laplacians, st.link_projectors):
        assert np.array_equal(proj @ lk, lk)
        assert np.array_equal(proj @ proj, proj)
        total += proj
    assert np.array_equal(total, ident)
    rng = rng or np.random.default_rng(0)
    for _ in range(3):
        d = np.diag(rng.integers(-9, 10, size))
        for k in range(st.n_links):
            for l in range(st.n_links):
                prod = st.link_projectors[k] @ d @ st.link_projectors[l]
                if k != l:
                    assert not prod.any()
        acc = sum(st.link_projectors[k] @ d @ st.link_projectors[k] for k in range(st.n_links))
        assert np.array_equal(acc, d)


def random_simple_graph(rng, n_max: int = 8, n_min: int = 2, p: float = 0.5) -> nq.NetworkGraph:
    n = int(rng.integers(n_min, n_max + 1))
    edges = set()
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            if rng.uniform() < p:
                edges.add((i, j))
    for v in range(1, n + 1):
        if not any(v in e for e in edges):
            u = v
            while u == v:
                u = int(rng.integers(1, n + 1))
            edges.add(tuple(sorted((v, u))))
    return nq.build_graph(n, sorted(edges))


def matching_graph(rng, n_choices=(2, 4, 6)) -> nq.NetworkGraph:
    """1-regular graph: random pairing of the vertices."""
    n = int(rng.choice(n_choices))
    perm = rng.permutation(n) + 1
    edges = [tuple(sorted((int(perm[2 * i]), int(perm[2 * i + 1])))) for i in range(n // 2)]
    return nq.build_graph(n, sorted(edges))


def random_stable_agents(rng, g: nq.NetworkGraph, gain_scale: float = 0.6):
    agents = []
    for v in range(1, g.n + 1):
        pole = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
        gain = float(rng.uniform(-gain_scale, gain_scale)) * pole / max(1, g.degree(v))
        agents.append(nq.AgentModel.first_order(gain, pole, g.degree(v)))
    return tuple(agents)


def random_instance(rng, n_max: int = 6, matching_prob: float = 0.5, r_max: float = 0.25):
    """Random nominal-stable problem with the shipped multiplier class.

    Mixes 1-regular graphs in so that the per-link conditions are feasible on
    a good fraction of the instances (the link-wise decomposition is
    conservative on vertices of degree two or more).
    """
    if rng.uniform() < matching_prob:
        g = matching_graph(rng)
    else:
        g = random_simple_graph(rng, n_max=n_max)
    st = nq.build_structure(g)
    agents = None
    for _ in range(10):
        cand = random_stable_agents(rng, g)
        if nq.nominal_stability_check(nq.build_nominal_loop(st, cand)).stable:
            agents = cand
            break
    if agents is None:
        agents = tuple(
            nq.AgentModel.first_order(0.05, 1.0, g.degree(v)) for v in range(1, g.n + 1)
        )
    mults = tuple(
        nq.gain_bounded_deviation(g.degree(v), float(rng.uniform(0.0, r_max)))
        for v in range(1, g.n + 1)
    )
    return g, st, agents, mults


def rand_hermitian(rng, n: int, scale: float = 1.0, complex_: bool = True) -> np.ndarray:
    x = rng.normal(size=(n, n)) * scale
    if complex_:
        x = x + 1j * rng.normal(size=(n, n)) * scale
    return 0.5 * (x + x.conj().T)


def per_link_margin_values(structure, graph, form, dvec, feas_tol=1e-11, bisect_tol=1e-10):
    """Per-frequency margin arrays for every link of an assembled form."""
    from netiqc.certify import build_link_blocks, link_quadratic, margins_on_grid

    out = []
    for k in range(1, structure.n_links + 1):
        blocks = build_link_blocks(form, dvec, structure, k)
        s = link_quadratic(blocks, structure.edge_laplacians[k - 1])
        out.append(
            margins_on_grid(
                s, structure.projector_diag(k), form.omegas,
                feas_tol=feas_tol, bisect_tol=bisect_tol,
            )
        )
    return out
