"""Independent brute-force validators for the certificates.

Three cross checks, deliberately built on different machinery than the
certifier: a direct frequency-domain test on the closed-loop response (no
factored form), a randomized destabilization search that closes the loop in
the time domain, and a sampling validator for multiplier blocks.  A certified
verdict that loses to any of these is a soundness bug, not a tolerance issue.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ModelError, NetIqcError, NumericalError
from .graph import StructureMatrices
from .lti import AgentModel, coprime_factors
from .multipliers import MultiplierBlocks, global_multiplier, hermitian_part, _conj_t
from .netspec import NetworkSpec, build_problem
from .sim import (
    ConstantLink,
    FirstOrderLink,
    SectorLink,
    UncertaintySample,
    default_dt,
    ideal_sample,
    simulate,
)

_trapz = getattr(np, "trapezoid", None) or np.trapz


@dataclass
class DirectCheckResult:
    """Margin of the unfactored frequency-domain condition."""

    epsilon: float
    worst_omega: float
    min_singular: float

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "worst_omega": self.worst_omega,
            "min_singular": self.min_singular,
        }


def direct_iqc_check(
    structure: StructureMatrices,
    agents: Sequence[AgentModel],
    multipliers: Sequence[MultiplierBlocks],
    omegas,
    cond_limit: float = 1e12,
) -> DirectCheckResult:
    """Evaluate the closed-loop condition on the grid by explicit inversion.

    Builds ``g = hval @ mval^-1`` directly and returns the minimum over the
    grid of ``-lam_max`` of the multiplier form in (g u, u).  Requires a
    stable nominal loop; a denominator too close to singular is reported as a
    conditioning failure with its smallest singular value.
    """
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    hval, mval = coprime_factors(structure, agents, w)
    svals = np.linalg.svd(mval, compute_uv=False)
    smin = float(np.min(svals[:, -1]))
    if smin <= np.max(svals[:, 0]) / cond_limit:
        raise NumericalError(
            f"loop denominator is numerically singular on the grid "
            f"(sigma_min = {smin:.3e}); is the nominal loop stable?"
        )
    g = np.linalg.solve(mval.transpose(0, 2, 1), hval.transpose(0, 2, 1)).transpose(0, 2, 1)
    phi1g, phi2g, phi3g = global_multiplier(multipliers, agents, w)
    gh = _conj_t(g)
    q = hermitian_part(gh @ phi1g @ g + gh @ phi2g + _conj_t(phi2g) @ g + phi3g)
    vals = -np.linalg.eigvalsh(q)[:, -1]
    idx = int(np.argmin(vals))
    return DirectCheckResult(
        epsilon=float(vals[idx]), worst_omega=float(w[idx]), min_singular=smin
    )


def coprime_side_form(
    structure: StructureMatrices,
    agents: Sequence[AgentModel],
    multipliers: Sequence[MultiplierBlocks],
    omegas,
) -> np.ndarray:
    """Multiplier form evaluated through the stable factor pair instead of the
    inverse; congruent to the direct form wherever the loop denominator is
    invertible, so the top-eigenvalue signs must agree."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    hval, mval = coprime_factors(structure, agents, w)
    phi1g, phi2g, phi3g = global_multiplier(multipliers, agents, w)
    nh, mh = _conj_t(hval), _conj_t(mval)
    return hermitian_part(
        nh @ phi1g @ hval + nh @ phi2g @ mval + mh @ _conj_t(phi2g) @ hval + mh @ phi3g @ mval
    )


def per_coordinate_radii(problem) -> np.ndarray:
    """Deviation radius of each global coordinate, from its owning agent."""
    radii = np.empty(problem.structure.size)
    off = 0
    for ag, mult in zip(problem.agents, problem.multipliers):
        if mult.kind != "gain_bounded":
            raise ModelError(
                "sampling needs a gain_bounded uncertainty class; "
                "tabulated multipliers do not define a sampleable family"
            )
        radii[off:off + ag.n_inputs] = mult.radius
        off += ag.n_inputs
    return radii


def corner_sample(radii: np.ndarray, sign: float) -> UncertaintySample:
    return UncertaintySample(links=tuple(ConstantLink(sign * float(r)) for r in radii))


def random_sample(rng: np.random.Generator, radii: np.ndarray,
                  allow_sector: bool = True) -> UncertaintySample:
    """Random in-class realization: constants, low-pass deviations, or
    saturating memoryless deviations, every one of gain at most its radius."""
    links: list = []
    kinds = ["constant", "filter"] + (["sector"] if allow_sector else [])
    for r in radii:
        kind = kinds[int(rng.integers(len(kinds)))]
        if kind == "constant":
            links.append(ConstantLink(float(rng.uniform(-r, r))))
        elif kind == "filter":
            pole = float(np.exp(rng.uniform(np.log(0.05), np.log(20.0))))
            links.append(FirstOrderLink(amp=float(rng.uniform(-r, r)) * pole, pole=pole))
        else:
            links.append(SectorLink(slope=float(rng.uniform(-r, r))))
    return UncertaintySample(links=tuple(links))


def sample_in_class(sample: UncertaintySample, radii: np.ndarray,
                    tol: float = 1e-9, sweep_points: int = 200) -> bool:
    """Check every link's gain against its radius, sweeping dynamic links."""
    w = np.geomspace(1e-4, 1e4, sweep_points)
    for lk, r in zip(sample.links, radii):
        if isinstance(lk, FirstOrderLink):
            gain = float(np.max(np.abs(lk.amp / (1j * w + lk.pole))))
        else:
            gain = lk.gain()
        if gain > r + tol:
            return False
    return True


@dataclass
class SearchResult:
    """Outcome of a randomized destabilization search."""

    found: bool
    tried: int
    sample: UncertaintySample | None = None
    evidence: dict | None = None
    failures: list | None = None
    seed: int | None = None

    def to_dict(self) -> dict:
        out = {"found": self.found, "tried": self.tried, "seed": self.seed}
        if self.sample is not None:
            out["sample"] = self.sample.describe()
        if self.evidence is not None:
            out["evidence"] = self.evidence
        if self.failures:
            out["failures"] = self.failures
        return out


def destabilization_search(
    spec: NetworkSpec,
    samples: int = 500,
    seed: int = 0,
    horizon: float = 200.0,
    threshold: float = 1e6,
    dt: float | None = None,
    max_steps: int = 5000,
) -> SearchResult:
    """Hunt for an admissible link realization that destabilizes the loop.

    Every drawn sample is in the declared class, so on a certified problem
    this search must come back empty; a hit refutes the certificate.  The
    first three samples are deterministic (ideal links, then both constant
    corners), the rest are seeded random draws.  Divergence means the
    aggregate state norm exceeds ``threshold`` times the pulse norm within
    the horizon.

    The per-sample step is floored so one run never exceeds ``max_steps``
    steps; zero-order-hold stepping stays exact for linear samples at any
    step size, so this only coarsens the output sampling.
    """
    problem = build_problem(spec)
    radii = per_coordinate_radii(problem)
    rng = np.random.default_rng(seed)
    size = problem.structure.size
    allow_sector = not any(np.any(ag.d) for ag in problem.agents)

    def candidates():
        yield ideal_sample(size)
        yield corner_sample(radii, +1.0)
        yield corner_sample(radii, -1.0)
        while True:
            yield random_sample(rng, radii, allow_sector)

    pulse_norm = float(np.sqrt(size))
    limit = threshold * pulse_norm
    failures: list = []
    tried = 0
    for idx, sample in enumerate(candidates()):
        if tried >= samples:
            break
        tried += 1
        dt_s = float(dt) if dt is not None else default_dt(problem.agents, sample)
        dt_s = max(dt_s, horizon / max_steps)
        steps = max(2, int(round(horizon / dt_s)))
        dv = np.zeros((steps, size))
        dv[0, :] = 1.0
        try:
            trace = simulate(
                problem.structure, problem.agents, sample,
                d_v=dv, dt=dt_s, horizon=horizon, norm_limit=limit,
            )
        except NetIqcError as exc:
            failures.append({"sample_index": idx, "error": str(exc)})
            continue
        peak = float(np.max(trace.state_norms)) if trace.state_norms.size else 0.0
        if trace.diverged or peak > limit:
            evidence = {
                "sample_index": idx,
                "peak_state_norm": peak,
                "norm_limit": limit,
                "time_reached": float(trace.t[-1]),
                "dt": dt_s,
            }
            return SearchResult(
                found=True, tried=tried, sample=sample, evidence=evidence,
                failures=failures, seed=seed,
            )
    return SearchResult(found=False, tried=tried, failures=failures, seed=seed)


@dataclass
class MultiplierValidation:
    """Outcome of the sampling validation of one multiplier."""

    valid: bool
    worst_value: float
    trials: int
    witness: dict | None = None

    def to_dict(self) -> dict:
        out = {"valid": self.valid, "worst_value": self.worst_value, "trials": self.trials}
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def _delta_response(delta: tuple, omegas: np.ndarray) -> np.ndarray:
    if delta[0] == "constant":
        return np.full(len(omegas), complex(delta[1]))
    _, amp, pole = delta
    return amp / (1j * omegas + pole)


def validate_multiplier(
    mult: MultiplierBlocks,
    radius: float,
    trials: int = 200,
    seed: int = 0,
    omegas: np.ndarray | None = None,
    tol: float = 1e-12,
) -> MultiplierValidation:
    """Sample the constrained quadratic form and look for a negative value.

    Draws scalings alpha in [0, 1], linear deviations of gain at most
    ``radius`` (constants and first-order filters), and finite-energy output
    spectra; the form is integrated by quadrature on the grid.  Trial 0 is an
    adversarial probe: the constant corner deviation paired with a spectrum
    concentrated where the pointwise form is most negative.  A multiplier
    that is wrong for the sampled class is therefore found immediately, while
    a correct one passes every trial up to quadrature round-off.
    """
    if radius < 0:
        raise ModelError("sampling radius must be nonnegative")
    w = np.asarray(omegas, dtype=float) if omegas is not None else np.geomspace(1e-3, 1e3, 240)
    phi1, phi2, phi3 = mult.at(w)
    m = mult.n_inputs
    rng = np.random.default_rng(seed)

    def form_value(alpha, deltas, spectrum):
        resp = np.stack([_delta_response(d, w) for d in deltas], axis=1)  # (F, m)
        u = alpha * resp * spectrum[:, None]
        t1 = phi1[:, 0, 0].real * np.abs(spectrum) ** 2
        t2 = 2.0 * np.real(np.conj(spectrum) * np.einsum("fm,fm->f", phi2[:, 0, :], u))
        t3 = np.real(np.einsum("fm,fmn,fn->f", np.conj(u), phi3, u))
        value = float(_trapz(t1 + t2 + t3, w) / np.pi)
        energy = float(_trapz(np.abs(spectrum) ** 2 + np.sum(np.abs(u) ** 2, axis=1), w) / np.pi)
        return value, max(energy, 1e-300)

    def random_deltas():
        out = []
        for _ in range(m):
            if rng.uniform() < 0.5:
                out.append(("constant", float(rng.uniform(-radius, radius))))
            else:
                pole = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2))))
                out.append(("filter", float(rng.uniform(-radius, radius)) * pole, pole))
        return out

    def random_spectrum():
        spec = np.zeros(len(w), dtype=complex)
        for _ in range(3):
            pole = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2))))
            spec += complex(rng.normal(), rng.normal()) / (1j * w + pole)
        return spec

    worst = np.inf
    witness = None
    for trial in range(trials):
        if trial == 0:
            alpha = 1.0
            deltas = [("constant", radius)] * m
            dvec = np.full(m, radius, dtype=complex)
            point = (
                phi1[:, 0, 0].real
                + 2.0 * np.real(phi2[:, 0, :] @ dvec)
                + np.real(np.einsum("m,fmn,n->f", np.conj(dvec), phi3, dvec))
            )
            spectrum = np.zeros(len(w), dtype=complex)
            spectrum[int(np.argmin(point))] = 1.0
        else:
            alpha = float(rng.uniform(0.0, 1.0))
            deltas = random_deltas()
            spectrum = random_spectrum()
        value, energy = form_value(alpha, deltas, spectrum)
        scaled = value / energy
        if scaled < worst:
            worst = scaled
            if scaled < -tol:
                witness = {
                    "trial": trial,
                    "alpha": alpha,
                    "deltas": [list(d) for d in deltas],
                    "value": value,
                    "normalized": scaled,
                }
    return MultiplierValidation(
        valid=witness is None, worst_value=float(worst), trials=trials, witness=witness
    )
