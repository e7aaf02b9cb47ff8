"""Link-wise stability certificates with margin maximization.

For each edge k the certificate asks for the largest shift ``eps_k`` keeping

    s_k(w) + eps_k * projector_k  negative semidefinite at every frequency,

where ``s_k`` collects the transformed multiplier blocks restricted to link k
through its rank-one Laplacian term.  Every link condition only involves the
coordinates of the edge's two endpoint agents, so the check runs on an
(m_i + m_j)-dimensional principal submatrix; feasibility of all links implies
the global frequency-domain condition with margin ``min_k eps_k``.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import ModelError
from .graph import NetworkGraph, StructureMatrices, link_support
from .lti import (
    FrequencyGrid,
    NominalResult,
    build_nominal_loop,
    coprime_min_singular,
    nominal_stability_check,
)
from .multipliers import (
    CertificateForm,
    assemble_certificate_form,
    global_diagonal_split,
    hermitian_part,
    _conj_t,
)
from .netspec import NetworkSpec, Tolerances, build_problem

GRIDDING_CAVEAT = (
    "Frequency-domain conditions were checked on a finite grid (with adaptive "
    "refinement around each link's worst frequency), not over the whole "
    "frequency axis; a violation strictly between grid points cannot be "
    "excluded. Margins must exceed the configured floor before a link counts "
    "as certified."
)

# The per-link blocks below are one particular way to share the global form
# across links; the report records which selection produced the verdict.
SELECTION = "link-projector-diagonal-split"


@dataclass(frozen=True)
class LinkBlocks:
    """Per-link pieces of the certificate quadratic form.

    ``projector`` is the constant 0/1 diagonal weight; ``direct`` the
    symmetrized slice of the zz block; ``cross`` the zl slice; ``diagonal``
    the projected diagonal part of the split ll block.  All but the projector
    are (F, 2m, 2m) stacks.
    """

    projector: np.ndarray
    direct: np.ndarray
    cross: np.ndarray
    diagonal: np.ndarray


def build_link_blocks(
    form: CertificateForm,
    diag_entries: np.ndarray,
    structure: StructureMatrices,
    k: int,
) -> LinkBlocks:
    """Blocks for edge k (1-based) from the assembled global form.

    ``diag_entries`` is the (F, 2m) stack of diagonal-split entries from
    ``global_diagonal_split``.  The construction guarantees that the direct
    blocks sum to the zz block over all links and that the cross block acts
    on the edge Laplacian exactly like the full zl block.
    """
    p = structure.projector_diag(k).astype(float)
    direct = 0.5 * (p[None, :, None] * form.zz + form.zz * p[None, None, :])
    cross = form.zl * p[None, None, :]
    f, total = diag_entries.shape
    diagonal = np.zeros((f, total, total), dtype=complex)
    idx = np.arange(total)
    diagonal[:, idx, idx] = diag_entries * p[None, :]
    return LinkBlocks(
        projector=structure.link_projectors[k - 1].astype(float),
        direct=direct,
        cross=cross,
        diagonal=diagonal,
    )


def link_quadratic(blocks: LinkBlocks, edge_laplacian: np.ndarray) -> np.ndarray:
    """Hermitian stack ``direct + cross @ Lk + Lk @ cross^* + Lk @ diagonal @ Lk``."""
    lk = edge_laplacian.astype(float)[None, :, :]
    s = blocks.direct + blocks.cross @ lk + lk @ _conj_t(blocks.cross) + lk @ blocks.diagonal @ lk
    return hermitian_part(s)


def _eig_max(stack: np.ndarray) -> np.ndarray:
    return np.linalg.eigvalsh(stack)[..., -1]


@dataclass
class GridMargins:
    """Per-frequency shift margins of one link condition."""

    omegas: np.ndarray
    values: np.ndarray      # -inf where no nonnegative shift is feasible
    boundary: np.ndarray    # margin pinned by the projector block itself


def margins_on_grid(
    s: np.ndarray,
    projector_diag: np.ndarray,
    omegas: np.ndarray,
    support: np.ndarray | None = None,
    *,
    feas_tol: float = 1e-11,
    bisect_tol: float = 1e-10,
    max_iter: int = 80,
) -> GridMargins:
    """Largest shift keeping ``s + shift * diag(projector)`` negative
    semidefinite, per frequency, by bisection on the top eigenvalue.

    The shift only acts on the projector's two coordinates, so the supremum is
    bracketed by [0, -lam_max of the projector sub-block]; infeasibility at
    shift 0 (a positive eigenvalue, e.g. from coupling into the projector's
    kernel) is reported as -inf.  ``support`` restricts the whole test to a
    coordinate subset; a correct support leaves the margins unchanged.
    """
    s = np.asarray(s, dtype=complex)
    if s.ndim == 2:
        s = s[None]
    diag = np.asarray(projector_diag, dtype=float)
    if support is not None:
        idx = np.asarray(support, dtype=int)
        s = s[:, idx[:, None], idx[None, :]]
        diag = diag[idx]
    s = hermitian_part(s)
    nf = s.shape[0]
    scale = np.maximum(1.0, np.max(np.abs(s), axis=(1, 2)))
    tol_row = feas_tol * scale

    values = np.full(nf, -np.inf)
    q = np.flatnonzero(diag > 0)
    if q.size == 0:
        raise ModelError("projector selects no coordinates")
    feasible = _eig_max(s) <= tol_row
    if not np.any(feasible):
        return GridMargins(omegas=omegas, values=values, boundary=np.zeros(nf, dtype=bool))

    bump = np.diag(diag)[None, :, :]
    sqq = s[:, q[:, None], q[None, :]]
    cap = np.maximum(0.0, -_eig_max(sqq))

    act = np.flatnonzero(feasible)
    at_cap = _eig_max(s[act] + cap[act, None, None] * bump) <= tol_row[act]
    values[act[at_cap]] = cap[act[at_cap]]

    rest = act[~at_cap]
    lo = np.zeros(len(rest))
    hi = cap[rest].copy()
    for _ in range(max_iter):
        open_ = hi - lo > bisect_tol
        if not np.any(open_):
            break
        mid = 0.5 * (lo + hi)
        trial = np.flatnonzero(open_)
        rows = rest[trial]
        ok = _eig_max(s[rows] + mid[trial, None, None] * bump) <= tol_row[rows]
        lo[trial[ok]] = mid[trial[ok]]
        hi[trial[~ok]] = mid[trial[~ok]]
    values[rest] = lo

    boundary = np.isfinite(values) & (cap - values <= 10.0 * bisect_tol)
    return GridMargins(omegas=omegas, values=values, boundary=boundary)


@dataclass
class LinkMargin:
    """Worst-case margin of one link condition over a frequency grid."""

    k: int
    epsilon_star: float
    worst_omega: float
    feasible: bool
    boundary: bool
    grid: GridMargins

    @classmethod
    def from_grid(cls, k: int, margins: GridMargins) -> "LinkMargin":
        idx = int(np.argmin(margins.values))
        value = float(margins.values[idx])
        return cls(
            k=k,
            epsilon_star=value,
            worst_omega=float(margins.omegas[idx]),
            feasible=bool(np.isfinite(value)),
            boundary=bool(margins.boundary[idx]),
            grid=margins,
        )


def link_feasibility_margin(
    blocks: LinkBlocks,
    edge_laplacian: np.ndarray,
    omegas: np.ndarray,
    *,
    feas_tol: float = 1e-11,
    bisect_tol: float = 1e-10,
    k: int = 0,
) -> LinkMargin:
    """Full-dimension margin of one link condition over the grid."""
    s = link_quadratic(blocks, edge_laplacian)
    g = margins_on_grid(
        s, np.diag(blocks.projector), omegas, feas_tol=feas_tol, bisect_tol=bisect_tol
    )
    return LinkMargin.from_grid(k, g)


def reduced_link_check(
    blocks: LinkBlocks,
    edge_laplacian: np.ndarray,
    omegas: np.ndarray,
    support: np.ndarray,
    *,
    feas_tol: float = 1e-11,
    bisect_tol: float = 1e-10,
    k: int = 0,
) -> LinkMargin:
    """Margin computed on the endpoint coordinates only.

    Identical verdict and margin to :func:`link_feasibility_margin`; the
    equality is a tested invariant, the reduced form is what makes the
    per-link check local.
    """
    s = link_quadratic(blocks, edge_laplacian)
    g = margins_on_grid(
        s, np.diag(blocks.projector), omegas, support=support,
        feas_tol=feas_tol, bisect_tol=bisect_tol,
    )
    return LinkMargin.from_grid(k, g)


@dataclass
class GlobalCertificate:
    """Margin of the assembled (non-decomposed) frequency-domain condition."""

    epsilon: float
    worst_omega: float
    values: np.ndarray


def global_certificate(form: CertificateForm, structure: StructureMatrices) -> GlobalCertificate:
    """Direct check of the global condition: ``-lam_max`` of the assembled
    form over the grid.  Used as an oracle for the link-wise certificate and
    as a fallback diagnostic when it fails."""
    lap = structure.laplacian.astype(float)[None, :, :]
    t = form.zz + form.zl @ lap + lap @ _conj_t(form.zl) + lap @ form.ll @ lap
    vals = -_eig_max(hermitian_part(t))
    idx = int(np.argmin(vals))
    return GlobalCertificate(
        epsilon=float(vals[idx]),
        worst_omega=float(form.omegas[idx]),
        values=vals,
    )


@dataclass
class LinkCondition:
    """Reported outcome of one link's certificate condition."""

    k: int
    edge: tuple[int, int]
    epsilon_star: float
    worst_omega: float
    reduced_dim: int
    feasible: bool
    boundary: bool
    certified: bool
    n_grid: int
    refinements: int
    diagnostic: dict | None = None
    margin_trace: list | None = None

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "edge": list(self.edge),
            "epsilon_star": self.epsilon_star if self.feasible else None,
            "worst_omega": self.worst_omega,
            "reduced_dim": self.reduced_dim,
            "feasible": self.feasible,
            "boundary": self.boundary,
            "certified": self.certified,
            "n_grid": self.n_grid,
            "refinements": self.refinements,
        }
        if self.diagnostic is not None:
            out["diagnostic"] = self.diagnostic
        if self.margin_trace is not None:
            out["margin_trace"] = self.margin_trace
        return out


@dataclass
class CertificateReport:
    """Outcome of a full certification run, with enough provenance
    (grid, tolerances, version) to reproduce the verdict."""

    verdict: str
    certified: bool
    nominal: NominalResult
    per_link: list[LinkCondition]
    global_epsilon: float | None
    grid: dict
    tolerances: dict
    notes: list[str]
    global_fallback: dict | None = None
    selection: str = SELECTION
    version: str = __version__
    seed: int | None = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "certified": self.certified,
            "nominal": self.nominal.to_dict(),
            "per_link": [lc.to_dict() for lc in self.per_link],
            "global_epsilon": self.global_epsilon,
            "global_fallback": self.global_fallback,
            "grid": self.grid,
            "tolerances": self.tolerances,
            "notes": self.notes,
            "selection": self.selection,
            "version": self.version,
            "seed": self.seed,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _refine_around(omegas: np.ndarray, worst: float, per_side: int = 3) -> np.ndarray:
    """New grid points bracketing the current minimizer."""
    omegas = np.asarray(omegas)
    j = int(np.argmin(np.abs(omegas - worst)))
    lo = omegas[j - 1] if j > 0 else None
    hi = omegas[j + 1] if j + 1 < len(omegas) else None
    new: list[float] = []
    w = omegas[j]
    if lo is not None:
        if lo > 0:
            new.extend(np.geomspace(lo, max(w, lo * (1 + 1e-12)), per_side + 2)[1:-1])
        else:
            new.extend(np.linspace(lo, w, per_side + 2)[1:-1])
    if hi is not None:
        base = w if w > 0 else hi / 2 ** (per_side + 1)
        new.extend(np.geomspace(max(base, 1e-12), hi, per_side + 2)[1:-1])
    fresh = np.setdiff1d(np.asarray(new, dtype=float), omegas)
    return fresh


class _Pipeline:
    """Recomputable frequency-domain stacks for one problem instance."""

    def __init__(self, problem, tolerances: Tolerances):
        self.graph: NetworkGraph = problem.graph
        self.structure: StructureMatrices = problem.structure
        self.agents = problem.agents
        self.multipliers = problem.multipliers
        self.tol = tolerances
        self._cache: tuple[bytes, CertificateForm, np.ndarray] | None = None

    def stacks(self, omegas: np.ndarray):
        # every link evaluates the same base grid; one cache slot removes the
        # repeated assembly without holding refinement grids alive
        key = np.asarray(omegas, dtype=float).tobytes()
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1], self._cache[2]
        form = assemble_certificate_form(
            self.agents, self.multipliers, self.structure, omegas,
            tol=self.tol.hermitian_tol,
        )
        dvec, _ = global_diagonal_split(form, self.agents)
        if len(np.atleast_1d(omegas)) > 8:
            self._cache = (key, form, dvec)
        return form, dvec

    def link_grid_margins(self, k: int, omegas: np.ndarray, reduced: bool = True) -> GridMargins:
        form, dvec = self.stacks(omegas)
        blocks = build_link_blocks(form, dvec, self.structure, k)
        s = link_quadratic(blocks, self.structure.edge_laplacians[k - 1])
        support = link_support(self.graph, k) if reduced else None
        return margins_on_grid(
            s, self.structure.projector_diag(k), omegas, support=support,
            feas_tol=self.tol.feas_tol, bisect_tol=self.tol.bisect_tol,
        )


def _certify_link(pipe: _Pipeline, k: int, base: GridMargins, tol: Tolerances,
                  include_traces: bool = False) -> LinkCondition:
    """Refine the grid around the minimizer until the margin settles."""
    margin = LinkMargin.from_grid(k, base)
    omegas = np.asarray(base.omegas, dtype=float)
    values = base.values.copy()
    boundary = base.boundary.copy()
    rounds = 0
    diag = None
    if margin.feasible:
        while rounds < tol.refine_max_rounds:
            fresh = _refine_around(omegas, margin.worst_omega)
            if fresh.size == 0:
                break
            extra = pipe.link_grid_margins(k, fresh)
            omegas = np.concatenate([omegas, fresh])
            values = np.concatenate([values, extra.values])
            boundary = np.concatenate([boundary, extra.boundary])
            order = np.argsort(omegas)
            omegas, values, boundary = omegas[order], values[order], boundary[order]
            rounds += 1
            refined = LinkMargin.from_grid(k, GridMargins(omegas, values, boundary))
            moved = abs(refined.epsilon_star - margin.epsilon_star)
            margin = refined
            if not margin.feasible or moved < tol.refine_rel_tol * max(abs(margin.epsilon_star), 1e-12):
                break
    else:
        diag = _infeasibility_diagnostic(pipe, k, margin.worst_omega)

    trace = None
    if include_traces:
        trace = [
            [float(w), float(v) if np.isfinite(v) else None]
            for w, v in zip(omegas, values)
        ]
    i, j = pipe.graph.edge_order[k - 1]
    reduced_dim = pipe.graph.degree(i) + pipe.graph.degree(j)
    certified = margin.feasible and margin.epsilon_star > tol.eps_floor
    return LinkCondition(
        k=k,
        edge=(i, j),
        epsilon_star=margin.epsilon_star,
        worst_omega=margin.worst_omega,
        reduced_dim=reduced_dim,
        feasible=margin.feasible,
        boundary=margin.boundary,
        certified=certified,
        n_grid=len(omegas),
        refinements=rounds,
        diagnostic=diag,
        margin_trace=trace,
    )


def _infeasibility_diagnostic(pipe: _Pipeline, k: int, omega: float) -> dict:
    """Offending eigenpair of the link form at the worst frequency."""
    form, dvec = pipe.stacks(np.array([omega]))
    blocks = build_link_blocks(form, dvec, pipe.structure, k)
    s = link_quadratic(blocks, pipe.structure.edge_laplacians[k - 1])[0]
    support = link_support(pipe.graph, k)
    s = s[np.ix_(support, support)]
    vals, vecs = np.linalg.eigh(s)
    vec = vecs[:, -1]
    return {
        "omega": float(omega),
        "eigenvalue": float(vals[-1]),
        "coordinates": [int(c) + 1 for c in support],
        "eigenvector": [[float(x.real), float(x.imag)] for x in vec],
    }


def certify_network(
    spec: NetworkSpec,
    grid: FrequencyGrid | None = None,
    *,
    eps_floor: float | None = None,
    include_traces: bool = False,
) -> CertificateReport:
    """Run the full link-wise certification of a problem instance.

    Checks ideal-link (nominal) stability first, then evaluates every link
    condition on the frequency grid with adaptive refinement.  The verdict is
    ``certified`` only when the nominal loop is stable and every link margin
    clears the floor; a failed nominal check can never certify.  With
    ``include_traces`` each link carries its full per-frequency margin trace
    in the report (larger output, handy for plotting).
    """
    problem = build_problem(spec)
    tol = problem.tolerances
    if eps_floor is not None:
        tol = dataclasses.replace(tol, eps_floor=float(eps_floor))
    fgrid = grid if grid is not None else problem.grid
    omegas = fgrid.omegas()

    pipe = _Pipeline(problem, tol)
    nominal = nominal_stability_check(build_nominal_loop(problem.structure, problem.agents))

    inconsistency = None
    if nominal.stable:
        # frequency-domain cross check: a stable verdict with a singular loop
        # denominator on the grid would be an internal contradiction
        smin, s_at = coprime_min_singular(problem.structure, problem.agents, omegas)
        if smin <= 1e-9:
            inconsistency = (
                f"INCONSISTENCY: nominal loop reported stable but the loop "
                f"denominator is singular on the grid (sigma_min = {smin:.2e} "
                f"at omega = {s_at:.6g})."
            )

    per_link = []
    for k in range(1, problem.structure.n_links + 1):
        base = pipe.link_grid_margins(k, omegas)
        per_link.append(_certify_link(pipe, k, base, tol, include_traces=include_traces))

    finite = [lc.epsilon_star for lc in per_link if lc.feasible]
    global_eps = float(min(finite)) if len(finite) == len(per_link) and finite else None

    notes = [GRIDDING_CAVEAT]
    if not nominal.stable:
        notes.append(
            "The ideal-link network is unstable; robustness margins are "
            "reported for diagnosis only and cannot certify."
        )
    if inconsistency is not None:
        notes.append(inconsistency)
    certified = bool(
        nominal.stable and inconsistency is None
        and all(lc.certified for lc in per_link) and per_link
    )

    # The assembled (non-decomposed) condition is weaker to fail; report it as
    # a fallback diagnostic so a conservative link-wise refusal is visible.
    form, _ = pipe.stacks(omegas)
    fallback = global_certificate(form, problem.structure)
    if not certified and nominal.stable and fallback.epsilon > tol.eps_floor:
        notes.append(
            "The link-wise conditions failed but the assembled global "
            "condition holds on the grid; the refusal is conservatism of the "
            "per-link decomposition, not an instability finding."
        )

    return CertificateReport(
        verdict="certified" if certified else "notCertified",
        certified=certified,
        nominal=nominal,
        per_link=per_link,
        global_epsilon=global_eps,
        global_fallback={
            "epsilon": fallback.epsilon,
            "worst_omega": fallback.worst_omega,
        },
        grid={
            "omega_min": fgrid.omega_min,
            "omega_max": fgrid.omega_max,
            "points": fgrid.points,
            "include_zero": fgrid.include_zero,
            "extra": list(fgrid.extra),
            "base_size": int(len(omegas)),
        },
        tolerances=dataclasses.asdict(tol),
        notes=notes,
    )
