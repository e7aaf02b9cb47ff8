"""IQC multiplier blocks for link uncertainty and their loop-factored form.

A multiplier for agent i is the Hermitian block operator
``[[phi1, phi2], [phi2^*, phi3]]`` acting on (output, link-deviation) pairs,
with phi1 scalar and phi3 of size m_i.  Pulling the multiplier through the
stable factors of the ideal loop turns the global robustness condition into a
quadratic form in ``(z, laplacian @ z)`` whose blocks stay block-diagonal per
agent; those transformed blocks are what the certificate conditions consume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ModelError
from .graph import StructureMatrices
from .lti import AgentModel, agent_response

HERMITIAN_TOL = 1e-12


def _conj_t(x: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(x, -1, -2))


def hermitian_part(x: np.ndarray) -> np.ndarray:
    return 0.5 * (x + _conj_t(x))


def require_hermitian(x, tol: float = HERMITIAN_TOL, what: str = "matrix") -> np.ndarray:
    """Symmetrize within tol (relative to the entry scale), reject beyond it."""
    x = np.asarray(x, dtype=complex)
    if x.size:
        gap = float(np.max(np.abs(x - _conj_t(x))))
        scale = max(1.0, float(np.max(np.abs(x))))
        if gap > tol * scale:
            raise ModelError(f"{what} is not Hermitian (asymmetry {gap:.2e})")
    return hermitian_part(x)


def _interp_table(omegas: np.ndarray, nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Entrywise linear interpolation in omega with constant extrapolation."""
    out = np.empty((len(omegas),) + values.shape[1:], dtype=complex)
    for idx in np.ndindex(values.shape[1:]):
        col = values[(slice(None),) + idx]
        out[(slice(None),) + idx] = (
            np.interp(omegas, nodes, col.real) + 1j * np.interp(omegas, nodes, col.imag)
        )
    return out


@dataclass(frozen=True)
class MultiplierBlocks:
    """Frequency-dependent IQC blocks for one agent's bundle of links.

    ``at(omegas)`` returns stacks ``(phi1, phi2, phi3)`` of shapes
    (F, 1, 1), (F, 1, m), (F, m, m); phi1 and phi3 are Hermitian at every
    frequency by construction.
    """

    n_inputs: int
    kind: str
    radius: float | None = None
    table_omegas: np.ndarray | None = None
    table_phi1: np.ndarray | None = None
    table_phi2: np.ndarray | None = None
    table_phi3: np.ndarray | None = None

    def at(self, omegas) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        m = self.n_inputs
        if self.kind == "gain_bounded":
            phi1 = np.full((len(w), 1, 1), m * self.radius**2, dtype=complex)
            phi2 = np.zeros((len(w), 1, m), dtype=complex)
            phi3 = np.broadcast_to(-np.eye(m, dtype=complex), (len(w), m, m)).copy()
            return phi1, phi2, phi3
        phi1 = _interp_table(w, self.table_omegas, self.table_phi1)
        phi2 = _interp_table(w, self.table_omegas, self.table_phi2)
        phi3 = _interp_table(w, self.table_omegas, self.table_phi3)
        return hermitian_part(phi1), phi2, hermitian_part(phi3)


def gain_bounded_deviation(n_inputs: int, radius: float) -> MultiplierBlocks:
    """Multiplier valid for links ``1 + delta`` with each deviation a stable
    (possibly nonlinear) system of gain at most ``radius``.

    The blocks are constant: phi1 = m r^2, phi2 = 0, phi3 = -I, so the
    constrained form is ``m r^2 |y|^2 - |u|^2`` which is nonnegative whenever
    every per-link deviation has gain <= r.
    """
    if radius < 0:
        raise ModelError(f"deviation radius must be nonnegative, got {radius}")
    if n_inputs < 1:
        raise ModelError("multiplier needs at least one link")
    return MultiplierBlocks(n_inputs=int(n_inputs), kind="gain_bounded", radius=float(radius))


def user_table(omegas, phi1, phi2, phi3, tol: float = HERMITIAN_TOL) -> MultiplierBlocks:
    """Tabulated multiplier: Hermitian blocks at given frequencies,
    interpolated linearly in between and held constant beyond the ends."""
    w = np.asarray(omegas, dtype=float)
    if w.ndim != 1 or len(w) < 1:
        raise ModelError("table needs a 1-d list of frequencies")
    if np.any(np.diff(w) <= 0):
        raise ModelError("table frequencies must be strictly increasing")
    p1 = np.asarray(phi1, dtype=complex)
    p2 = np.asarray(phi2, dtype=complex)
    p3 = np.asarray(phi3, dtype=complex)
    if p1.shape != (len(w), 1, 1):
        raise ModelError(f"phi1 table must have shape ({len(w)}, 1, 1), got {p1.shape}")
    m = p3.shape[-1] if p3.ndim == 3 else 0
    if p3.shape != (len(w), m, m) or m < 1:
        raise ModelError(f"phi3 table must have shape ({len(w)}, m, m), got {p3.shape}")
    if p2.shape != (len(w), 1, m):
        raise ModelError(f"phi2 table must have shape ({len(w)}, 1, {m}), got {p2.shape}")
    p1 = require_hermitian(p1, tol, "phi1 table")
    p3 = require_hermitian(p3, tol, "phi3 table")
    for arr in (w, p1, p2, p3):
        arr.setflags(write=False)
    return MultiplierBlocks(
        n_inputs=m, kind="user_table",
        table_omegas=w, table_phi1=p1, table_phi2=p2, table_phi3=p3,
    )


def transform_agent(h: np.ndarray, phi1: np.ndarray, phi2: np.ndarray, phi3: np.ndarray,
                    tol: float = HERMITIAN_TOL):
    """Transformed blocks of one agent at each frequency.

    ``h`` is the (F, m) stack of agent response rows.  With
    ``s = I - ones((m,1)) @ h`` (the agent's block of the loop denominator),
    the returned triple is::

        zz = h^* phi1 h + s^* phi3 s + h^* phi2 s + s^* phi2^* h
        zl = -h^* phi2 - s^* phi3
        ll = phi3

    zz and ll are Hermitian; non-Hermitian phi1/phi3 inputs are rejected.
    """
    phi1 = require_hermitian(phi1, tol, "phi1")
    phi3 = require_hermitian(phi3, tol, "phi3")
    phi2 = np.asarray(phi2, dtype=complex)
    h = np.asarray(h, dtype=complex)
    m = h.shape[1]
    hrow = h[:, None, :]
    hcol_conj = np.conj(h)[:, :, None]
    smat = np.eye(m)[None, :, :] - np.ones((m, 1)) * hrow
    smat_h = _conj_t(smat)
    zz = (
        hcol_conj @ phi1 @ hrow
        + smat_h @ phi3 @ smat
        + hcol_conj @ phi2 @ smat
        + smat_h @ _conj_t(phi2) @ hrow
    )
    zl = -(hcol_conj @ phi2) - smat_h @ phi3
    return hermitian_part(zz), zl, phi3.copy()


@dataclass(frozen=True)
class CertificateForm:
    """Global blocks of the robustness quadratic form over (z, laplacian z).

    The form is ``<[z; Lz], [[zz, zl], [zl^*, ll]] [z; Lz]>`` evaluated
    frequency by frequency; all three blocks are block-diagonal per agent on
    the global coordinate layout.
    """

    omegas: np.ndarray
    zz: np.ndarray
    zl: np.ndarray
    ll: np.ndarray
    per_agent: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]


def assemble_certificate_form(
    agents: Sequence[AgentModel],
    multipliers: Sequence[MultiplierBlocks],
    structure: StructureMatrices,
    omegas,
    tol: float = HERMITIAN_TOL,
) -> CertificateForm:
    """Evaluate every agent's transformed blocks and embed them globally."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    if len(agents) != len(multipliers):
        raise ModelError("need exactly one multiplier per agent")
    sizes = [ag.n_inputs for ag in agents]
    if sum(sizes) != structure.size:
        raise ModelError(
            f"agents provide {sum(sizes)} coordinates, structure has {structure.size}"
        )
    total = structure.size
    zz = np.zeros((len(w), total, total), dtype=complex)
    zl = np.zeros_like(zz)
    ll = np.zeros_like(zz)
    per_agent = []
    off = 0
    for ag, mult in zip(agents, multipliers):
        if mult.n_inputs != ag.n_inputs:
            raise ModelError(
                f"multiplier covers {mult.n_inputs} links, agent has {ag.n_inputs}"
            )
        h = agent_response(ag, w)
        blocks = transform_agent(h, *mult.at(w), tol=tol)
        sl = slice(off, off + ag.n_inputs)
        zz[:, sl, sl], zl[:, sl, sl], ll[:, sl, sl] = blocks
        per_agent.append(blocks)
        off += ag.n_inputs
    return CertificateForm(omegas=w, zz=zz, zl=zl, ll=ll, per_agent=tuple(per_agent))


@dataclass(frozen=True)
class DiagonalSplit:
    """Split of a Hermitian block as ``diagonal + remainder`` with the
    remainder negative semidefinite."""

    diagonal: np.ndarray
    remainder: np.ndarray


def diagonal_split(block, tol: float = HERMITIAN_TOL) -> DiagonalSplit:
    """Shift by the largest eigenvalue: ``diagonal = lam_max * I`` and
    ``remainder = block - lam_max * I``.

    An already-diagonal block is returned unshifted with a zero remainder,
    which avoids the conservativeness the shift would otherwise introduce.
    """
    block = require_hermitian(block, tol, "split input")
    m = block.shape[-1]
    off_diag = block - np.diag(np.diag(block))
    if not np.any(off_diag):
        return DiagonalSplit(diagonal=np.diag(np.diag(block).real), remainder=np.zeros((m, m)))
    lam = float(np.linalg.eigvalsh(block)[-1])
    return DiagonalSplit(diagonal=lam * np.eye(m), remainder=block - lam * np.eye(m))


def diagonal_split_stack(blocks: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched split of a (F, m, m) Hermitian stack.

    Returns the diagonal entries (F, m) real and the remainders (F, m, m).
    """
    blocks = hermitian_part(np.asarray(blocks, dtype=complex))
    f, m, _ = blocks.shape
    idx = np.arange(m)
    off = blocks.copy()
    off[:, idx, idx] = 0.0
    dvals = np.empty((f, m))
    rem = np.zeros_like(blocks)
    plain = ~np.any(off, axis=(1, 2))
    dvals[plain] = blocks[plain][:, idx, idx].real
    mixed = ~plain
    if np.any(mixed):
        lam = np.linalg.eigvalsh(blocks[mixed])[:, -1]
        dvals[mixed] = lam[:, None]
        rem[mixed] = blocks[mixed] - lam[:, None, None] * np.eye(m)[None]
    return dvals, rem


def global_diagonal_split(form: CertificateForm, agents: Sequence[AgentModel]):
    """Per-agent splits of the ll blocks, embedded on the global layout.

    Returns ``(diag_entries, remainders)``: diag entries as an (F, 2m) real
    array and one (F, m_i, m_i) remainder stack per agent.
    """
    total = form.zz.shape[1]
    dvec = np.empty((len(form.omegas), total))
    rems = []
    off = 0
    for (zz_i, zl_i, ll_i), ag in zip(form.per_agent, agents):
        d_i, r_i = diagonal_split_stack(ll_i)
        dvec[:, off:off + ag.n_inputs] = d_i
        rems.append(r_i)
        off += ag.n_inputs
    return dvec, tuple(rems)


def global_multiplier(
    multipliers: Sequence[MultiplierBlocks],
    agents: Sequence[AgentModel],
    omegas,
):
    """Block-diagonal global multiplier: (F, n, n), (F, n, 2m), (F, 2m, 2m)."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    n = len(agents)
    total = sum(ag.n_inputs for ag in agents)
    phi1g = np.zeros((len(w), n, n), dtype=complex)
    phi2g = np.zeros((len(w), n, total), dtype=complex)
    phi3g = np.zeros((len(w), total, total), dtype=complex)
    off = 0
    for i, (ag, mult) in enumerate(zip(agents, multipliers)):
        p1, p2, p3 = mult.at(w)
        sl = slice(off, off + ag.n_inputs)
        phi1g[:, i, i] = p1[:, 0, 0]
        phi2g[:, i, sl] = p2[:, 0, :]
        phi3g[:, sl, sl] = p3
        off += ag.n_inputs
    return phi1g, phi2g, phi3g
