"""Stable LTI agent models and frequency-domain assembly of the ideal loop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import AlgebraicLoopError, ModelError, NumericalError
from .graph import StructureMatrices

DEFAULT_STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class AgentModel:
    """State-space model with one output and one input per neighbour.

    The input order follows the owning vertex's neighbour enumeration.  The
    state matrix must be Hurwitz with margin ``stability_margin`` on the real
    parts; static (zero-state) models are allowed.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    stability_margin: float = field(default=DEFAULT_STABILITY_MARGIN, compare=False)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_2d(np.asarray(self.b, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        nx = a.shape[0]
        if a.shape != (nx, nx):
            raise ModelError(f"state matrix must be square, got {a.shape}")
        if b.shape[0] != nx:
            raise ModelError(f"input matrix rows {b.shape[0]} != state count {nx}")
        if c.shape != (1, nx):
            raise ModelError(f"output matrix must be 1x{nx}, got {c.shape}")
        if d.shape != (1, b.shape[1]):
            raise ModelError(f"feedthrough must be 1x{b.shape[1]}, got {d.shape}")
        if b.shape[1] < 1:
            raise ModelError("agent must have at least one input")
        if nx > 0:
            worst = np.max(np.linalg.eigvals(a).real)
            if worst >= -self.stability_margin:
                raise ModelError(
                    f"agent is not stable: eigenvalue real part {worst:.3e} "
                    f"exceeds -{self.stability_margin:.1e}"
                )
        for name, arr in (("a", a), ("b", b), ("c", c), ("d", d)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_states(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @classmethod
    def first_order(cls, gain: float, pole: float, n_inputs: int = 1,
                    stability_margin: float = DEFAULT_STABILITY_MARGIN) -> "AgentModel":
        """gain/(s + pole) applied to the sum of the inputs."""
        if pole <= 0:
            raise ModelError(f"first-order pole must be positive, got {pole}")
        return cls(
            a=[[-float(pole)]],
            b=[[1.0] * int(n_inputs)],
            c=[[float(gain)]],
            d=[[0.0] * int(n_inputs)],
            stability_margin=stability_margin,
        )

    @classmethod
    def static(cls, d_row: Sequence[float]) -> "AgentModel":
        """Memoryless model y = d_row @ v."""
        row = [float(x) for x in d_row]
        return cls(
            a=np.zeros((0, 0)),
            b=np.zeros((0, len(row))),
            c=np.zeros((1, 0)),
            d=[row],
        )


@dataclass(frozen=True)
class FrequencyResponse:
    """Value of a transfer matrix at a single frequency (rad/s)."""

    omega: float
    value: np.ndarray


def agent_response(agent: AgentModel, omegas) -> np.ndarray:
    """c (jwI - a)^-1 b + d for each frequency, one row per frequency."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    nx, mi = agent.n_states, agent.n_inputs
    if nx == 0:
        return np.tile(agent.d[0].astype(complex), (len(w), 1))
    lhs = 1j * w[:, None, None] * np.eye(nx) - agent.a[None, :, :]
    x = np.linalg.solve(lhs, np.broadcast_to(agent.b, (len(w), nx, mi)))
    resp = agent.c[None, :, :] @ x + agent.d[None, :, :]
    if not np.all(np.isfinite(resp)):
        raise NumericalError("frequency response overflowed; resolvent is ill-conditioned")
    return resp[:, 0, :]


def freq_response_agent(agent: AgentModel, omega: float) -> FrequencyResponse:
    """Single-frequency response as a 1 x m_i row."""
    return FrequencyResponse(omega=float(omega), value=agent_response(agent, [omega]))


def t_matrix(agents: Sequence[AgentModel]) -> np.ndarray:
    """Constant 0/1 matrix copying each agent output to its m_i coordinates."""
    sizes = [ag.n_inputs for ag in agents]
    t = np.zeros((sum(sizes), len(agents)))
    off = 0
    for i, mi in enumerate(sizes):
        t[off:off + mi, i] = 1.0
        off += mi
    return t


def assemble_block_diagonal(agents: Sequence[AgentModel], omegas):
    """Stack the agent responses on the global coordinate layout.

    Returns ``(hval, tmat, fval)`` where ``hval`` is (F, n, 2m) with agent i's
    row supported on its own coordinates, ``tmat`` is the constant (2m, n)
    copy matrix, and ``fval = I - tmat @ hval``.
    """
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    sizes = [ag.n_inputs for ag in agents]
    total = sum(sizes)
    hval = np.zeros((len(w), len(agents), total), dtype=complex)
    off = 0
    for i, ag in enumerate(agents):
        hval[:, i, off:off + sizes[i]] = agent_response(ag, w)
        off += sizes[i]
    tmat = t_matrix(agents)
    fval = np.eye(total)[None, :, :] - tmat[None, :, :] @ hval
    return hval, tmat, fval


def coprime_factors(structure: StructureMatrices, agents: Sequence[AgentModel], omegas):
    """Stable factor pair of the ideal loop: numerator ``hval`` and
    denominator ``routing - tmat @ hval`` evaluated on the grid."""
    hval, tmat, _ = assemble_block_diagonal(agents, omegas)
    if hval.shape[2] != structure.size:
        raise ModelError(
            f"agents provide {hval.shape[2]} coordinates, structure has {structure.size}"
        )
    mval = structure.routing.astype(float)[None, :, :] - tmat[None, :, :] @ hval
    return hval, mval


def coprime_min_singular(structure: StructureMatrices, agents: Sequence[AgentModel], omegas):
    """Smallest singular value of the denominator factor over the grid.

    A zero crossing contradicts a stable nominal verdict; used as a
    frequency-domain cross check of the eigenvalue test.
    """
    _, mval = coprime_factors(structure, agents, omegas)
    svals = np.linalg.svd(mval, compute_uv=False)
    smin = svals[:, -1]
    idx = int(np.argmin(smin))
    return float(smin[idx]), float(np.atleast_1d(omegas)[idx])


@dataclass(frozen=True)
class NominalLoop:
    """Ideal-link closed loop: block-diagonal agents under v = routing @ tmat @ y."""

    acl: np.ndarray
    structure: StructureMatrices
    agents: tuple[AgentModel, ...]


def build_nominal_loop(structure: StructureMatrices, agents: Sequence[AgentModel]) -> NominalLoop:
    sizes = [ag.n_inputs for ag in agents]
    if sum(sizes) != structure.size:
        raise ModelError(
            f"agents provide {sum(sizes)} coordinates, structure has {structure.size}"
        )
    a_blk = scipy.linalg.block_diag(*(ag.a for ag in agents)) if agents else np.zeros((0, 0))
    a_blk = np.atleast_2d(a_blk)
    nx = a_blk.shape[0]
    b_blk = np.zeros((nx, structure.size))
    c_blk = np.zeros((len(agents), nx))
    d_blk = np.zeros((len(agents), structure.size))
    xoff = coff = 0
    for i, ag in enumerate(agents):
        b_blk[xoff:xoff + ag.n_states, coff:coff + ag.n_inputs] = ag.b
        c_blk[i, xoff:xoff + ag.n_states] = ag.c[0]
        d_blk[i, coff:coff + ag.n_inputs] = ag.d[0]
        xoff += ag.n_states
        coff += ag.n_inputs

    pt = structure.routing.astype(float) @ t_matrix(agents)
    loop = np.eye(structure.size) - pt @ d_blk
    svals = np.linalg.svd(loop, compute_uv=False)
    if svals[-1] <= 1e-12 * max(1.0, svals[0]):
        raise AlgebraicLoopError(
            f"static loop is singular (sigma_min = {svals[-1]:.2e}); "
            "the ideal interconnection is ill-posed"
        )
    gain = np.linalg.solve(loop, pt @ c_blk)
    acl = a_blk + b_blk @ gain
    return NominalLoop(acl=acl, structure=structure, agents=tuple(agents))


@dataclass(frozen=True)
class NominalResult:
    """Verdict of the ideal-link stability check."""

    stable: bool
    eigenvalues: np.ndarray
    offending: complex | None

    def to_dict(self) -> dict:
        out = {"stable": bool(self.stable)}
        if self.eigenvalues.size:
            out["max_real_part"] = float(np.max(self.eigenvalues.real))
        if self.offending is not None:
            out["offending_eigenvalue"] = [float(self.offending.real), float(self.offending.imag)]
        return out


def nominal_stability_check(loop: NominalLoop) -> NominalResult:
    """Stable iff every closed-loop eigenvalue has negative real part."""
    if loop.acl.size == 0:
        return NominalResult(stable=True, eigenvalues=np.zeros(0, dtype=complex), offending=None)
    eigs = np.linalg.eigvals(loop.acl)
    worst = eigs[int(np.argmax(eigs.real))]
    if worst.real < 0:
        return NominalResult(stable=True, eigenvalues=eigs, offending=None)
    return NominalResult(stable=False, eigenvalues=eigs, offending=complex(worst))


@dataclass(frozen=True)
class FrequencyGrid:
    """Logarithmic frequency grid with an optional zero point.

    The certificate conditions quantify over all frequencies; a finite grid is
    a documented soundness gap, mitigated by adaptive refinement around the
    worst frequency (see the certify module).
    """

    omega_min: float = 1e-3
    omega_max: float = 1e3
    points: int = 400
    include_zero: bool = True
    extra: tuple[float, ...] = ()

    def omegas(self) -> np.ndarray:
        if self.omega_min <= 0 or self.omega_max <= self.omega_min:
            raise ModelError("grid needs 0 < omega_min < omega_max")
        if self.points < 2:
            raise ModelError("grid needs at least 2 points")
        w = np.geomspace(self.omega_min, self.omega_max, self.points)
        parts = [w, np.asarray(self.extra, dtype=float)]
        if self.include_zero:
            parts.append(np.zeros(1))
        return np.unique(np.concatenate(parts))
