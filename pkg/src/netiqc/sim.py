"""Time-domain stepping of the uncertain network loop.

The loop solved per step is ``v = routing @ w + d_v`` with ``w`` the link
outputs driven by the copied agent outputs, matching the block diagram the
certificates reason about.  Agents and linear links are discretized exactly
by zero-order hold; static nonlinear links are stepped pointwise and require
strictly proper agents (no algebraic loop through a nonlinearity).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import AlgebraicLoopError, ModelError, SimulationError
from .graph import StructureMatrices
from .lti import AgentModel, t_matrix


@dataclass(frozen=True)
class ConstantLink:
    """Link ``w = (1 + delta) * input``: a static deviation from the unity link."""

    delta: float

    def gain(self) -> float:
        return abs(self.delta)

    def describe(self) -> dict:
        return {"kind": "constant", "delta": self.delta}


@dataclass(frozen=True)
class FirstOrderLink:
    """Link ``1 + amp/(s + pole)``: a low-pass deviation of gain |amp|/pole."""

    amp: float
    pole: float

    def __post_init__(self):
        if self.pole <= 0:
            raise ModelError(f"link pole must be positive, got {self.pole}")

    def gain(self) -> float:
        return abs(self.amp) / self.pole

    def describe(self) -> dict:
        return {"kind": "first_order", "amp": self.amp, "pole": self.pole}


@dataclass(frozen=True)
class SectorLink:
    """Link ``w = y + slope * tanh(y)``: a memoryless nonlinear deviation
    whose incremental-free gain is at most |slope|."""

    slope: float

    def gain(self) -> float:
        return abs(self.slope)

    def describe(self) -> dict:
        return {"kind": "sector", "slope": self.slope}


LinkModel = ConstantLink | FirstOrderLink | SectorLink


@dataclass(frozen=True)
class UncertaintySample:
    """One concrete realization of every link, ordered by global coordinate."""

    links: tuple[LinkModel, ...]

    def gains(self) -> np.ndarray:
        return np.array([lk.gain() for lk in self.links])

    def is_linear(self) -> bool:
        return not any(isinstance(lk, SectorLink) for lk in self.links)

    def describe(self) -> list[dict]:
        return [lk.describe() for lk in self.links]


def ideal_sample(n_coords: int) -> UncertaintySample:
    return UncertaintySample(links=tuple(ConstantLink(0.0) for _ in range(n_coords)))


@dataclass
class SimTrace:
    """Uniformly sampled trajectories of the closed loop."""

    t: np.ndarray
    v: np.ndarray
    w: np.ndarray
    y: np.ndarray
    state_norms: np.ndarray
    dt: float
    diverged: bool = False

    def energy(self) -> float:
        return float((np.sum(self.v**2) + np.sum(self.w**2)) * self.dt)


def zoh(a: np.ndarray, b: np.ndarray, dt: float):
    """Exact zero-order-hold discretization via the augmented exponential."""
    n, m = a.shape[0], b.shape[1]
    if n == 0:
        return a.copy(), b.copy()
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = a
    aug[:n, n:] = b
    phi = scipy.linalg.expm(aug * dt)
    return phi[:n, :n], phi[:n, n:]


def default_dt(agents: Sequence[AgentModel], sample: UncertaintySample | None = None) -> float:
    """1/(50 * w_max) with w_max the largest agent or link pole magnitude."""
    w_max = 1.0
    for ag in agents:
        if ag.n_states:
            w_max = max(w_max, float(np.max(np.abs(np.linalg.eigvals(ag.a)))))
    if sample is not None:
        for lk in sample.links:
            if isinstance(lk, FirstOrderLink):
                w_max = max(w_max, abs(lk.pole))
    return 1.0 / (50.0 * w_max)


class _LoopMatrices:
    """Shared constant matrices of one (structure, agents, sample) closed loop."""

    def __init__(self, structure: StructureMatrices, agents: Sequence[AgentModel],
                 sample: UncertaintySample):
        size = structure.size
        if sum(ag.n_inputs for ag in agents) != size:
            raise ModelError("agents and structure disagree on the coordinate count")
        if len(sample.links) != size:
            raise ModelError(f"sample has {len(sample.links)} links, expected {size}")

        self.structure = structure
        self.agents = tuple(agents)
        self.sample = sample
        self.size = size
        self.routing = structure.routing.astype(float)

        nx = sum(ag.n_states for ag in agents)
        self.nx = nx
        self.a_blk = np.zeros((nx, nx))
        self.b_blk = np.zeros((nx, size))
        self.c_blk = np.zeros((len(agents), nx))
        self.d_blk = np.zeros((len(agents), size))
        xoff = coff = 0
        for i, ag in enumerate(agents):
            self.a_blk[xoff:xoff + ag.n_states, xoff:xoff + ag.n_states] = ag.a
            self.b_blk[xoff:xoff + ag.n_states, coff:coff + ag.n_inputs] = ag.b
            self.c_blk[i, xoff:xoff + ag.n_states] = ag.c[0]
            self.d_blk[i, coff:coff + ag.n_inputs] = ag.d[0]
            xoff += ag.n_states
            coff += ag.n_inputs
        self.tmat = t_matrix(agents)

        # Split links into feedthrough, first-order states, and sector coords.
        self.d_link = np.ones(size)
        self.sector_coords: list[int] = []
        self.sector_slopes: list[float] = []
        filt: list[tuple[int, float, float]] = []
        for c, lk in enumerate(sample.links):
            if isinstance(lk, ConstantLink):
                self.d_link[c] = 1.0 + lk.delta
            elif isinstance(lk, FirstOrderLink):
                filt.append((c, lk.amp, lk.pole))
            else:
                self.sector_coords.append(c)
                self.sector_slopes.append(lk.slope)
        self.n_link_states = len(filt)
        self.link_coords = np.array([c for c, _, _ in filt], dtype=int)
        self.link_amp = np.array([amp for _, amp, _ in filt])
        self.link_pole = np.array([p for _, _, p in filt])
        self.c_link = np.zeros((size, self.n_link_states))
        for idx, (c, amp, _) in enumerate(filt):
            self.c_link[c, idx] = amp

        self.nonlinear = bool(self.sector_coords)
        if self.nonlinear and np.any(self.d_blk):
            raise SimulationError(
                "static nonlinear links need strictly proper agents; "
                "the algebraic loop through the nonlinearity is unsupported"
            )

    def static_loop(self):
        """(I - routing @ D_link @ tmat @ D_agents), singularity-checked."""
        loop = np.eye(self.size) - self.routing @ (
            self.d_link[:, None] * (self.tmat @ self.d_blk)
        )
        svals = np.linalg.svd(loop, compute_uv=False)
        if svals[-1] <= 1e-12 * max(1.0, svals[0]):
            raise AlgebraicLoopError(
                f"static loop is singular (sigma_min = {svals[-1]:.2e})"
            )
        return loop


def closed_loop_matrix(structure: StructureMatrices, agents: Sequence[AgentModel],
                       sample: UncertaintySample) -> np.ndarray:
    """Continuous-time state matrix of the closed loop for an LTI sample.

    Raises for sector (nonlinear) links; useful as an eigenvalue cross check
    of the simulated stability verdict.
    """
    if not sample.is_linear():
        raise ModelError("closed-loop matrix only exists for LTI link samples")
    mats = _LoopMatrices(structure, agents, sample)
    loop = mats.static_loop()
    inv = np.linalg.inv(loop)
    tc = mats.tmat @ mats.c_blk
    td = mats.tmat @ mats.d_blk
    kx = inv @ (mats.routing @ (mats.d_link[:, None] * tc))
    kxi = inv @ (mats.routing @ mats.c_link)
    a_link = -np.diag(mats.link_pole)
    b_link = np.zeros((mats.n_link_states, mats.size))
    b_link[np.arange(mats.n_link_states), mats.link_coords] = 1.0
    top = np.hstack([mats.a_blk + mats.b_blk @ kx, mats.b_blk @ kxi])
    bot = np.hstack([
        b_link @ (tc + td @ kx),
        a_link + b_link @ td @ kxi,
    ])
    return np.vstack([top, bot]) if top.size or bot.size else np.zeros((0, 0))


def _resolve_disturbance(d, steps: int, size: int, name: str) -> np.ndarray:
    if d is None:
        return np.zeros((steps, size))
    d = np.asarray(d, dtype=float)
    if d.shape != (steps, size):
        raise ModelError(f"{name} must have shape ({steps}, {size}), got {d.shape}")
    return d


def simulate(
    structure: StructureMatrices,
    agents: Sequence[AgentModel],
    sample: UncertaintySample | None = None,
    d_v: np.ndarray | None = None,
    d_w: np.ndarray | None = None,
    dt: float | None = None,
    horizon: float = 200.0,
    norm_limit: float | None = None,
) -> SimTrace:
    """Step the uncertain loop from rest under the given disturbances.

    ``d_v`` enters at the agent inputs, ``d_w`` at the link outputs, both as
    (steps, 2m) arrays (None means zero).  With ``norm_limit`` set, stepping
    stops early once the aggregate state norm exceeds it and the trace is
    flagged as diverged.
    """
    sample = sample if sample is not None else ideal_sample(structure.size)
    mats = _LoopMatrices(structure, agents, sample)
    dt = float(dt) if dt is not None else default_dt(agents, sample)
    if dt <= 0:
        raise ModelError(f"time step must be positive, got {dt}")
    steps = max(2, int(round(horizon / dt)))
    dv = _resolve_disturbance(d_v, steps, mats.size, "d_v")
    dw = _resolve_disturbance(d_w, steps, mats.size, "d_w")

    ad, bd = zoh(mats.a_blk, mats.b_blk, dt)
    exp_pole = np.exp(-mats.link_pole * dt)
    ad_link = np.diag(exp_pole)
    bd_gain = np.where(mats.link_pole > 0, (1.0 - exp_pole) / mats.link_pole, dt)

    t = np.arange(steps) * dt
    if mats.nonlinear:
        return _simulate_nonlinear(mats, ad, bd, ad_link, bd_gain, dv, dw, t, dt, norm_limit)
    return _simulate_linear(mats, ad, bd, ad_link, bd_gain, dv, dw, t, dt, norm_limit)


def _simulate_linear(mats, ad, bd, ad_link, bd_gain, dv, dw, t, dt, norm_limit):
    loop = mats.static_loop()
    inv = np.linalg.inv(loop)
    tc = mats.tmat @ mats.c_blk
    td = mats.tmat @ mats.d_blk
    kx = inv @ (mats.routing @ (mats.d_link[:, None] * tc))
    kxi = inv @ (mats.routing @ mats.c_link)
    kdv = inv
    kdw = inv @ mats.routing

    nz = mats.nx + mats.n_link_states
    kz = np.hstack([kx, kxi])                      # v = kz z + kdv d_v + kdw d_w
    ty_z = np.hstack([tc, np.zeros((mats.size, mats.n_link_states))]) + td @ kz
    ty_dv = td @ kdv
    ty_dw = td @ kdw
    b_link = np.zeros((mats.n_link_states, mats.size))
    b_link[np.arange(mats.n_link_states), mats.link_coords] = bd_gain
    fz = np.zeros((nz, nz))
    fz[:mats.nx, :] = ad @ np.hstack([np.eye(mats.nx), np.zeros((mats.nx, mats.n_link_states))]) \
        + bd @ kz
    fz[mats.nx:, :] = b_link @ ty_z
    fz[mats.nx:, mats.nx:] += ad_link
    gz_v = np.vstack([bd @ kdv, b_link @ ty_dv])
    gz_w = np.vstack([bd @ kdw, b_link @ ty_dw])

    steps = len(t)
    zhist = np.zeros((steps, nz))
    norms = np.zeros(steps)
    z = np.zeros(nz)
    dz = dv @ gz_v.T + dw @ gz_w.T
    diverged = False
    last = steps
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps):
            zhist[k] = z
            nrm = float(np.sqrt(z @ z))
            norms[k] = nrm
            if not np.isfinite(nrm):
                if norm_limit is None:
                    raise SimulationError(f"non-finite state at t = {t[k]:.3f}")
                diverged = True
                last = k + 1
                break
            if norm_limit is not None and nrm > norm_limit:
                diverged = True
                last = k + 1
                break
            z = fz @ z + dz[k]

    sl = slice(0, last)
    zh = zhist[sl]
    v = zh @ kz.T + dv[sl] @ kdv.T + dw[sl] @ kdw.T
    y = zh[:, :mats.nx] @ mats.c_blk.T + v @ mats.d_blk.T
    ty = zh @ ty_z.T + dv[sl] @ ty_dv.T + dw[sl] @ ty_dw.T
    w = mats.d_link[None, :] * ty + zh[:, mats.nx:] @ mats.c_link.T + dw[sl]
    if not diverged and not np.all(np.isfinite(v)):
        raise SimulationError("non-finite signal in the simulated trace")
    return SimTrace(t=t[sl], v=v, w=w, y=y, state_norms=norms[sl], dt=dt, diverged=diverged)


def _simulate_nonlinear(mats, ad, bd, ad_link, bd_gain, dv, dw, t, dt, norm_limit):
    steps = len(t)
    size = mats.size
    x = np.zeros(mats.nx)
    xi = np.zeros(mats.n_link_states)
    v = np.zeros((steps, size))
    w = np.zeros((steps, size))
    xs = np.zeros((steps, mats.nx))
    norms = np.zeros(steps)
    sc = np.array(mats.sector_coords, dtype=int)
    slopes = np.array(mats.sector_slopes)
    tc = mats.tmat @ mats.c_blk
    has_states = mats.n_link_states > 0
    exp_pole = np.diag(ad_link)
    nz_dv = np.flatnonzero(np.any(dv, axis=1))
    nz_dw = np.flatnonzero(np.any(dw, axis=1))
    last_dv = int(nz_dv[-1]) if nz_dv.size else -1
    last_dw = int(nz_dw[-1]) if nz_dw.size else -1
    diverged = False
    last = steps
    for k in range(steps):
        xs[k] = x
        nrm = float(np.sqrt(x @ x + xi @ xi))
        norms[k] = nrm
        if not np.isfinite(nrm):
            if norm_limit is None:
                raise SimulationError(f"non-finite state at t = {t[k]:.3f}")
            diverged = True
            last = k + 1
            break
        ty = tc @ x
        wk = mats.d_link * ty
        if has_states:
            wk = wk + mats.c_link @ xi
        wk[sc] = ty[sc] + slopes * np.tanh(ty[sc])
        if k <= last_dw:
            wk = wk + dw[k]
        vk = mats.routing @ wk
        if k <= last_dv:
            vk = vk + dv[k]
        v[k], w[k] = vk, wk
        if norm_limit is not None and nrm > norm_limit:
            diverged = True
            last = k + 1
            break
        x = ad @ x + bd @ vk
        if has_states:
            xi = exp_pole * xi + bd_gain * ty[mats.link_coords]

    sl = slice(0, last)
    y = xs[sl] @ mats.c_blk.T
    return SimTrace(
        t=t[sl], v=v[sl], w=w[sl], y=y, state_norms=norms[sl], dt=dt, diverged=diverged
    )


def simulate_network(
    spec,
    sample: UncertaintySample | None = None,
    d_v: np.ndarray | None = None,
    d_w: np.ndarray | None = None,
    dt: float | None = None,
    horizon: float = 200.0,
    norm_limit: float | None = None,
) -> SimTrace:
    """Convenience wrapper: build the problem from a NetworkSpec and step it."""
    from .netspec import build_problem

    problem = build_problem(spec)
    return simulate(
        problem.structure, problem.agents, sample,
        d_v=d_v, d_w=d_w, dt=dt, horizon=horizon, norm_limit=norm_limit,
    )


def estimate_gain(trace: SimTrace, inputs: np.ndarray) -> float:
    """Ratio of closed-loop output energy to input energy over the horizon.

    Only a lower bound on the true loop gain: finite horizon, finite
    bandwidth, and discretization all bias it downward.
    """
    u = np.asarray(inputs, dtype=float)
    u_norm = float(np.sqrt(np.sum(u**2) * trace.dt))
    if u_norm == 0.0:
        raise ModelError("gain estimate needs a nonzero input")
    out = np.hstack([trace.v, trace.w])
    out_norm = float(np.sqrt(np.sum(out**2) * trace.dt))
    return out_norm / u_norm


def write_trace(trace: SimTrace, path) -> None:
    """Columnar text export: time, then the v coordinates, then the w ones."""
    size = trace.v.shape[1]
    header = "t " + " ".join(f"v{c+1}" for c in range(size)) + " " + \
        " ".join(f"w{c+1}" for c in range(size))
    data = np.column_stack([trace.t, trace.v, trace.w])
    np.savetxt(path, data, header=header)
