"""Problem files: parsing, validation, writing, and solver-input construction.

A problem is a single YAML document::

    graph:
      vertices: 2
      edges: [[1, 2]]
      # optional enumeration overrides:
      # neighbor_order: {1: [2], 2: [1]}
      # edge_order: [[1, 2]]
    agents:
      default: {gain: 0.5, pole: 1.0}      # gain/(s+pole) summing the inputs
      # or per vertex, possibly full state space:
      # 2: {a: [[-1.0]], b: [[1.0]], c: [[0.5]], d: [[0.0]]}
    uncertainty:
      default: {class: gain_bounded, radius: 0.2}
      # or a tabulated multiplier:
      # 2: {class: user_table, omega: [...], phi1: [...], phi2: [...], phi3: [...]}
    grid: {omega_min: 1.0e-3, omega_max: 1.0e+3, points: 400, include_zero: true}
    tolerances: {eps_floor: 1.0e-6}

Matrices are row-major nested lists; complex entries are written as
``[re, im]`` pairs; frequencies are rad/s.  Validation collects every error
(with a path like ``/agents/2/b``) instead of stopping at the first.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import graph as graphs
from . import lti, multipliers
from .errors import GraphError, ModelError, SpecError


@dataclass(frozen=True)
class GraphConfig:
    vertices: int
    edges: tuple[tuple[int, int], ...]
    neighbor_order: tuple[tuple[int, tuple[int, ...]], ...] | None = None
    edge_order: tuple[tuple[int, int], ...] | None = None


@dataclass(frozen=True)
class AgentConfig:
    """First-order shorthand (gain, pole), static feedthrough (d only),
    or full state-space lists."""

    gain: float | None = None
    pole: float | None = None
    a: tuple | None = None
    b: tuple | None = None
    c: tuple | None = None
    d: tuple | None = None

    @property
    def kind(self) -> str:
        if self.gain is not None:
            return "first_order"
        return "static" if self.a is None else "state_space"


@dataclass(frozen=True)
class UncertaintyConfig:
    kind: str = "gain_bounded"
    radius: float | None = None
    omega: tuple | None = None
    phi1: tuple | None = None
    phi2: tuple | None = None
    phi3: tuple | None = None


@dataclass(frozen=True)
class GridConfig:
    omega_min: float = 1e-3
    omega_max: float = 1e3
    points: int = 400
    include_zero: bool = True
    extra: tuple[float, ...] = ()


@dataclass(frozen=True)
class Tolerances:
    eps_floor: float = 1e-6
    bisect_tol: float = 1e-10
    feas_tol: float = 1e-11
    stability_margin: float = 1e-9
    hermitian_tol: float = 1e-12
    refine_rel_tol: float = 0.01
    refine_max_rounds: int = 8


@dataclass(frozen=True)
class NetworkSpec:
    """Fully resolved problem description (defaults already applied)."""

    graph: GraphConfig
    agents: tuple[AgentConfig, ...]
    uncertainty: tuple[UncertaintyConfig, ...]
    grid: GridConfig = GridConfig()
    tolerances: Tolerances = Tolerances()


def _deep_tuple(x):
    if isinstance(x, (list, tuple)):
        return tuple(_deep_tuple(v) for v in x)
    return x


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, path: str, message: str):
        self.errors.append(f"{path}: {message}")

    def number(self, payload: dict, path: str, key: str, default=None, required=False):
        if key not in payload:
            if required:
                self.add(f"{path}/{key}", "missing required value")
            return default
        value = payload[key]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.add(f"{path}/{key}", f"expected a number, got {value!r}")
            return default
        return value


def _parse_graph(payload: Any, col: _Collector) -> GraphConfig | None:
    if not isinstance(payload, dict):
        col.add("/graph", "must be a mapping")
        return None
    n = payload.get("vertices")
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        col.add("/graph/vertices", f"expected an integer >= 2, got {n!r}")
        return None
    edges_raw = payload.get("edges")
    if not isinstance(edges_raw, list) or not edges_raw:
        col.add("/graph/edges", "expected a non-empty list of [i, j] pairs")
        return None
    edges = []
    for idx, pair in enumerate(edges_raw):
        if (not isinstance(pair, list)) or len(pair) != 2 or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in pair
        ):
            col.add(f"/graph/edges/{idx}", f"expected [i, j] with integer vertices, got {pair!r}")
            return None
        edges.append(tuple(pair))

    nbr = payload.get("neighbor_order")
    nbr_cfg = None
    if nbr is not None:
        if not isinstance(nbr, dict):
            col.add("/graph/neighbor_order", "must map vertex -> ordered neighbour list")
        else:
            try:
                nbr_cfg = tuple(sorted((int(v), _deep_tuple(row)) for v, row in nbr.items()))
            except (ValueError, TypeError):
                col.add("/graph/neighbor_order", "keys must be vertex numbers")
                return None
    eorder = payload.get("edge_order")
    eorder_cfg = _deep_tuple(eorder) if eorder is not None else None

    cfg = GraphConfig(
        vertices=n, edges=tuple(edges), neighbor_order=nbr_cfg, edge_order=eorder_cfg
    )
    try:
        build_graph(cfg)
    except (GraphError, ValueError, TypeError) as exc:
        col.add("/graph", str(exc))
        return None
    return cfg


def _parse_complex_entry(value, path: str, col: _Collector) -> complex:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return complex(value)
    if (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)
    ):
        return complex(value[0], value[1])
    col.add(path, f"expected a number or [re, im] pair, got {value!r}")
    return 0j


def _parse_agent(payload: Any, path: str, col: _Collector) -> AgentConfig | None:
    if not isinstance(payload, dict):
        col.add(path, "must be a mapping")
        return None
    if "gain" in payload or "pole" in payload:
        gain = col.number(payload, path, "gain", required=True)
        pole = col.number(payload, path, "pole", required=True)
        if gain is None or pole is None:
            return None
        if pole <= 0:
            col.add(f"{path}/pole", f"must be positive, got {pole}")
            return None
        return AgentConfig(gain=float(gain), pole=float(pole))
    if "a" not in payload and "d" in payload:
        return AgentConfig(d=_deep_tuple(payload["d"]))
    missing = [key for key in ("a", "b", "c", "d") if key not in payload]
    if missing:
        col.add(path, f"state-space agent is missing {missing}")
        return None
    return AgentConfig(
        a=_deep_tuple(payload["a"]),
        b=_deep_tuple(payload["b"]),
        c=_deep_tuple(payload["c"]),
        d=_deep_tuple(payload["d"]),
    )


def _parse_uncertainty(payload: Any, path: str, col: _Collector) -> UncertaintyConfig | None:
    if not isinstance(payload, dict):
        col.add(path, "must be a mapping")
        return None
    kind = payload.get("class", "gain_bounded")
    if kind in ("gain_bounded", "diagonal_dynamic_norm_bound"):
        radius = col.number(payload, path, "radius", required=True)
        if radius is None:
            return None
        if radius < 0:
            col.add(f"{path}/radius", f"must be nonnegative, got {radius}")
            return None
        return UncertaintyConfig(kind="gain_bounded", radius=float(radius))
    if kind == "user_table":
        missing = [key for key in ("omega", "phi1", "phi2", "phi3") if key not in payload]
        if missing:
            col.add(path, f"user_table is missing {missing}")
            return None
        return UncertaintyConfig(
            kind="user_table",
            omega=_deep_tuple(payload["omega"]),
            phi1=_deep_tuple(payload["phi1"]),
            phi2=_deep_tuple(payload["phi2"]),
            phi3=_deep_tuple(payload["phi3"]),
        )
    col.add(f"{path}/class", f"unknown uncertainty class {kind!r}")
    return None


_MISSING = object()


def _resolve_per_vertex(payload: Any, n: int, section: str, parse, col: _Collector):
    """Apply a ``default`` entry and per-vertex overrides to vertices 1..n."""
    if not isinstance(payload, dict):
        col.add(f"/{section}", "must be a mapping with 'default' and/or vertex keys")
        return None
    default_cfg = _MISSING
    if "default" in payload:
        default_cfg = parse(payload["default"], f"/{section}/default", col)
    out: list = [default_cfg] * n
    for key, value in payload.items():
        if key == "default":
            continue
        if not isinstance(key, int) or isinstance(key, bool) or not 1 <= key <= n:
            col.add(f"/{section}/{key}", f"unknown vertex {key!r}")
            continue
        out[key - 1] = parse(value, f"/{section}/{key}", col)
    bad = False
    for v in range(1, n + 1):
        if out[v - 1] is _MISSING:
            col.add(f"/{section}/{v}", "no entry and no default given")
            bad = True
        elif out[v - 1] is None:
            bad = True  # parse error already recorded
    return None if bad else tuple(out)


def parse_network_spec(payload: Any, source: str = "<spec>") -> NetworkSpec:
    """Validate a parsed document; raises SpecError listing every problem."""
    col = _Collector()
    if not isinstance(payload, dict):
        raise SpecError(["/: document must be a mapping"], source)

    gcfg = _parse_graph(payload.get("graph"), col) if "graph" in payload else None
    if "graph" not in payload:
        col.add("/graph", "missing required section")

    agents = uncertainty = None
    if gcfg is not None:
        n = gcfg.vertices
        if "agents" in payload:
            agents = _resolve_per_vertex(payload["agents"], n, "agents", _parse_agent, col)
        else:
            col.add("/agents", "missing required section")
        if "uncertainty" in payload:
            uncertainty = _resolve_per_vertex(
                payload["uncertainty"], n, "uncertainty", _parse_uncertainty, col
            )
        else:
            col.add("/uncertainty", "missing required section")

    grid = GridConfig()
    if "grid" in payload:
        gp = payload["grid"]
        if not isinstance(gp, dict):
            col.add("/grid", "must be a mapping")
        else:
            known = {f: getattr(GridConfig, f) for f in GridConfig.__dataclass_fields__}
            vals = {}
            for key, value in gp.items():
                if key not in known:
                    col.add(f"/grid/{key}", "unknown grid parameter")
                elif key == "extra":
                    vals[key] = _deep_tuple(value)
                else:
                    vals[key] = value
            try:
                grid = GridConfig(**vals)
                lti.FrequencyGrid(**asdict(grid)).omegas()
            except (TypeError, ModelError) as exc:
                col.add("/grid", str(exc))
                grid = GridConfig()

    tol = Tolerances()
    if "tolerances" in payload:
        tp = payload["tolerances"]
        if not isinstance(tp, dict):
            col.add("/tolerances", "must be a mapping")
        else:
            vals = {}
            for key, value in tp.items():
                if key not in Tolerances.__dataclass_fields__:
                    col.add(f"/tolerances/{key}", "unknown tolerance")
                else:
                    vals[key] = value
            try:
                tol = Tolerances(**vals)
            except TypeError as exc:
                col.add("/tolerances", str(exc))

    if col.errors:
        raise SpecError(col.errors, source)

    spec = NetworkSpec(
        graph=gcfg, agents=agents, uncertainty=uncertainty, grid=grid, tolerances=tol
    )
    _validate_models(spec, col)
    if col.errors:
        raise SpecError(col.errors, source)
    return spec


def _validate_models(spec: NetworkSpec, col: _Collector):
    """Dimension and stability checks that need the graph in hand."""
    g = build_graph(spec.graph)
    for v in range(1, g.n + 1):
        try:
            _agent_model(spec.agents[v - 1], g.degree(v), spec.tolerances.stability_margin)
        except ModelError as exc:
            col.add(f"/agents/{v}", str(exc))
        try:
            _multiplier(spec.uncertainty[v - 1], g.degree(v), spec.tolerances.hermitian_tol)
        except ModelError as exc:
            col.add(f"/uncertainty/{v}", str(exc))


def build_graph(cfg: GraphConfig) -> graphs.NetworkGraph:
    nbr = dict(cfg.neighbor_order) if cfg.neighbor_order else None
    return graphs.build_graph(cfg.vertices, cfg.edges, nbr, cfg.edge_order)


def _agent_model(cfg: AgentConfig, m_i: int, margin: float) -> lti.AgentModel:
    if cfg.kind == "first_order":
        return lti.AgentModel.first_order(cfg.gain, cfg.pole, m_i, stability_margin=margin)
    if cfg.kind == "static":
        d = np.array(cfg.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != 1:
            raise ModelError(f"static feedthrough must be a single row, got shape {d.shape}")
        model = lti.AgentModel.static(d[0])
    else:
        try:
            nx = len(cfg.a)
            model = lti.AgentModel(
                a=np.array(cfg.a, dtype=float).reshape(nx, nx),
                b=np.array(cfg.b, dtype=float).reshape(nx, -1),
                c=np.array(cfg.c, dtype=float).reshape(1, nx),
                d=np.array(cfg.d, dtype=float).reshape(1, -1),
                stability_margin=margin,
            )
        except (ValueError, TypeError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"bad state-space matrices: {exc}") from exc
    if model.n_inputs != m_i:
        raise ModelError(f"agent has {model.n_inputs} inputs but the vertex has {m_i} neighbours")
    return model


def _multiplier(cfg: UncertaintyConfig, m_i: int, tol: float) -> multipliers.MultiplierBlocks:
    if cfg.kind == "gain_bounded":
        return multipliers.gain_bounded_deviation(m_i, cfg.radius)
    col = _Collector()
    omega = [float(w) for w in cfg.omega]
    phi1 = [[[_parse_complex_entry(w, "phi1", col)]] for w in cfg.phi1]
    phi2 = [[[(lambda e: _parse_complex_entry(e, "phi2", col))(e) for e in row]] for row in cfg.phi2]
    phi3 = [
        [[_parse_complex_entry(e, "phi3", col) for e in row] for row in mat] for mat in cfg.phi3
    ]
    if col.errors:
        raise ModelError("; ".join(col.errors))
    mult = multipliers.user_table(omega, phi1, phi2, phi3, tol=tol)
    if mult.n_inputs != m_i:
        raise ModelError(f"table covers {mult.n_inputs} links but the vertex has {m_i}")
    return mult


def build_agents(spec: NetworkSpec, g: graphs.NetworkGraph | None = None):
    g = g if g is not None else build_graph(spec.graph)
    return tuple(
        _agent_model(spec.agents[v - 1], g.degree(v), spec.tolerances.stability_margin)
        for v in range(1, g.n + 1)
    )


def build_multipliers(spec: NetworkSpec, g: graphs.NetworkGraph | None = None):
    g = g if g is not None else build_graph(spec.graph)
    return tuple(
        _multiplier(spec.uncertainty[v - 1], g.degree(v), spec.tolerances.hermitian_tol)
        for v in range(1, g.n + 1)
    )


def frequency_grid(spec: NetworkSpec) -> lti.FrequencyGrid:
    return lti.FrequencyGrid(**asdict(spec.grid))


@dataclass(frozen=True)
class Problem:
    """Solver-ready inputs derived from a NetworkSpec."""

    spec: NetworkSpec
    graph: graphs.NetworkGraph
    structure: graphs.StructureMatrices
    agents: tuple[lti.AgentModel, ...]
    multipliers: tuple[multipliers.MultiplierBlocks, ...]
    grid: lti.FrequencyGrid
    tolerances: Tolerances


def build_problem(spec: NetworkSpec) -> Problem:
    g = build_graph(spec.graph)
    return Problem(
        spec=spec,
        graph=g,
        structure=graphs.build_structure(g),
        agents=build_agents(spec, g),
        multipliers=build_multipliers(spec, g),
        grid=frequency_grid(spec),
        tolerances=spec.tolerances,
    )


def load_network_spec(path) -> NetworkSpec:
    """Load and validate a YAML problem file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError([f"/: cannot read file ({exc})"], str(path)) from exc
    try:
        payload = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise SpecError([f"/: YAML parse error{where}: {exc}"], str(path)) from exc
    return parse_network_spec(payload, source=str(path))


def _untuple(x):
    if isinstance(x, tuple):
        return [_untuple(v) for v in x]
    return x


def spec_to_dict(spec: NetworkSpec) -> dict:
    """Plain-python document equivalent to the problem (defaults expanded)."""
    gcfg: dict[str, Any] = {
        "vertices": spec.graph.vertices,
        "edges": _untuple(spec.graph.edges),
    }
    if spec.graph.neighbor_order is not None:
        gcfg["neighbor_order"] = {v: _untuple(row) for v, row in spec.graph.neighbor_order}
    if spec.graph.edge_order is not None:
        gcfg["edge_order"] = _untuple(spec.graph.edge_order)

    agents: dict[Any, Any] = {}
    for v, cfg in enumerate(spec.agents, start=1):
        if cfg.kind == "first_order":
            agents[v] = {"gain": cfg.gain, "pole": cfg.pole}
        elif cfg.kind == "static":
            agents[v] = {"d": _untuple(cfg.d)}
        else:
            agents[v] = {
                "a": _untuple(cfg.a), "b": _untuple(cfg.b),
                "c": _untuple(cfg.c), "d": _untuple(cfg.d),
            }
    unc: dict[Any, Any] = {}
    for v, cfg in enumerate(spec.uncertainty, start=1):
        if cfg.kind == "gain_bounded":
            unc[v] = {"class": "gain_bounded", "radius": cfg.radius}
        else:
            unc[v] = {
                "class": "user_table",
                "omega": _untuple(cfg.omega), "phi1": _untuple(cfg.phi1),
                "phi2": _untuple(cfg.phi2), "phi3": _untuple(cfg.phi3),
            }
    return {
        "graph": gcfg,
        "agents": agents,
        "uncertainty": unc,
        "grid": {**asdict(spec.grid), "extra": _untuple(spec.grid.extra)},
        "tolerances": asdict(spec.tolerances),
    }


def write_network_spec(spec: NetworkSpec, path) -> None:
    """Write the problem file so that loading it reproduces the object exactly."""
    Path(path).write_text(yaml.safe_dump(spec_to_dict(spec), sort_keys=False))
