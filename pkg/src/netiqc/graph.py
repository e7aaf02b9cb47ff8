"""Network graphs, their enumerations, and the exact link-structure matrices.

Agents are the vertices of a simple undirected graph.  Every edge carries one
link in each direction, and each agent owns one global input coordinate per
neighbour.  Coordinates are laid out contiguously agent by agent, so a graph
with m edges induces 2m global coordinates.  The matrices built here (routing
permutation, incidence, Laplacian and its rank-one edge terms, per-link 0/1
projectors) are exact integer arrays and are never exposed to floating-point
round-off.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import GraphError

Edge = tuple[int, int]


def _as_edge(pair) -> Edge:
    try:
        i, j = pair
        i, j = int(i), int(j)
    except (TypeError, ValueError) as exc:
        raise GraphError(f"edge {pair!r} is not a pair of vertices") from exc
    if i == j:
        raise GraphError(f"self-loop at vertex {i} is not allowed")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class NetworkGraph:
    """Simple undirected graph with fixed, overridable enumerations.

    Vertices are labelled 1..n.  ``neighbor_order[i-1]`` lists the neighbours
    of vertex i in local input order: position k-1 names the neighbour wired
    to the agent's k-th input.  ``edge_order[k-1]`` is the k-th edge of the
    global edge enumeration.
    """

    n: int
    edges: tuple[Edge, ...]
    neighbor_order: tuple[tuple[int, ...], ...]
    edge_order: tuple[Edge, ...]

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(nbrs) for nbrs in self.neighbor_order)

    @cached_property
    def offsets(self) -> tuple[int, ...]:
        """First global coordinate (0-based) owned by each agent."""
        out, acc = [], 0
        for deg in self.degrees:
            out.append(acc)
            acc += deg
        return tuple(out)

    @cached_property
    def _edge_index(self) -> dict[Edge, int]:
        return {e: k + 1 for k, e in enumerate(self.edge_order)}

    def degree(self, i: int) -> int:
        return self.degrees[i - 1]

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.neighbor_order[i - 1]

    def local_index(self, i: int, j: int) -> int:
        """1-based position of neighbour j in agent i's input enumeration."""
        try:
            return self.neighbor_order[i - 1].index(j) + 1
        except ValueError as exc:
            raise GraphError(f"{{{i},{j}}} is not an edge") from exc

    def edge_index(self, i: int, j: int) -> int:
        """1-based position of edge {i,j} in the global edge enumeration."""
        try:
            return self._edge_index[_as_edge((i, j))]
        except KeyError as exc:
            raise GraphError(f"{{{i},{j}}} is not an edge") from exc

    def global_coord(self, i: int, k: int) -> int:
        """0-based global coordinate of agent i's k-th input (k is 1-based)."""
        return self.offsets[i - 1] + k - 1

    def agent_coords(self, i: int) -> np.ndarray:
        """0-based global coordinates owned by agent i."""
        off = self.offsets[i - 1]
        return np.arange(off, off + self.degrees[i - 1])


def build_graph(
    n: int,
    edges: Iterable,
    neighbor_order: Mapping[int, Sequence[int]] | None = None,
    edge_order: Sequence | None = None,
) -> NetworkGraph:
    """Validate and canonicalize a simple graph with its enumerations.

    Defaults: neighbours enumerated by ascending vertex label, edges by
    ascending lexicographic pair.  Both can be overridden (e.g. to match an
    external tool); overrides must be permutations of the defaults.
    """
    if int(n) != n or n < 2:
        raise GraphError(f"vertex count must be an integer >= 2, got {n!r}")
    n = int(n)

    canon: list[Edge] = []
    seen: set[Edge] = set()
    for pair in edges:
        e = _as_edge(pair)
        if not (1 <= e[0] <= n and 1 <= e[1] <= n):
            raise GraphError(f"edge {e} has a vertex outside 1..{n}")
        if e in seen:
            raise GraphError(f"duplicate edge {e}")
        seen.add(e)
        canon.append(e)
    canon.sort()

    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j in canon:
        nbrs[i - 1].append(j)
        nbrs[j - 1].append(i)
    for v in range(1, n + 1):
        if not nbrs[v - 1]:
            raise GraphError(f"vertex {v} has no edges (m_i >= 1 violated)")

    order: list[tuple[int, ...]] = [tuple(sorted(row)) for row in nbrs]
    if neighbor_order:
        for v, row in neighbor_order.items():
            v = int(v)
            if not 1 <= v <= n:
                raise GraphError(f"neighbor_order given for unknown vertex {v}")
            row = tuple(int(j) for j in row)
            if sorted(row) != sorted(order[v - 1]):
                raise GraphError(
                    f"neighbor_order for vertex {v} must be a permutation of "
                    f"{sorted(order[v - 1])}, got {list(row)}"
                )
            order[v - 1] = row

    eorder = tuple(canon)
    if edge_order is not None:
        eorder = tuple(_as_edge(p) for p in edge_order)
        if sorted(eorder) != canon:
            raise GraphError("edge_order must be a permutation of the edge set")

    return NetworkGraph(n=n, edges=tuple(canon), neighbor_order=tuple(order), edge_order=eorder)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StructureMatrices:
    """Exact integer matrices of the pairwise link structure.

    ``routing`` is the symmetric permutation delivering each agent's output to
    its neighbours' inputs; it is the adjacency matrix of the 1-regular graph
    whose 2m vertices are the global coordinates and whose m edges pair the
    two coordinates of each network edge.  ``laplacian`` is the Laplacian of
    that graph, equal to ``incidence @ incidence.T`` and to the sum of the
    rank-one ``edge_laplacians``.  ``link_projectors[k]`` is the diagonal 0/1
    matrix selecting the two coordinates of edge k+1.
    """

    routing: np.ndarray
    incidence: np.ndarray
    laplacian: np.ndarray
    edge_laplacians: tuple[np.ndarray, ...]
    link_projectors: tuple[np.ndarray, ...]
    offsets: tuple[int, ...]
    link_pairs: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return self.routing.shape[0]

    @property
    def n_links(self) -> int:
        return self.incidence.shape[1]

    def projector_diag(self, k: int) -> np.ndarray:
        """Diagonal of the k-th (1-based) link projector as a 0/1 vector."""
        return np.diag(self.link_projectors[k - 1])


def build_structure(graph: NetworkGraph) -> StructureMatrices:
    """Build all structure matrices for the pairwise sub-system layout.

    Each incidence column gets +1 on the coordinate owned by the
    lower-numbered endpoint and -1 on the higher one; the orientation is a
    free choice and is fixed this way for reproducibility.
    """
    m = graph.m
    size = 2 * m
    incidence = np.zeros((size, m), dtype=np.int64)
    pairs: list[tuple[int, int]] = []
    for k0, (i, j) in enumerate(graph.edge_order):
        r = graph.global_coord(i, graph.local_index(i, j))
        s = graph.global_coord(j, graph.local_index(j, i))
        incidence[r, k0] = 1
        incidence[s, k0] = -1
        pairs.append((r, s))

    laplacian = incidence @ incidence.T
    edge_laps = tuple(
        _frozen(np.outer(incidence[:, k0], incidence[:, k0])) for k0 in range(m)
    )
    projectors = tuple(_frozen(np.diag(incidence[:, k0] ** 2)) for k0 in range(m))
    routing = np.eye(size, dtype=np.int64) - laplacian

    return StructureMatrices(
        routing=_frozen(routing),
        incidence=_frozen(incidence),
        laplacian=_frozen(laplacian),
        edge_laplacians=edge_laps,
        link_projectors=projectors,
        offsets=graph.offsets,
        link_pairs=tuple(pairs),
    )


def routing_entry(graph: NetworkGraph, i: int, k: int, r: int) -> int:
    """Single entry of the routing permutation, from the enumerations alone.

    The row is the one owned by agent i's k-th input and r is the 1-based
    column.  Returns 1 exactly when r is the coordinate that holds the
    neighbour's copy of the shared edge, so assembling all entries reproduces
    ``build_structure(graph).routing``.
    """
    if not 1 <= i <= graph.n:
        raise GraphError(f"agent index {i} outside 1..{graph.n}")
    if not 1 <= k <= graph.degree(i):
        raise GraphError(f"local link index {k} outside 1..{graph.degree(i)}")
    if not 1 <= r <= 2 * graph.m:
        raise GraphError(f"coordinate {r} outside 1..{2 * graph.m}")
    j = graph.neighbors(i)[k - 1]
    col = graph.global_coord(j, graph.local_index(j, i)) + 1
    return 1 if r == col else 0


def link_coordinates(graph: NetworkGraph, k: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """1-based global coordinates owned by the two endpoints of edge k.

    Only these m_i + m_j coordinates can enter the k-th link condition, which
    is what lets the per-link check run on a reduced principal submatrix.
    """
    if not 1 <= k <= graph.m:
        raise GraphError(f"edge index {k} outside 1..{graph.m}")
    i, j = graph.edge_order[k - 1]
    ci = tuple(int(c) + 1 for c in graph.agent_coords(i))
    cj = tuple(int(c) + 1 for c in graph.agent_coords(j))
    return ci, cj


def link_support(graph: NetworkGraph, k: int) -> np.ndarray:
    """0-based sorted union of the endpoint coordinates of edge k."""
    ci, cj = link_coordinates(graph, k)
    return np.array(sorted(c - 1 for c in ci + cj), dtype=int)
