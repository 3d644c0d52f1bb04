"""Metric graphs: validation, incidence signs, lengths and shortest paths.

Points on a graph are addressed as ``(edge_id, coordinate)`` where the
coordinate runs from 0 at the edge's tail to ``length`` at its head.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import networkx as nx

TAIL = "tail"
HEAD = "head"


class GraphError(ValueError):
    """Raised for malformed graph input or contract violations."""


@dataclass(frozen=True)
class Edge:
    id: int
    tail: int
    head: int
    length: float


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[str, ...] = ()
    boundary: Tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass(frozen=True)
class Segment:
    """A traversed piece of one edge, from ``start`` to ``stop`` (edge coordinates)."""

    edge_id: int
    start: float
    stop: float

    @property
    def length(self) -> float:
        return abs(self.stop - self.start)


@dataclass(frozen=True)
class Path:
    segments: Tuple[Segment, ...] = ()

    @property
    def length(self) -> float:
        return sum(s.length for s in self.segments)

    def reversed(self) -> "Path":
        return Path(tuple(Segment(s.edge_id, s.stop, s.start) for s in reversed(self.segments)))


@dataclass(frozen=True)
class MetricGraph:
    num_vertices: int
    edges: Tuple[Edge, ...]
    adjacency: Dict[int, Tuple[Tuple[int, str], ...]] = field(compare=False, repr=False)

    @classmethod
    def from_edges(cls, num_vertices: int, edges: Sequence) -> "MetricGraph":
        """Build a graph from ``Edge`` objects or ``(tail, head, length)`` triples.

        Triples get ids in list order. No admissibility check is done here;
        call :func:`validate` for that.
        """
        built = []
        for i, e in enumerate(edges):
            if isinstance(e, Edge):
                built.append(e)
            else:
                tail, head, length = e
                built.append(Edge(i, int(tail), int(head), float(length)))
        ids = [e.id for e in built]
        if len(set(ids)) != len(ids):
            raise GraphError("duplicate edge ids")
        adjacency: Dict[int, List[Tuple[int, str]]] = {v: [] for v in range(num_vertices)}
        for e in built:
            for v, role in ((e.tail, TAIL), (e.head, HEAD)):
                adjacency.setdefault(v, []).append((e.id, role))
        return cls(
            int(num_vertices),
            tuple(built),
            {v: tuple(roles) for v, roles in adjacency.items()},
        )

    @property
    def vertices(self) -> List[int]:
        return list(range(self.num_vertices))

    def edge(self, edge_id: int) -> Edge:
        for e in self.edges:
            if e.id == edge_id:
                return e
        raise GraphError(f"no edge with id {edge_id}")

    def valency(self, v: int) -> int:
        return len(self.adjacency.get(v, ()))

    @property
    def boundary(self) -> List[int]:
        return [v for v in self.vertices if self.valency(v) == 1]

    @property
    def interior(self) -> List[int]:
        return [v for v in self.vertices if self.valency(v) > 1]

    def to_networkx(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(self.vertices)
        for e in self.edges:
            g.add_edge(e.tail, e.head, key=e.id, weight=e.length)
        return g


def star_graph(lengths: Sequence[float]) -> MetricGraph:
    """Star with the centre as vertex 0 and leaves at each edge's tail."""
    edges = [Edge(i, i + 1, 0, float(l)) for i, l in enumerate(lengths)]
    return MetricGraph.from_edges(len(lengths) + 1, edges)


def path_graph(lengths: Sequence[float]) -> MetricGraph:
    """Chain 0 -> 1 -> ... oriented head-to-tail."""
    edges = [Edge(i, i, i + 1, float(l)) for i, l in enumerate(lengths)]
    return MetricGraph.from_edges(len(lengths) + 1, edges)


def interval_graph(length: float = 1.0) -> MetricGraph:
    return path_graph([length])


def validate(g: MetricGraph) -> ValidationReport:
    violations = []
    for e in g.edges:
        if not e.length > 0:
            violations.append(f"edge {e.id}: nonpositive length {e.length!r}")
        for v in (e.tail, e.head):
            if not 0 <= v < g.num_vertices:
                violations.append(f"edge {e.id}: dangling endpoint {v}")
        if e.tail == e.head:
            violations.append(f"edge {e.id}: self-loop at vertex {e.tail}")
    if not g.edges:
        violations.append("graph has no edges")
    else:
        isolated = [v for v in g.vertices if g.valency(v) == 0]
        nxg = g.to_networkx()
        nxg.remove_nodes_from([v for v in nxg.nodes if not 0 <= v < g.num_vertices])
        if isolated or not nx.is_connected(nxg):
            violations.append("graph is disconnected")
    boundary = tuple(g.boundary)
    if not boundary:
        violations.append("boundary empty: no valency-1 vertex")
    return ValidationReport(tuple(violations), boundary)


def incidence_sign(g: MetricGraph, edge: Edge, vertex: int) -> int:
    """+1 if ``vertex`` is the head (x = length) of ``edge``, -1 if it is the tail."""
    if edge.head == vertex:
        return 1
    if edge.tail == vertex:
        return -1
    raise GraphError(f"vertex {vertex} is not incident to edge {edge.id}")


def total_length(g: MetricGraph) -> float:
    return float(sum(e.length for e in g.edges))


def disconnect(g: MetricGraph) -> List[MetricGraph]:
    """One single-edge graph per edge; edge ids are kept so coefficients still apply."""
    return [MetricGraph.from_edges(2, [Edge(e.id, 0, 1, e.length)]) for e in g.edges]


def _check_point(g: MetricGraph, point: Tuple[int, float]) -> Tuple[Edge, float]:
    edge_id, x = point
    e = g.edge(edge_id)
    if not 0.0 <= x <= e.length:
        raise GraphError(f"coordinate {x!r} outside [0, {e.length}] on edge {edge_id}")
    return e, float(x)


def shortest_path(g: MetricGraph, a: Tuple[int, float], b: Tuple[int, float]) -> Path:
    """Shortest path between two points of the graph (Dijkstra on vertices plus the two points)."""
    ea, xa = _check_point(g, a)
    eb, xb = _check_point(g, b)
    if ea.id == eb.id and xa == xb:
        return Path()

    # vertices are ints, the two points are "A" and "B"; parallel pieces keep the shortest
    nxg = nx.Graph()
    for e in g.edges:
        cuts = [(0.0, e.tail), (e.length, e.head)]
        if e.id == ea.id:
            cuts.append((xa, "A"))
        if e.id == eb.id:
            cuts.append((xb, "B"))
        cuts.sort(key=lambda c: (c[0], str(c[1])))
        for (x0, n0), (x1, n1) in zip(cuts, cuts[1:]):
            if n0 == n1:
                continue
            old = nxg.get_edge_data(n0, n1)
            if old is None or x1 - x0 < old["weight"]:
                nxg.add_edge(n0, n1, weight=x1 - x0, seg=Segment(e.id, x0, x1), start=n0)
    try:
        nodes = nx.dijkstra_path(nxg, "A", "B")
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        raise GraphError("points are not connected") from None
    segs = []
    for u, v in zip(nodes, nodes[1:]):
        data = nxg[u][v]
        seg = data["seg"] if data["start"] == u else Segment(data["seg"].edge_id, data["seg"].stop, data["seg"].start)
        if seg.length > 0:
            segs.append(seg)
    return Path(tuple(segs))


def distance(g: MetricGraph, a: Tuple[int, float], b: Tuple[int, float]) -> float:
    return shortest_path(g, a, b).length
