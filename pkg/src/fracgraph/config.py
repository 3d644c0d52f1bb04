"""JSON run configuration with line-anchored error messages.

Schema (all keys except ``graph`` and ``beta`` optional)::

    {
      "graph": {"vertices": 4,
                "edges": [{"id": 0, "tail": 1, "head": 0, "length": 1.0}, ...]},
      "beta": 0.75,
      "coefficients": {"p": 1.0,
                       "r": {"default": 1.0,
                             "edges": {"0": {"values": [1, 2], "breakpoints": [0.5]}}}},
      "mesh": {"n": 256, "per_edge": {"0": 128}, "levels": [64, 128, 256]},
      "solver": {"k": 5, "residual_tol": 1e-8},
      "kernel_denominator": "derived",
      "validation": {"samples": 500, "seed": 0, "corrupt_mass": false},
      "output": {"dir": "out"}
    }
"""
from __future__ import annotations

import json
import json.decoder
import json.scanner
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from .assembly import CoefficientField, Discretization, PiecewiseConstant
from .graph import Edge, MetricGraph, validate
from .kernel import DENOMINATORS


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "config"):
        self.message, self.line, self.source = message, line, source
        where = f"{source}:{line}" if line is not None else source
        super().__init__(f"{where}: {message}")


class _Obj(dict):
    line: int = 0


class _LineDecoder(json.JSONDecoder):
    """Decoder whose objects remember the line their opening brace is on."""

    def __init__(self):
        super().__init__()
        base = self.parse_object

        def parse_object(s_and_end, strict, scan_once, object_hook, object_pairs_hook, memo=None):
            s, end = s_and_end
            obj, stop = base(s_and_end, strict, scan_once, None, None, memo)
            out = _Obj(obj)
            out.line = s.count("\n", 0, end) + 1
            return out, stop

        self.parse_object = parse_object
        self.scan_once = json.scanner.py_make_scanner(self)


def _line(obj) -> Optional[int]:
    return getattr(obj, "line", None)


@dataclass
class RunConfig:
    graph: MetricGraph
    beta: float
    p: Dict[int, PiecewiseConstant]
    r: Dict[int, PiecewiseConstant]
    n: Dict[int, int]
    levels: List[int] = field(default_factory=list)
    k: int = 5
    residual_tol: float = 1e-8
    kernel_denominator: str = "derived"
    samples: int = 500
    seed: int = 0
    corrupt_mass: bool = False
    out_dir: str = "out"

    @property
    def coeffs(self) -> CoefficientField:
        return CoefficientField(self.p, self.r)

    def discretization(self, n: Optional[int] = None) -> Discretization:
        mesh = self.n if n is None else {e.id: int(n) for e in self.graph.edges}
        return Discretization.uniform(self.graph, self.beta, mesh, self.coeffs)

    def to_dict(self) -> Dict[str, Any]:
        """Normalized form; ``parse_config(json.dumps(cfg.to_dict()))`` round-trips."""

        def coeff(table):
            return {"edges": {str(i): {"values": list(pc.values), "breakpoints": list(pc.breakpoints)}
                              for i, pc in sorted(table.items())}}

        return {
            "graph": {
                "vertices": self.graph.num_vertices,
                "edges": [{"id": e.id, "tail": e.tail, "head": e.head, "length": e.length}
                          for e in self.graph.edges],
            },
            "beta": self.beta,
            "coefficients": {"p": coeff(self.p), "r": coeff(self.r)},
            "mesh": {"per_edge": {str(i): n for i, n in sorted(self.n.items())}, "levels": list(self.levels)},
            "solver": {"k": self.k, "residual_tol": self.residual_tol},
            "kernel_denominator": self.kernel_denominator,
            "validation": {"samples": self.samples, "seed": self.seed, "corrupt_mass": self.corrupt_mass},
            "output": {"dir": self.out_dir},
        }


def _number(value, what: str, line, source, integer: bool = False):
    ok = isinstance(value, int) if integer else isinstance(value, (int, float))
    if isinstance(value, bool) or not ok:
        raise ConfigError(f"{what} must be {'an integer' if integer else 'a number'}, got {value!r}", line, source)
    return int(value) if integer else float(value)


def _section(doc, key: str, source: str) -> _Obj:
    sec = doc.get(key, _Obj())
    if not isinstance(sec, dict):
        raise ConfigError(f"'{key}' must be an object", _line(doc), source)
    return sec


def _edges(doc, source: str) -> MetricGraph:
    if "graph" not in doc:
        raise ConfigError("missing 'graph'", _line(doc), source)
    g = _section(doc, "graph", source)
    nv = _number(g.get("vertices"), "graph.vertices", _line(g), source, integer=True)
    raw = g.get("edges")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("graph.edges must be a non-empty list", _line(g), source)
    edges, seen = [], set()
    for i, item in enumerate(raw):
        line = _line(item) or _line(g)
        if not isinstance(item, dict):
            raise ConfigError(f"edge #{i} must be an object", line, source)
        eid = _number(item.get("id", i), f"edge #{i} id", line, source, integer=True)
        if eid in seen:
            raise ConfigError(f"edge {eid}: duplicate id", line, source)
        seen.add(eid)
        tail = _number(item.get("tail"), f"edge {eid}: tail", line, source, integer=True)
        head = _number(item.get("head"), f"edge {eid}: head", line, source, integer=True)
        length = _number(item.get("length"), f"edge {eid}: length", line, source)
        if not length > 0:
            raise ConfigError(f"edge {eid}: length must be positive, got {length!r}", line, source)
        edges.append((Edge(eid, tail, head, length), line))
    graph = MetricGraph.from_edges(nv, [e for e, _ in edges])
    report = validate(graph)
    if not report.ok:
        msg = report.violations[0]
        line = _line(g)
        for e, eline in edges:
            if msg.startswith(f"edge {e.id}:"):
                line = eline
        raise ConfigError("invalid graph: " + "; ".join(report.violations), line, source)
    return graph


def _piecewise(spec, what: str, line, source) -> PiecewiseConstant:
    if isinstance(spec, dict):
        line = _line(spec) or line
        values = spec.get("values")
        if not isinstance(values, list) or not values:
            raise ConfigError(f"{what}: 'values' must be a non-empty list", line, source)
        vals = tuple(_number(v, what, line, source) for v in values)
        bps = tuple(_number(b, what, line, source) for b in spec.get("breakpoints", []))
        try:
            return PiecewiseConstant(vals, bps)
        except ValueError as exc:
            raise ConfigError(f"{what}: {exc}", line, source) from None
    return PiecewiseConstant.constant(_number(spec, what, line, source))


def _coefficient(sec, name: str, graph: MetricGraph, source: str) -> Dict[int, PiecewiseConstant]:
    spec = sec.get(name, 1.0)
    line = _line(sec)
    if isinstance(spec, dict) and "values" not in spec:
        line = _line(spec) or line
        default = spec.get("default", 1.0)
        per_edge = spec.get("edges", {})
        if not isinstance(per_edge, dict):
            raise ConfigError(f"{name}.edges must be an object", line, source)
        ids = {str(e.id) for e in graph.edges}
        for key in per_edge:
            if key not in ids:
                raise ConfigError(f"{name}.edges: unknown edge {key}", line, source)
        table = {}
        for e in graph.edges:
            item = per_edge.get(str(e.id), default)
            table[e.id] = _piecewise(item, f"edge {e.id}: {name}", _line(item) or line, source)
    else:
        pc = _piecewise(spec, name, line, source)
        table = {e.id: pc for e in graph.edges}
    for e in graph.edges:
        pc = table[e.id]
        if not all(v > 0 for v in pc.values):
            raise ConfigError(f"edge {e.id}: {name} must be positive", line, source)
        if pc.breakpoints and not (0 < pc.breakpoints[0] and pc.breakpoints[-1] < e.length):
            raise ConfigError(f"edge {e.id}: {name} breakpoints must lie inside (0, {e.length})", line, source)
    return table


def _mesh(doc, graph: MetricGraph, source: str) -> Tuple[Dict[int, int], List[int]]:
    mesh = _section(doc, "mesh", source)
    line = _line(mesh) or _line(doc)
    n = _number(mesh.get("n", 128), "mesh.n", line, source, integer=True)
    per_edge = mesh.get("per_edge", {})
    if not isinstance(per_edge, dict):
        raise ConfigError("mesh.per_edge must be an object", line, source)
    table = {}
    for e in graph.edges:
        table[e.id] = _number(per_edge.get(str(e.id), n), f"edge {e.id}: mesh n", line, source, integer=True)
        if table[e.id] < 2:
            raise ConfigError(f"edge {e.id}: mesh needs at least 2 cells", line, source)
    levels = mesh.get("levels", [])
    if not isinstance(levels, list):
        raise ConfigError("mesh.levels must be a list", line, source)
    levels = [_number(v, "mesh.levels entry", line, source, integer=True) for v in levels]
    return table, levels


def parse_config(text: str, source: str = "config") -> RunConfig:
    try:
        doc = _LineDecoder().decode(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", exc.lineno, source) from None
    if not isinstance(doc, dict):
        raise ConfigError("top level must be an object", 1, source)
    graph = _edges(doc, source)
    if "beta" not in doc:
        raise ConfigError("missing 'beta'", _line(doc), source)
    beta = _number(doc["beta"], "beta", _line(doc), source)
    if not 0.5 < beta <= 1.0:
        raise ConfigError(f"beta must lie in (1/2, 1], got {beta!r}", _line(doc), source)
    coeffs = _section(doc, "coefficients", source)
    p = _coefficient(coeffs, "p", graph, source)
    r = _coefficient(coeffs, "r", graph, source)
    n, levels = _mesh(doc, graph, source)
    solver = _section(doc, "solver", source)
    k = _number(solver.get("k", 5), "solver.k", _line(solver) or _line(doc), source, integer=True)
    if k < 1:
        raise ConfigError("solver.k must be >= 1", _line(solver) or _line(doc), source)
    tol = _number(solver.get("residual_tol", 1e-8), "solver.residual_tol", _line(solver), source)
    denom = doc.get("kernel_denominator", "derived")
    if denom not in DENOMINATORS:
        raise ConfigError(f"kernel_denominator must be one of {list(DENOMINATORS)}", _line(doc), source)
    val = _section(doc, "validation", source)
    samples = _number(val.get("samples", 500), "validation.samples", _line(val), source, integer=True)
    seed = _number(val.get("seed", 0), "validation.seed", _line(val), source, integer=True)
    corrupt = val.get("corrupt_mass", False)
    if not isinstance(corrupt, bool):
        raise ConfigError("validation.corrupt_mass must be a boolean", _line(val), source)
    out = _section(doc, "output", source).get("dir", "out")
    return RunConfig(graph, beta, p, r, n, levels, k, tol, denom, samples, seed, corrupt, str(out))


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from None
    return parse_config(text, path)
