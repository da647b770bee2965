"""Lane maps, entrance-to-exit route enumeration, and arc-length spline paths.

A map is a small JSON lane graph (see :func:`parse_map`).  Every feasible
entrance-to-exit lane sequence becomes one planar path, stored as a pair of
natural cubic splines in x and y over an arc-length parameter, which gives
cheap position, heading, curvature, and nearest-point queries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from . import _kernels as K


class ParseError(ValueError):
    """Malformed or invalid map/scenario input."""


class DanglingReference(ParseError):
    """A lane refers to a node or successor that does not exist."""


class UnreachableExit(ParseError):
    """An entrance lane cannot reach any exit lane."""


class DegeneratePolyline(ValueError):
    """Fewer than two distinct points after deduplication."""


@dataclass(frozen=True)
class Lane:
    node_ids: tuple[str, ...]
    successors: tuple[str, ...]


@dataclass
class LaneGraph:
    """Validated lane-level road graph in meters."""

    nodes: dict[str, np.ndarray]
    lanes: dict[str, Lane]
    entrances: list[str]
    exits: list[str]

    def lane_polyline(self, lane_id: str) -> np.ndarray:
        lane = self.lanes[lane_id]
        return np.array([self.nodes[n] for n in lane.node_ids], dtype=float)


_MAP_KEYS = {"nodes", "lanes", "entrances", "exits"}
_LANE_KEYS = {"nodes", "successors"}


def parse_map(data) -> LaneGraph:
    """Parse and validate a JSON lane graph.

    Format: ``{"nodes": {id: [x, y]}, "lanes": {id: {"nodes": [ids],
    "successors": [ids]}}, "entrances": [ids], "exits": [ids]}``.
    Unknown keys are rejected.
    """
    if isinstance(data, (bytes, str)):
        try:
            raw = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from exc
    else:
        raw = data
    if not isinstance(raw, dict):
        raise ParseError("map root must be an object")
    extra = set(raw) - _MAP_KEYS
    if extra:
        raise ParseError(f"unknown map keys: {sorted(extra)}")
    missing = _MAP_KEYS - set(raw)
    if missing:
        raise ParseError(f"missing map keys: {sorted(missing)}")

    nodes = {}
    for nid, xy in raw["nodes"].items():
        if not (isinstance(xy, (list, tuple)) and len(xy) == 2):
            raise ParseError(f"node {nid!r} must be [x, y]")
        nodes[str(nid)] = np.array([float(xy[0]), float(xy[1])])

    lanes = {}
    for lid, spec in raw["lanes"].items():
        if not isinstance(spec, dict):
            raise ParseError(f"lane {lid!r} must be an object")
        extra = set(spec) - _LANE_KEYS
        if extra:
            raise ParseError(f"lane {lid!r} has unknown keys: {sorted(extra)}")
        node_ids = tuple(str(n) for n in spec.get("nodes", ()))
        if len(node_ids) < 2:
            raise ParseError(f"lane {lid!r} needs at least 2 points")
        for n in node_ids:
            if n not in nodes:
                raise DanglingReference(f"lane {lid!r} references missing node {n!r}")
        succ = tuple(str(s) for s in spec.get("successors", ()))
        lanes[str(lid)] = Lane(node_ids, succ)

    for lid, lane in lanes.items():
        for s in lane.successors:
            if s not in lanes:
                raise DanglingReference(f"lane {lid!r} references missing successor {s!r}")

    entrances = [str(e) for e in raw["entrances"]]
    exits = [str(e) for e in raw["exits"]]
    for lid in entrances + exits:
        if lid not in lanes:
            raise DanglingReference(f"entrance/exit {lid!r} is not a lane")
    if not entrances or not exits:
        raise ParseError("map needs at least one entrance and one exit")

    exit_set = set(exits)
    for ent in entrances:
        seen = {ent}
        stack = [ent]
        reached = ent in exit_set
        while stack and not reached:
            for s in lanes[stack.pop()].successors:
                if s in exit_set:
                    reached = True
                    break
                if s not in seen:
                    seen.add(s)
                    stack.append(s)
        if not reached:
            raise UnreachableExit(f"entrance {ent!r} reaches no exit")

    return LaneGraph(nodes, lanes, entrances, exits)


def enumerate_routes(graph: LaneGraph) -> list[tuple[str, ...]]:
    """All simple entrance-to-exit lane-id sequences, lexicographically sorted."""
    exit_set = set(graph.exits)
    sequences: list[tuple[str, ...]] = []

    def walk(seq: list[str]) -> None:
        lid = seq[-1]
        if lid in exit_set:
            sequences.append(tuple(seq))
        for s in sorted(graph.lanes[lid].successors):
            if s not in seq:
                seq.append(s)
                walk(seq)
                seq.pop()

    for ent in sorted(set(graph.entrances)):
        walk([ent])
    sequences.sort()
    return sequences


def route_polyline(graph: LaneGraph, seq) -> np.ndarray:
    """Concatenate a lane sequence into one polyline, dropping duplicate
    junction points where consecutive lanes meet."""
    pts: list[np.ndarray] = []
    for lid in seq:
        for q in graph.lane_polyline(lid):
            if pts and np.hypot(*(q - pts[-1])) < 1e-9:
                continue
            pts.append(q)
    return np.array(pts)


def enumerate_paths(graph: LaneGraph) -> list[np.ndarray]:
    """All simple entrance-to-exit lane sequences as planar polylines.

    A sequence may not repeat a lane.  Results are ordered lexicographically
    by lane-id sequence, so they do not depend on dict insertion order.
    """
    return [route_polyline(graph, seq) for seq in enumerate_routes(graph)]


@dataclass
class PathSpline:
    """One entrance-to-exit path, arc-length parameterized.

    ``knots`` are the arc-length breakpoints; ``cx``/``cy`` hold 4 cubic
    coefficients per segment (highest power first) for the x and y splines.
    """

    knots: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    index: int = 0
    samp_x: np.ndarray = field(default=None, repr=False)
    samp_y: np.ndarray = field(default=None, repr=False)
    samp_p: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.samp_x is None:
            ps = np.arange(0.0, self.length, 1.0)
            ps = np.append(ps, self.length)
            out = np.empty((len(ps), 5))
            K.eval_many(self.knots, self._koff, self.cx, self.cy, 0, ps, out)
            self.samp_x = np.ascontiguousarray(out[:, 0])
            self.samp_y = np.ascontiguousarray(out[:, 1])
            self.samp_p = ps

    @property
    def length(self) -> float:
        return float(self.knots[-1])

    @property
    def _koff(self):
        return np.array([0, len(self.knots)], dtype=np.int64)

    def eval(self, p):
        """Position, unit heading, and curvature magnitude at arc position p.

        p is clamped to [0, length]; accepts a scalar or an array.
        """
        ps = np.atleast_1d(np.asarray(p, dtype=float))
        out = np.empty((len(ps), 5))
        K.eval_many(self.knots, self._koff, self.cx, self.cy, 0, ps, out)
        pos = out[:, 0:2]
        heading = out[:, 2:4]
        kappa = out[:, 4]
        if np.isscalar(p) or np.asarray(p).ndim == 0:
            return pos[0], heading[0], float(kappa[0])
        return pos, heading, kappa

    def position(self, p):
        return self.eval(p)[0]

    def heading(self, p):
        return self.eval(p)[1]

    def curvature(self, p):
        return self.eval(p)[2]

    def project(self, point) -> tuple[float, float]:
        """Arc position minimizing the distance to `point`, and that distance."""
        poff = np.array([0, len(self.samp_p)], dtype=np.int64)
        p, dist = K.project_point(self.knots, self._koff, self.cx, self.cy,
                                  self.samp_x, self.samp_y, self.samp_p, poff,
                                  0, float(point[0]), float(point[1]))
        return float(p), float(dist)


def _dedupe(polyline: np.ndarray) -> np.ndarray:
    pts = np.asarray(polyline, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegeneratePolyline("polyline must have shape (k, 2)")
    keep = [0]
    for i in range(1, len(pts)):
        if np.hypot(*(pts[i] - pts[keep[-1]])) > 1e-9:
            keep.append(i)
    return pts[keep]


def fit_spline(polyline, index: int = 0, resample_step: float = 0.5) -> PathSpline:
    """Fit natural cubic splines x(p), y(p) over an arc-length parameter.

    Fits once on cumulative chord length, resamples at ``resample_step``
    meters of arc, and refits so that |dposition/dp| stays within a few
    percent of one.
    """
    pts = _dedupe(polyline)
    if len(pts) < 2:
        raise DegeneratePolyline("need at least 2 distinct points")
    chord = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])

    if len(pts) == 2:
        # straight segment: exact linear pieces, no intermediate fit needed
        u_dense = np.linspace(0.0, chord[-1], 9)
        dense = pts[0] + (u_dense / chord[-1])[:, None] * (pts[1] - pts[0])
    else:
        sx = CubicSpline(chord, pts[:, 0], bc_type="natural")
        sy = CubicSpline(chord, pts[:, 1], bc_type="natural")
        n_dense = max(400, 24 * len(pts))
        u_dense = np.linspace(0.0, chord[-1], n_dense)
        dense = np.column_stack([sx(u_dense), sy(u_dense)])

    seg = np.hypot(*np.diff(dense, axis=0).T)
    s_dense = np.concatenate([[0.0], np.cumsum(seg)])
    total = s_dense[-1]
    if total <= 0:
        raise DegeneratePolyline("zero-length polyline")
    n_knots = max(2, int(np.ceil(total / resample_step)) + 1)
    targets = np.linspace(0.0, total, n_knots)
    u_targets = np.interp(targets, s_dense, u_dense)
    if len(pts) == 2:
        resampled = pts[0] + (u_targets / chord[-1])[:, None] * (pts[1] - pts[0])
    else:
        resampled = np.column_stack([sx(u_targets), sy(u_targets)])

    knots = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(resampled, axis=0).T))])
    fx = CubicSpline(knots, resampled[:, 0], bc_type="natural")
    fy = CubicSpline(knots, resampled[:, 1], bc_type="natural")
    cx = np.ascontiguousarray(fx.c.T.reshape(-1))
    cy = np.ascontiguousarray(fy.c.T.reshape(-1))
    return PathSpline(knots=np.ascontiguousarray(knots), cx=cx, cy=cy, index=index)


def overlap_coefficients(paths: list[PathSpline], grid: float = 0.5,
                         lateral: float = 0.5) -> np.ndarray:
    """Inverse mean path multiplicity along each path.

    For each sample point of a path, count the paths within ``lateral``
    meters (including the path itself); q is one over the mean count, so
    fully shared geometry halves q and a lone path keeps q = 1.
    """
    m = len(paths)
    q = np.ones(m)
    for i, path in enumerate(paths):
        ps = np.arange(0.0, path.length, grid)
        ps = np.append(ps, path.length)
        pos, _, _ = path.eval(ps)
        counts = np.zeros(len(ps))
        for other in paths:
            for k in range(len(ps)):
                _, dist = other.project(pos[k])
                if dist <= lateral:
                    counts[k] += 1.0
        q[i] = 1.0 / counts.mean()
    return q


@dataclass
class PathSet:
    """All paths of an intersection plus packed arrays for the fast kernels."""

    paths: list[PathSpline]
    q: np.ndarray
    routes: list = None
    knots: np.ndarray = field(repr=False, default=None)
    koff: np.ndarray = field(repr=False, default=None)
    cx: np.ndarray = field(repr=False, default=None)
    cy: np.ndarray = field(repr=False, default=None)
    lengths: np.ndarray = field(repr=False, default=None)
    samp_x: np.ndarray = field(repr=False, default=None)
    samp_y: np.ndarray = field(repr=False, default=None)
    samp_p: np.ndarray = field(repr=False, default=None)
    poff: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.knots is None:
            self._pack()

    def _pack(self):
        self.knots = np.concatenate([p.knots for p in self.paths])
        self.koff = np.concatenate([[0], np.cumsum([len(p.knots) for p in self.paths])]).astype(np.int64)
        self.cx = np.concatenate([p.cx for p in self.paths])
        self.cy = np.concatenate([p.cy for p in self.paths])
        self.lengths = np.array([p.length for p in self.paths])
        self.samp_x = np.concatenate([p.samp_x for p in self.paths])
        self.samp_y = np.concatenate([p.samp_y for p in self.paths])
        self.samp_p = np.concatenate([p.samp_p for p in self.paths])
        self.poff = np.concatenate([[0], np.cumsum([len(p.samp_p) for p in self.paths])]).astype(np.int64)

    def __len__(self) -> int:
        return len(self.paths)

    def project(self, mu: int, point) -> tuple[float, float]:
        p, dist = K.project_point(self.knots, self.koff, self.cx, self.cy,
                                  self.samp_x, self.samp_y, self.samp_p, self.poff,
                                  mu, float(point[0]), float(point[1]))
        return float(p), float(dist)

    def eval(self, mu: int, p):
        return self.paths[mu].eval(p)


def build_path_set(graph: LaneGraph, resample_step: float = 0.5,
                   with_routes: bool = False):
    """Enumerate, fit, and pack all paths of a lane graph."""
    routes = enumerate_routes(graph)
    if not routes:
        raise ParseError("map yields no entrance-to-exit paths")
    paths = [fit_spline(route_polyline(graph, seq), index=i,
                        resample_step=resample_step)
             for i, seq in enumerate(routes)]
    q = overlap_coefficients(paths)
    pset = PathSet(paths=paths, q=q, routes=routes)
    if with_routes:
        return pset, routes
    return pset


def load_map(path) -> LaneGraph:
    """Read and parse a map file."""
    with open(path, "rb") as fh:
        return parse_map(fh.read())
