"""2D spatial model and all geometric computation.

Everything internal happens in LOCAL frame meters; GLOBAL lon/lat values
are converted at the boundary with an equirectangular model (fixed Earth
radius 6,371,000 m, adequate at building/city scale).  The geometric
tolerance is EPS = 1e-9 m everywhere: boundary points count as contained,
isolated boundary touches do not block visibility.
"""

from __future__ import annotations

import json
import math
import heapq
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence, Union

from .errors import (
    InvalidGeometry,
    ModelLoadError,
    NoAccessibleRoute,
    NoNearbyNode,
    NotAreal,
    PoleProximity,
    UnknownTarget,
)
from .model import LocalFrame

EARTH_RADIUS_M = 6_371_000.0
EPS = 1e-9

# meters per degree of latitude under the equirectangular model
_M_PER_DEG = math.pi / 180.0 * EARTH_RADIUS_M

_LAT_POLE_LIMIT = 89.9

#: Edge traversal tags removed from the navigation graph per disability tag.
DISQUALIFIED_EDGE_TAGS: dict[str, frozenset[str]] = {
    "wheelchair": frozenset({"stairs"}),
}

#: Edge tags that produce an "enter the <tag>" instruction prefix.
_ANNOUNCED_TAGS = frozenset({"door", "elevator", "stairs"})

#: Maximum distance between a query position and its snapped graph node.
SNAP_LIMIT_M = 50.0

Point = tuple[float, float]


# ---------------------------------------------------------------------------
# coordinate transforms


def to_local(lon: float, lat: float, frame: LocalFrame) -> Point:
    """Project GLOBAL degrees into frame meters (equirectangular + rotation)."""
    if abs(lat) >= _LAT_POLE_LIMIT or abs(frame.origin_lat) >= _LAT_POLE_LIMIT:
        raise PoleProximity(f"latitude {lat} unusable under equirectangular model")
    east = (lon - frame.origin_lon) * _M_PER_DEG * math.cos(math.radians(frame.origin_lat))
    north = (lat - frame.origin_lat) * _M_PER_DEG
    c, s = math.cos(frame.rotation), math.sin(frame.rotation)
    return east * c + north * s, -east * s + north * c


def to_global(x: float, y: float, frame: LocalFrame) -> tuple[float, float]:
    """Exact inverse of :func:`to_local`; returns (lon, lat) degrees."""
    if abs(frame.origin_lat) >= _LAT_POLE_LIMIT:
        raise PoleProximity(f"frame origin latitude {frame.origin_lat} too near a pole")
    c, s = math.cos(frame.rotation), math.sin(frame.rotation)
    east = x * c - y * s
    north = x * s + y * c
    lat = frame.origin_lat + north / _M_PER_DEG
    lon = frame.origin_lon + east / (_M_PER_DEG * math.cos(math.radians(frame.origin_lat)))
    if abs(lat) >= _LAT_POLE_LIMIT:
        raise PoleProximity(f"result latitude {lat} too near a pole")
    return lon, lat


# ---------------------------------------------------------------------------
# geometric primitives


def _dist(a: Point, b: Point) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])


def _seg_point_dist(p: Point, a: Point, b: Point) -> float:
    ax, ay = a
    vx, vy = b[0] - ax, b[1] - ay
    length2 = vx * vx + vy * vy
    if length2 <= EPS * EPS:
        return _dist(p, a)
    t = ((p[0] - ax) * vx + (p[1] - ay) * vy) / length2
    t = max(0.0, min(1.0, t))
    return math.hypot(p[0] - (ax + t * vx), p[1] - (ay + t * vy))


def _side(a: Point, b: Point, p: Point) -> float:
    """Signed perpendicular distance of p from line a->b (left positive)."""
    vx, vy = b[0] - a[0], b[1] - a[1]
    length = math.hypot(vx, vy)
    if length <= EPS:
        return 0.0
    return (vx * (p[1] - a[1]) - vy * (p[0] - a[0])) / length


def _proper_crossing(p1: Point, p2: Point, q1: Point, q2: Point) -> float | None:
    """Parameter on p1->p2 where the segments cross transversally at a point
    strictly interior to both, or None.  Touches within EPS do not count."""
    d1 = _side(q1, q2, p1)
    d2 = _side(q1, q2, p2)
    d3 = _side(p1, p2, q1)
    d4 = _side(p1, p2, q2)
    if abs(d1) <= EPS or abs(d2) <= EPS or abs(d3) <= EPS or abs(d4) <= EPS:
        return None
    if (d1 > 0) == (d2 > 0) or (d3 > 0) == (d4 > 0):
        return None
    return d1 / (d1 - d2)


def _collinear_overlap(p1: Point, p2: Point, q1: Point, q2: Point) -> tuple[float, float] | None:
    """Parameter interval on p1->p2 where q1->q2 overlaps it collinearly."""
    if abs(_side(p1, p2, q1)) > EPS or abs(_side(p1, p2, q2)) > EPS:
        return None
    vx, vy = p2[0] - p1[0], p2[1] - p1[1]
    length2 = vx * vx + vy * vy
    if length2 <= EPS * EPS:
        return None
    t1 = ((q1[0] - p1[0]) * vx + (q1[1] - p1[1]) * vy) / length2
    t2 = ((q2[0] - p1[0]) * vx + (q2[1] - p1[1]) * vy) / length2
    lo, hi = max(0.0, min(t1, t2)), min(1.0, max(t1, t2))
    if hi - lo <= EPS / math.sqrt(length2):
        return None
    return lo, hi


def _boundary_hits(p1: Point, p2: Point, ring: Sequence[Point]) -> list[float]:
    """All parameters on p1->p2 where the segment meets the ring boundary:
    proper crossings, vertex/edge touches and collinear-overlap endpoints."""
    seg_len = _dist(p1, p2)
    if seg_len <= EPS:
        return []
    hits: list[float] = []
    n = len(ring)
    for i in range(n):
        q1, q2 = ring[i], ring[(i + 1) % n]
        t = _proper_crossing(p1, p2, q1, q2)
        if t is not None:
            hits.append(t)
            continue
        overlap = _collinear_overlap(p1, p2, q1, q2)
        if overlap is not None:
            hits.extend(overlap)
            continue
        # touches: an endpoint of either segment within EPS of the other
        for t_cand, pt in ((0.0, p1), (1.0, p2)):
            if _seg_point_dist(pt, q1, q2) <= EPS:
                hits.append(t_cand)
        for q in (q1, q2):
            if _seg_point_dist(q, p1, p2) <= EPS:
                vx, vy = p2[0] - p1[0], p2[1] - p1[1]
                hits.append(((q[0] - p1[0]) * vx + (q[1] - p1[1]) * vy) / (seg_len * seg_len))
    return sorted(min(1.0, max(0.0, t)) for t in hits)


def point_in_ring(p: Point, ring: Sequence[Point]) -> bool:
    """Even-odd containment; boundary points (within EPS) count as contained."""
    n = len(ring)
    for i in range(n):
        if _seg_point_dist(p, ring[i], ring[(i + 1) % n]) <= EPS:
            return True
    inside = False
    x, y = p
    for i in range(n):
        (x1, y1), (x2, y2) = ring[i], ring[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < x_cross:
                inside = not inside
    return inside


def _ring_boundary_distance(p: Point, ring: Sequence[Point]) -> float:
    n = len(ring)
    return min(_seg_point_dist(p, ring[i], ring[(i + 1) % n]) for i in range(n))


def _strictly_inside(p: Point, ring: Sequence[Point]) -> bool:
    return _ring_boundary_distance(p, ring) > EPS and point_in_ring(p, ring)


def _signed_area(ring: Sequence[Point]) -> float:
    total = 0.0
    n = len(ring)
    for i in range(n):
        (x1, y1), (x2, y2) = ring[i], ring[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return total / 2.0


def _ring_centroid(ring: Sequence[Point]) -> Point:
    area = _signed_area(ring)
    cx = cy = 0.0
    n = len(ring)
    for i in range(n):
        (x1, y1), (x2, y2) = ring[i], ring[(i + 1) % n]
        w = x1 * y2 - x2 * y1
        cx += (x1 + x2) * w
        cy += (y1 + y2) * w
    return cx / (6.0 * area), cy / (6.0 * area)


# ---------------------------------------------------------------------------
# model types


@dataclass(frozen=True)
class Geometry:
    """POINT, POLYLINE or POLYGON in LOCAL meters.

    Polygon rings are simple, implicitly closed and stored counter-clockwise
    (clockwise input is reversed on construction).
    """

    kind: str
    coords: tuple[Point, ...]

    @staticmethod
    def point(x: float, y: float) -> "Geometry":
        return Geometry("point", ((float(x), float(y)),))

    @staticmethod
    def polyline(points: Iterable[Point]) -> "Geometry":
        pts = tuple((float(x), float(y)) for x, y in points)
        if len(pts) < 2:
            raise InvalidGeometry("polyline needs at least 2 vertices")
        _reject_duplicate_vertices(pts, closed=False)
        return Geometry("polyline", pts)

    @staticmethod
    def polygon(ring: Iterable[Point]) -> "Geometry":
        pts = tuple((float(x), float(y)) for x, y in ring)
        if len(pts) < 3:
            raise InvalidGeometry("polygon needs at least 3 vertices")
        _reject_duplicate_vertices(pts, closed=True)
        area = _signed_area(pts)
        if abs(area) <= EPS:
            raise InvalidGeometry("polygon is degenerate (zero area)")
        if area < 0:
            pts = tuple(reversed(pts))
        _reject_self_intersection(pts)
        return Geometry("polygon", pts)

    @property
    def is_areal(self) -> bool:
        return self.kind == "polygon"


def _reject_duplicate_vertices(pts: Sequence[Point], closed: bool) -> None:
    n = len(pts)
    pairs = n if closed else n - 1
    for i in range(pairs):
        if _dist(pts[i], pts[(i + 1) % n]) < 1e-9:
            raise InvalidGeometry(f"consecutive duplicate vertex at index {i}")


def _reject_self_intersection(ring: Sequence[Point]) -> None:
    n = len(ring)
    for i in range(n):
        a1, a2 = ring[i], ring[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue  # adjacent edges share a vertex
            b1, b2 = ring[j], ring[(j + 1) % n]
            if _proper_crossing(a1, a2, b1, b2) is not None:
                raise InvalidGeometry(f"polygon edges {i} and {j} intersect")
            if _collinear_overlap(a1, a2, b1, b2) is not None:
                raise InvalidGeometry(f"polygon edges {i} and {j} overlap")


@dataclass(frozen=True)
class Feature:
    """A named geographic feature of the environment model."""

    id: str
    name: str
    kind: str
    geometry: Geometry
    opaque: bool = False
    attributes: frozenset[str] = frozenset()

    def __post_init__(self):
        attrs = frozenset(self.attributes)
        # stairs are never usable in a wheelchair
        if self.kind == "stairs":
            attrs = attrs | {"disqualified_for:wheelchair"}
        object.__setattr__(self, "attributes", attrs)


@dataclass(frozen=True)
class ComplexShape:
    """Union of several polygon features treated as one target."""

    id: str
    members: tuple[str, ...]

    def __post_init__(self):
        if not self.members:
            raise InvalidGeometry(f"complex shape {self.id!r} has no members")
        object.__setattr__(self, "members", tuple(self.members))


@dataclass(frozen=True)
class NavNode:
    id: str
    x: float
    y: float
    label: str = ""


@dataclass(frozen=True)
class NavEdge:
    a: str
    b: str
    length: float
    tags: frozenset[str] = frozenset()
    bidir: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))


@dataclass(frozen=True)
class NavGraph:
    nodes: dict[str, NavNode]
    edges: tuple[NavEdge, ...]

    def __post_init__(self):
        for e in self.edges:
            if e.a not in self.nodes or e.b not in self.nodes:
                raise InvalidGeometry(f"edge {e.a}-{e.b} references a missing node")
            if e.length <= 0:
                raise InvalidGeometry(f"edge {e.a}-{e.b} has non-positive length")
            na, nb = self.nodes[e.a], self.nodes[e.b]
            if e.length < _dist((na.x, na.y), (nb.x, nb.y)) - 1e-6:
                raise InvalidGeometry(f"edge {e.a}-{e.b} shorter than node distance")

    @property
    def empty(self) -> bool:
        return not self.nodes


@dataclass(frozen=True)
class SpatialModel:
    """Immutable environment model: frame + features + shapes + navgraph."""

    frame: LocalFrame
    features: dict[str, Feature] = field(default_factory=dict)
    complex_shapes: dict[str, ComplexShape] = field(default_factory=dict)
    navgraph: NavGraph = field(default_factory=lambda: NavGraph({}, ()))

    def __post_init__(self):
        for shape in self.complex_shapes.values():
            for member in shape.members:
                f = self.features.get(member)
                if f is None:
                    raise InvalidGeometry(f"complex shape {shape.id!r}: unknown member {member!r}")
                if not f.geometry.is_areal:
                    raise InvalidGeometry(f"complex shape {shape.id!r}: member {member!r} is not a polygon")

    def feature(self, feature_id: str) -> Feature:
        try:
            return self.features[feature_id]
        except KeyError:
            raise UnknownTarget(feature_id) from None

    def resolve_target(self, ref: str) -> Union[Feature, ComplexShape]:
        if ref in self.features:
            return self.features[ref]
        if ref in self.complex_shapes:
            return self.complex_shapes[ref]
        raise UnknownTarget(ref)

    def opaque_polygons(self) -> list[Feature]:
        return [f for f in self.features.values() if f.opaque and f.geometry.is_areal]

    def bounding_box(self) -> tuple[float, float, float, float] | None:
        xs: list[float] = []
        ys: list[float] = []
        for f in self.features.values():
            for x, y in f.geometry.coords:
                xs.append(x)
                ys.append(y)
        for node in self.navgraph.nodes.values():
            xs.append(node.x)
            ys.append(node.y)
        if not xs:
            return None
        return min(xs), min(ys), max(xs), max(ys)


# ---------------------------------------------------------------------------
# model file I/O


def model_from_dict(doc: dict) -> SpatialModel:
    try:
        frame_doc = doc["frame"]
        frame = LocalFrame(
            frame_id=frame_doc["frame_id"],
            origin_lon=float(frame_doc["origin_lon"]),
            origin_lat=float(frame_doc["origin_lat"]),
            rotation=float(frame_doc.get("rotation", 0.0)),
        )
        features: dict[str, Feature] = {}
        for fd in doc.get("features", []):
            geom_doc = fd["geometry"]
            gtype = geom_doc["type"]
            coords = geom_doc["coords"]
            if gtype == "point":
                geometry = Geometry.point(*coords[0])
            elif gtype == "polyline":
                geometry = Geometry.polyline(coords)
            elif gtype == "polygon":
                geometry = Geometry.polygon(coords)
            else:
                raise ModelLoadError(f"unknown geometry type {gtype!r}")
            if fd["id"] in features:
                raise ModelLoadError(f"duplicate feature id {fd['id']!r}")
            features[fd["id"]] = Feature(
                id=fd["id"],
                name=fd.get("name", fd["id"]),
                kind=fd.get("kind", "other"),
                geometry=geometry,
                opaque=bool(fd.get("opaque", False)),
                attributes=frozenset(fd.get("attributes", [])),
            )
        shapes = {
            sd["id"]: ComplexShape(id=sd["id"], members=tuple(sd["members"]))
            for sd in doc.get("complex_shapes", [])
        }
        nav_doc = doc.get("navgraph", {})
        nodes = {
            nd["id"]: NavNode(nd["id"], float(nd["x"]), float(nd["y"]), nd.get("label", ""))
            for nd in nav_doc.get("nodes", [])
        }
        edges = tuple(
            NavEdge(ed["a"], ed["b"], float(ed["length"]),
                    frozenset(ed.get("tags", [])), bool(ed.get("bidir", True)))
            for ed in nav_doc.get("edges", [])
        )
        return SpatialModel(frame, features, shapes, NavGraph(nodes, edges))
    except ModelLoadError:
        raise
    except (KeyError, TypeError, ValueError, IndexError, InvalidGeometry) as exc:
        raise ModelLoadError(f"malformed model document: {exc}") from exc


def load_model(path: str) -> SpatialModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelLoadError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"model file {path} is not valid JSON: {exc}") from exc
    return model_from_dict(doc)


# ---------------------------------------------------------------------------
# visibility


@dataclass(frozen=True)
class VisibilityResult:
    visible: bool
    blockers: tuple[str, ...] = ()  # feature ids ordered by distance from a


def visibility(a: Point, b: Point, model: SpatialModel) -> VisibilityResult:
    """BLOCKED iff the open segment a->b passes through the interior of any
    opaque polygon feature.  Isolated boundary touches do not block."""
    seg_len = _dist(a, b)
    if seg_len <= EPS:
        return VisibilityResult(True)
    param_eps = EPS / seg_len
    blocking: list[tuple[float, str]] = []
    for feature in model.opaque_polygons():
        ring = feature.geometry.coords
        entry = _interior_entry(a, b, ring, param_eps)
        if entry is not None:
            blocking.append((entry, feature.id))
    if not blocking:
        return VisibilityResult(True)
    blocking.sort()
    return VisibilityResult(False, tuple(fid for _, fid in blocking))


def _interior_entry(a: Point, b: Point, ring: Sequence[Point], param_eps: float) -> float | None:
    """First parameter at which a->b enters the ring's interior, or None."""
    params = [0.0] + _boundary_hits(a, b, ring) + [1.0]
    for t0, t1 in zip(params, params[1:]):
        if t1 - t0 <= param_eps:
            continue
        tm = (t0 + t1) / 2.0
        mid = (a[0] + tm * (b[0] - a[0]), a[1] + tm * (b[1] - a[1]))
        if _strictly_inside(mid, ring):
            return t0
    return None


def segment_intersections(a: Point, b: Point, model: SpatialModel
                          ) -> list[tuple[str, Point]]:
    """Proper crossings of a->b with opaque feature edges, ordered along the
    segment.  Collinear overlaps report each overlap endpoint once."""
    seg_len = _dist(a, b)
    if seg_len <= EPS:
        return []
    results: list[tuple[float, str, Point]] = []
    for feature in model.features.values():
        if not feature.opaque or feature.geometry.kind == "point":
            continue
        params: list[float] = []
        pts = feature.geometry.coords
        n = len(pts)
        edge_count = n if feature.geometry.kind == "polygon" else n - 1
        for i in range(edge_count):
            q1, q2 = pts[i], pts[(i + 1) % n]
            t = _proper_crossing(a, b, q1, q2)
            if t is not None:
                params.append(t)
                continue
            overlap = _collinear_overlap(a, b, q1, q2)
            if overlap is not None:
                params.extend(overlap)
        params.sort()
        kept: list[float] = []
        for t in params:
            if not kept or t - kept[-1] > EPS / seg_len:
                kept.append(t)
        for t in kept:
            pt = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]))
            results.append((t, feature.id, pt))
    results.sort(key=lambda item: (item[0], item[1]))
    return [(fid, pt) for _, fid, pt in results]


# ---------------------------------------------------------------------------
# distance and containment


Target = Union[Feature, ComplexShape]


def distance_to(point: Point, target: Target, model: SpatialModel | None = None) -> float:
    """Euclidean distance to the nearest point of the target; 0 when the
    point lies inside or on the boundary of an areal target."""
    if isinstance(target, ComplexShape):
        if model is None:
            raise UnknownTarget(f"complex shape {target.id!r} needs a model to resolve members")
        return min(distance_to(point, model.feature(m)) for m in target.members)
    geom = target.geometry
    if geom.kind == "point":
        return _dist(point, geom.coords[0])
    if geom.kind == "polyline":
        pts = geom.coords
        return min(_seg_point_dist(point, pts[i], pts[i + 1]) for i in range(len(pts) - 1))
    ring = geom.coords
    if point_in_ring(point, ring):
        return 0.0
    return _ring_boundary_distance(point, ring)


def contains_point(shape: Target, point: Point, model: SpatialModel | None = None) -> bool:
    """Even-odd containment; boundary (within EPS) counts as contained."""
    if isinstance(shape, ComplexShape):
        if model is None:
            raise UnknownTarget(f"complex shape {shape.id!r} needs a model to resolve members")
        return any(contains_point(model.feature(m), point) for m in shape.members)
    if not shape.geometry.is_areal:
        raise NotAreal(f"feature {shape.id!r} has {shape.geometry.kind} geometry")
    return point_in_ring(point, shape.geometry.coords)


def _areal_rings(shape: Target, model: SpatialModel | None) -> list[tuple[Point, ...]]:
    if isinstance(shape, ComplexShape):
        if model is None:
            raise UnknownTarget(f"complex shape {shape.id!r} needs a model to resolve members")
        rings = []
        for member in shape.members:
            f = model.feature(member)
            if not f.geometry.is_areal:
                raise NotAreal(f"feature {f.id!r} has {f.geometry.kind} geometry")
            rings.append(f.geometry.coords)
        return rings
    if not shape.geometry.is_areal:
        raise NotAreal(f"feature {shape.id!r} has {shape.geometry.kind} geometry")
    return [shape.geometry.coords]


def contains_shape(outer: Target, inner: Target, model: SpatialModel | None = None) -> bool:
    """True iff every vertex of inner is contained in outer and no inner edge
    properly crosses an outer edge."""
    outer_rings = _areal_rings(outer, model)
    inner_rings = _areal_rings(inner, model)
    for ring in inner_rings:
        for vertex in ring:
            if not any(point_in_ring(vertex, outer_ring) for outer_ring in outer_rings):
                return False
    for ring in inner_rings:
        n = len(ring)
        for i in range(n):
            p1, p2 = ring[i], ring[(i + 1) % n]
            for outer_ring in outer_rings:
                m = len(outer_ring)
                for j in range(m):
                    if _proper_crossing(p1, p2, outer_ring[j], outer_ring[(j + 1) % m]) is not None:
                        return False
    return True


def feature_centroid(feature: Feature) -> Point:
    """Representative point: area centroid for polygons, arc midpoint for
    polylines, the point itself for points."""
    geom = feature.geometry
    if geom.kind == "point":
        return geom.coords[0]
    if geom.kind == "polygon":
        return _ring_centroid(geom.coords)
    pts = geom.coords
    total = sum(_dist(pts[i], pts[i + 1]) for i in range(len(pts) - 1))
    remaining = total / 2.0
    for i in range(len(pts) - 1):
        seg = _dist(pts[i], pts[i + 1])
        if remaining <= seg:
            t = remaining / seg
            return (pts[i][0] + t * (pts[i + 1][0] - pts[i][0]),
                    pts[i][1] + t * (pts[i + 1][1] - pts[i][1]))
        remaining -= seg
    return pts[-1]


# ---------------------------------------------------------------------------
# routing


@dataclass(frozen=True)
class Route:
    """A planned path over the navigation graph.

    ``length_m`` counts graph edges only; the offsets record how far the
    requested start/goal positions were from their snapped nodes.
    """

    nodes: tuple[str, ...]
    length_m: float
    instructions: tuple[str, ...]
    traversed_features: tuple[str, ...] = ()
    start_offset_m: float = 0.0
    goal_offset_m: float = 0.0


def _nearest_node(graph: NavGraph, point: Point) -> tuple[str, float]:
    best: tuple[float, str] | None = None
    for node in graph.nodes.values():
        d = _dist(point, (node.x, node.y))
        if best is None or (d, node.id) < best:
            best = (d, node.id)
    if best is None:
        raise NoNearbyNode("navigation graph has no nodes")
    if best[0] > SNAP_LIMIT_M:
        raise NoNearbyNode(f"nearest node {best[1]!r} is {best[0]:.1f} m away (limit {SNAP_LIMIT_M:g} m)")
    return best[1], best[0]


def _admissible_adjacency(graph: NavGraph, profile: frozenset[str],
                          disqualify: dict[str, frozenset[str]]) -> dict[str, dict[str, NavEdge]]:
    banned: set[str] = set()
    for tag in profile:
        banned |= disqualify.get(tag, frozenset())
    adjacency: dict[str, dict[str, NavEdge]] = {node: {} for node in graph.nodes}

    def admit(src: str, dst: str, edge: NavEdge) -> None:
        held = adjacency[src].get(dst)
        # parallel edges collapse to the best one, deterministically
        if held is None or (edge.length, sorted(edge.tags)) < (held.length, sorted(held.tags)):
            adjacency[src][dst] = edge

    for edge in graph.edges:
        if edge.tags & banned:
            continue
        admit(edge.a, edge.b, edge)
        if edge.bidir:
            admit(edge.b, edge.a, edge)
    return adjacency


def plan_route(model: SpatialModel, start: Point, goal: Point,
               profile: frozenset[str] = frozenset(),
               disqualify: dict[str, frozenset[str]] | None = None) -> Route:
    """Shortest admissible path between the snapped start and goal nodes.

    Edges carrying a tag disqualified for the profile are removed before
    the search.  Ties break by fewer edges, then the lexicographically
    smallest node-id sequence.
    """
    graph = model.navgraph
    start_node, start_offset = _nearest_node(graph, start)
    goal_node, goal_offset = _nearest_node(graph, goal)
    adjacency = _admissible_adjacency(graph, profile,
                                      DISQUALIFIED_EDGE_TAGS if disqualify is None else disqualify)

    # labels order exactly by the route preference: (length, hops, path)
    best: dict[str, tuple[float, int, tuple[str, ...]]] = {}
    heap: list[tuple[float, int, tuple[str, ...]]] = [(0.0, 0, (start_node,))]
    settled: set[str] = set()
    while heap:
        length, hops, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        best[node] = (length, hops, path)
        if node == goal_node:
            break
        for nxt, edge in sorted(adjacency[node].items()):
            if nxt in settled:
                continue
            heapq.heappush(heap, (length + edge.length, hops + 1, path + (nxt,)))
    if goal_node not in best:
        raise NoAccessibleRoute(f"no admissible route from {start_node!r} to {goal_node!r}")
    length, _, path = best[goal_node]
    route = Route(
        nodes=path,
        length_m=length,
        instructions=(),
        traversed_features=_traversed_features(model, path),
        start_offset_m=start_offset,
        goal_offset_m=goal_offset,
    )
    return replace(route, instructions=tuple(generate_instructions(route, model)))


def _edge_lookup(graph: NavGraph) -> dict[tuple[str, str], NavEdge]:
    table: dict[tuple[str, str], NavEdge] = {}

    def admit(key: tuple[str, str], edge: NavEdge) -> None:
        held = table.get(key)
        if held is None or (edge.length, sorted(edge.tags)) < (held.length, sorted(held.tags)):
            table[key] = edge

    for edge in graph.edges:
        admit((edge.a, edge.b), edge)
        if edge.bidir:
            admit((edge.b, edge.a), edge)
    return table


def _traversed_features(model: SpatialModel, path: tuple[str, ...]) -> tuple[str, ...]:
    """Areal features the route passes through, ordered by first encounter."""
    nodes = model.navgraph.nodes
    seen: list[str] = []
    for a_id, b_id in zip(path, path[1:]):
        a = (nodes[a_id].x, nodes[a_id].y)
        b = (nodes[b_id].x, nodes[b_id].y)
        mid = ((a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0)
        hits: list[tuple[float, str]] = []
        for feature in model.features.values():
            if not feature.geometry.is_areal:
                continue
            ring = feature.geometry.coords
            entry = _interior_entry(a, b, ring, EPS / max(_dist(a, b), EPS))
            if entry is not None:
                hits.append((entry, feature.id))
            elif point_in_ring(mid, ring):
                hits.append((0.5, feature.id))
        for _, fid in sorted(hits):
            if fid not in seen:
                seen.append(fid)
    return tuple(seen)


def _turn_phrase(delta_deg: float) -> str:
    if abs(delta_deg) <= 30.0:
        return "continue straight"
    if 30.0 < delta_deg <= 150.0:
        return "turn right"
    if -150.0 <= delta_deg < -30.0:
        return "turn left"
    return "turn around"


def generate_instructions(route: Route, model: SpatialModel) -> list[str]:
    """One instruction per node transition; the incoming edge's door /
    elevator / stairs tag prefixes the movement phrase."""
    path = route.nodes
    if len(path) < 2:
        return ["you have arrived"]
    nodes = model.navgraph.nodes
    edges = _edge_lookup(model.navgraph)
    coords = [(nodes[n].x, nodes[n].y) for n in path]
    instructions: list[str] = []
    for i in range(1, len(path)):
        incoming = edges.get((path[i - 1], path[i]))
        announced = sorted(incoming.tags & _ANNOUNCED_TAGS) if incoming else []
        if i < len(path) - 1:
            vin = (coords[i][0] - coords[i - 1][0], coords[i][1] - coords[i - 1][1])
            vout = (coords[i + 1][0] - coords[i][0], coords[i + 1][1] - coords[i][1])
            cross = vin[0] * vout[1] - vin[1] * vout[0]
            dot = vin[0] * vout[0] + vin[1] * vout[1]
            # clockwise-positive heading change: right turns are positive
            delta = -math.degrees(math.atan2(cross, dot))
            movement = _turn_phrase(delta)
        else:
            movement = "you have arrived"
        parts = [f"enter the {tag}" for tag in announced] + [movement]
        instructions.append(" and ".join(parts))
    return instructions
