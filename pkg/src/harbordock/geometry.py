"""Harbor map, vessel footprint and convex free-space extraction.

Coordinates are local ``(north, east)`` meters.  Polygons are stored as
``(n, 2)`` arrays with counterclockwise winding in the (north, east) plane
and without a repeated closing vertex.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vessel import Pose

_EPS = 1e-9


class GeometryError(ValueError):
    pass


class PositionInsideObstacle(GeometryError):
    pass


class EmptyRegion(GeometryError):
    pass


class InvalidMap(GeometryError):
    pass


# --- polygon primitives ---------------------------------------------------

def signed_area(poly) -> float:
    """Shoelace area, positive for counterclockwise winding."""
    p = np.asarray(poly, dtype=float)
    if len(p) < 3:
        return 0.0
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    def on_segment(a, b, c):
        return (min(a[0], b[0]) - _EPS <= c[0] <= max(a[0], b[0]) + _EPS
                and min(a[1], b[1]) - _EPS <= c[1] <= max(a[1], b[1]) + _EPS)

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4):
        return True
    if abs(d1) <= _EPS and on_segment(q1, q2, p1):
        return True
    if abs(d2) <= _EPS and on_segment(q1, q2, p2):
        return True
    if abs(d3) <= _EPS and on_segment(p1, p2, q1):
        return True
    if abs(d4) <= _EPS and on_segment(p1, p2, q2):
        return True
    return False


def is_simple_polygon(poly) -> bool:
    p = np.asarray(poly, dtype=float)
    n = len(p)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = p[i], p[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if _segments_cross(a1, a2, p[j], p[(j + 1) % n]):
                return False
    return True


def point_in_polygon(point, poly) -> bool:
    """Even-odd ray casting test; points on the boundary count as inside."""
    px, py = float(point[0]), float(point[1])
    p = np.asarray(poly, dtype=float)
    n = len(p)
    inside = False
    for i in range(n):
        x1, y1 = p[i]
        x2, y2 = p[(i + 1) % n]
        # boundary hit
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if (abs(cross) <= 1e-12 * max(1.0, abs(x2 - x1) + abs(y2 - y1))
                and min(x1, x2) - 1e-12 <= px <= max(x1, x2) + 1e-12
                and min(y1, y2) - 1e-12 <= py <= max(y1, y2) + 1e-12):
            return True
        if (y1 > py) != (y2 > py):
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < x_cross:
                inside = not inside
    return inside


def clip_polygon_halfplane(poly, a, b) -> np.ndarray:
    """Sutherland-Hodgman clip of ``poly`` against ``a . p <= b``."""
    p = np.asarray(poly, dtype=float)
    if len(p) == 0:
        return p.reshape(0, 2)
    a = np.asarray(a, dtype=float)
    vals = p @ a - b
    out = []
    n = len(p)
    for i in range(n):
        cur, nxt = p[i], p[(i + 1) % n]
        vc, vn = vals[i], vals[(i + 1) % n]
        if vc <= 0.0:
            out.append(cur)
        if (vc < 0.0 < vn) or (vn < 0.0 < vc):
            t = vc / (vc - vn)
            out.append(cur + t * (nxt - cur))
    return np.array(out).reshape(-1, 2)


def polygon_from_halfplanes(A, b, bounding_box=None) -> np.ndarray:
    """Vertices of ``{p | A p <= b}`` (clipped to a bounding box if given)."""
    if bounding_box is None:
        bounding_box = (-1e6, 1e6, -1e6, 1e6)
    n0, n1, e0, e1 = bounding_box
    poly = np.array([[n0, e0], [n1, e0], [n1, e1], [n0, e1]], dtype=float)
    for a_row, b_val in zip(np.asarray(A, float), np.asarray(b, float)):
        poly = clip_polygon_halfplane(poly, a_row, b_val)
        if len(poly) == 0:
            break
    return poly


# --- footprint --------------------------------------------------------------

@dataclass(frozen=True)
class Footprint:
    """Convex vessel outline in the body frame (x forward, y starboard)."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if signed_area(v) < 0:
            v = v[::-1]
        object.__setattr__(self, "vertices", v)

    @classmethod
    def rectangle(cls, length: float, width: float) -> "Footprint":
        hl, hw = 0.5 * length, 0.5 * width
        return cls(np.array([[hl, -hw], [hl, hw], [-hl, hw], [-hl, -hw]]))


def footprint_vertices(pose: Pose, footprint: Footprint) -> np.ndarray:
    """World-frame footprint vertices, one per row."""
    c, s = math.cos(pose.heading), math.sin(pose.heading)
    R2 = np.array([[c, -s], [s, c]])
    return footprint.vertices @ R2.T + np.array([pose.north, pose.east])


# --- harbor map -------------------------------------------------------------

@dataclass(frozen=True)
class HarborMap:
    obstacles: tuple
    world_bounds: tuple[float, float, float, float]  # north_min, north_max, east_min, east_max
    name: str = "harbor"
    winding_fixes: int = field(default=0, compare=False)

    @classmethod
    def from_polygons(cls, polygons, world_bounds, name="harbor") -> "HarborMap":
        fixed = 0
        obstacles = []
        for k, poly in enumerate(polygons):
            p = np.asarray(poly, dtype=float).reshape(-1, 2)
            if len(p) > 3 and np.allclose(p[0], p[-1]):
                p = p[:-1]
            if not is_simple_polygon(p):
                raise InvalidMap(f"obstacle {k} is not a simple polygon")
            if signed_area(p) < 0:
                p = p[::-1].copy()
                fixed += 1
            obstacles.append(p)
        n0, n1, e0, e1 = map(float, world_bounds)
        if not (n0 < n1 and e0 < e1):
            raise InvalidMap("world bounds must have min < max")
        for k, p in enumerate(obstacles):
            if (p[:, 0].min() < n0 or p[:, 0].max() > n1
                    or p[:, 1].min() < e0 or p[:, 1].max() > e1):
                raise InvalidMap(f"obstacle {k} extends beyond the world bounds")
        return cls(tuple(obstacles), (n0, n1, e0, e1), name, fixed)

    @classmethod
    def from_dict(cls, data: dict) -> "HarborMap":
        wb = data["world_bounds"]
        bounds = (*wb["north"], *wb["east"])
        polys = [obs["vertices"] if isinstance(obs, dict) else obs for obs in data.get("obstacles", [])]
        return cls.from_polygons(polys, bounds, name=data.get("name", "harbor"))

    @classmethod
    def load(cls, path: str | Path) -> "HarborMap":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        n0, n1, e0, e1 = self.world_bounds
        return {
            "name": self.name,
            "world_bounds": {"north": [n0, n1], "east": [e0, e1]},
            "obstacles": [{"vertices": p.tolist()} for p in self.obstacles],
        }

    def box_halfplanes(self):
        n0, n1, e0, e1 = self.world_bounds
        A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        b = np.array([n1, -n0, e1, -e0])
        return A, b

    def box_polygon(self) -> np.ndarray:
        n0, n1, e0, e1 = self.world_bounds
        return np.array([[n0, e0], [n1, e0], [n1, e1], [n0, e1]], dtype=float)


# --- convex regions ---------------------------------------------------------

@dataclass(frozen=True)
class ConvexRegion:
    """Halfspace form ``{p | A p <= b}`` with unit-norm rows."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(-1, 2)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if len(A) != len(b):
            raise GeometryError("A and b have inconsistent sizes")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms <= 0):
            raise GeometryError("zero row in region matrix")
        object.__setattr__(self, "A", A / norms[:, None])
        object.__setattr__(self, "b", b / norms)

    @property
    def n_rows(self) -> int:
        return len(self.b)

    @classmethod
    def whole_plane(cls) -> "ConvexRegion":
        return cls(np.zeros((0, 2)), np.zeros(0))

    @classmethod
    def box(cls, north_min, north_max, east_min, east_max) -> "ConvexRegion":
        A = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        return cls(A, np.array([north_max, -north_min, east_max, -east_min]))

    def contains(self, point, slack: float = 0.0) -> bool:
        return region_contains(self, point, slack)

    def polygon(self, bounding_box=None) -> np.ndarray:
        return polygon_from_halfplanes(self.A, self.b, bounding_box)

    def is_nonempty(self) -> bool:
        """True if a strictly interior point exists (Chebyshev radius > 0)."""
        if self.n_rows == 0:
            return True
        poly = self.polygon()
        return len(poly) >= 3 and signed_area(poly) > _EPS


def region_contains(region: ConvexRegion, point, slack: float = 0.0) -> bool:
    p = np.asarray(point, dtype=float)
    return bool(np.all(region.A @ p <= region.b + slack))


def _clip_segments(P0, P1, A, b):
    """Parametric clip of segments ``P0 + t (P1 - P0)`` to ``A p <= b``.

    Returns ``(t_lo, t_hi)``; a segment survives where ``t_lo < t_hi``.
    """
    t_lo = np.zeros(len(P0))
    t_hi = np.ones(len(P0))
    D = P1 - P0
    for a_row, b_val in zip(A, b):
        v0 = P0 @ a_row - b_val
        dv = D @ a_row
        with np.errstate(divide="ignore", invalid="ignore"):
            t_cross = -v0 / dv
        parallel = np.abs(dv) < 1e-15
        outside_parallel = parallel & (v0 > 0)
        t_hi = np.where(outside_parallel, -1.0, t_hi)
        entering = ~parallel & (dv < 0)
        leaving = ~parallel & (dv > 0)
        t_lo = np.where(entering, np.maximum(t_lo, t_cross), t_lo)
        t_hi = np.where(leaving, np.minimum(t_hi, t_cross), t_hi)
    return t_lo, t_hi


def _closest_on_segments(seed, P0, P1, t_lo, t_hi):
    D = P1 - P0
    dd = np.einsum("ij,ij->i", D, D)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.einsum("ij,ij->i", seed - P0, D) / dd
    t = np.where(dd > 0, t, 0.0)
    t = np.clip(t, t_lo, t_hi)
    Q = P0 + t[:, None] * D
    dist = np.linalg.norm(Q - seed, axis=1)
    return t, Q, dist


def extract_convex_region(harbor: HarborMap, position, edge_budget: int = 8,
                          interior_margin: float = 1e-7) -> ConvexRegion:
    """Convex obstacle-free region around ``position``.

    Greedy closest-edge clipping: starting from the world bounds, repeatedly
    find the obstacle boundary point closest to ``position`` that still lies
    strictly inside the current region.  If that point is interior to a map
    edge, the edge's supporting line (facing away from the landmass) is used
    as the cut; otherwise (map vertex, or a point where an edge enters the
    region) the cut is the line through the point orthogonal to the direction
    from the seed.  At most ``edge_budget`` cuts are made this way.  If
    landmass still overlaps the region after that, each remaining obstacle
    gets one conservative separating cut pushed to its deepest point, so the
    region is obstacle-free but possibly smaller than necessary.

    The returned rows are the non-redundant cuts plus the surviving world
    bound rows, normalised to unit length and sorted by normal angle.
    """
    seed = np.asarray(position, dtype=float).reshape(2)
    for k, poly in enumerate(harbor.obstacles):
        if point_in_polygon(seed, poly):
            raise PositionInsideObstacle(f"position {seed.tolist()} is inside obstacle {k}")
    box_A, box_b = harbor.box_halfplanes()
    if np.any(box_A @ seed >= box_b):
        raise EmptyRegion("position is outside the world bounds")

    P0_list, P1_list, owner = [], [], []
    for k, poly in enumerate(harbor.obstacles):
        P0_list.append(poly)
        P1_list.append(np.roll(poly, -1, axis=0))
        owner.append(np.full(len(poly), k))
    if P0_list:
        P0 = np.vstack(P0_list)
        P1 = np.vstack(P1_list)
        owner = np.concatenate(owner)
    else:
        P0 = P1 = np.zeros((0, 2))
        owner = np.zeros(0, dtype=int)

    cut_A: list[np.ndarray] = []
    cut_b: list[float] = []

    def crossing_segments():
        A = np.vstack([box_A, *cut_A]) if cut_A else box_A
        b = np.concatenate([box_b, cut_b]) if cut_b else box_b
        t_lo, t_hi = _clip_segments(P0, P1, A, b - interior_margin)
        return t_lo, t_hi, t_hi - t_lo > 1e-12

    for _ in range(edge_budget):
        if len(P0) == 0:
            break
        t_lo, t_hi, alive = crossing_segments()
        if not np.any(alive):
            break
        t, Q, dist = _closest_on_segments(seed, P0, P1, t_lo, t_hi)
        dist = np.where(alive, dist, np.inf)
        i = int(np.argmin(dist))
        q = Q[i]
        edge = P1[i] - P0[i]
        edge_len = float(np.linalg.norm(edge))
        interior_to_edge = (edge_len > 0 and 1e-9 < t[i] < 1.0 - 1e-9
                            and t_lo[i] < t[i] < t_hi[i])
        if interior_to_edge:
            # CCW polygon: outward normal is the edge direction rotated by -90 deg
            outward = np.array([edge[1], -edge[0]]) / edge_len
            a = -outward
        else:
            d = q - seed
            a = d / np.linalg.norm(d)
        cut_A.append(a)
        cut_b.append(float(a @ q))

    # budget exhausted: one conservative cut per obstacle still overlapping
    if len(P0):
        t_lo, t_hi, alive = crossing_segments()
        if np.any(alive):
            region_poly = harbor.box_polygon()
            for a, bv in zip(cut_A, cut_b):
                region_poly = clip_polygon_halfplane(region_poly, a, bv)
            _, Q, dist = _closest_on_segments(seed, P0, P1, t_lo, t_hi)
            for k in sorted(set(owner[alive].tolist())):
                mask = alive & (owner == k)
                j = np.flatnonzero(mask)[np.argmin(dist[mask])]
                d = Q[j] - seed
                a = d / np.linalg.norm(d)
                piece = harbor.obstacles[k]
                for a_row, b_val in zip(np.vstack([box_A, *cut_A]),
                                        np.concatenate([box_b, cut_b])):
                    piece = clip_polygon_halfplane(piece, a_row, b_val)
                if len(piece) == 0:
                    continue
                bv = float(np.min(piece @ a))
                if a @ seed >= bv:
                    raise EmptyRegion(
                        f"no separating cut keeps the seed clear of obstacle {k}")
                cut_A.append(a)
                cut_b.append(bv)

    A_all = np.vstack([box_A, *cut_A]) if cut_A else box_A
    b_all = np.concatenate([box_b, cut_b]) if cut_b else box_b
    if np.any(A_all @ seed >= b_all):
        raise EmptyRegion("clipping eliminated the seed point")
    return _prune_and_sort(A_all, b_all, harbor)


def _prune_and_sort(A, b, harbor: HarborMap) -> ConvexRegion:
    poly = harbor.box_polygon()
    for a_row, b_val in zip(A, b):
        poly = clip_polygon_halfplane(poly, a_row, b_val)
    if len(poly) < 3 or signed_area(poly) <= _EPS:
        raise EmptyRegion("extracted region has no interior")
    keep = []
    scale = max(1.0, float(np.max(np.abs(poly))))
    for i, (a_row, b_val) in enumerate(zip(A, b)):
        on_line = np.abs(poly @ a_row - b_val) <= 1e-9 * scale
        if np.count_nonzero(on_line) < 2:
            continue
        pts = poly[on_line]
        if np.max(np.linalg.norm(pts - pts[0], axis=1)) <= 1e-9:
            continue
        # drop duplicates of an already kept line
        if any(np.allclose(A[j], a_row) and abs(b[j] - b_val) <= 1e-9 * scale for j in keep):
            continue
        keep.append(i)
    A_k, b_k = A[keep], b[keep]
    angles = np.arctan2(A_k[:, 1], A_k[:, 0])
    order = np.lexsort((b_k, angles))
    return ConvexRegion(A_k[order], b_k[order])


def obstacle_overlap_area(region: ConvexRegion, polygon) -> float:
    """Area of ``polygon`` inside ``region`` (convex clip; exact for convex polygons)."""
    piece = np.asarray(polygon, dtype=float)
    for a_row, b_val in zip(region.A, region.b):
        piece = clip_polygon_halfplane(piece, a_row, b_val)
        if len(piece) == 0:
            return 0.0
    return abs(signed_area(piece))
