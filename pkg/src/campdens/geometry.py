"""Planar geometry in a local metric frame.

Polygons are single exterior rings (no holes), stored without the closing
vertex. Rectangles are axis-aligned. Coordinates are meters east (x) and
north (y) of a per-dataset projection origin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import GeometryError

EARTH_RADIUS_M = 6_371_000.0
COORD_TOL = 1e-9
AREA_REL_TOL = 1e-12


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Rect:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        vals = (self.min_x, self.min_y, self.max_x, self.max_y)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite rectangle bounds {vals}")
        if not (self.min_x < self.max_x and self.min_y < self.max_y):
            raise GeometryError(f"degenerate rectangle {vals}")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains_point(self, pt) -> bool:
        return self.min_x <= pt[0] <= self.max_x and self.min_y <= pt[1] <= self.max_y

    def intersects(self, other: "Rect") -> bool:
        """True when the interiors overlap."""
        return (
            self.min_x < other.max_x
            and other.min_x < self.max_x
            and self.min_y < other.max_y
            and other.min_y < self.max_y
        )

    def contains_rect(self, other: "Rect") -> bool:
        return (
            self.min_x <= other.min_x
            and self.min_y <= other.min_y
            and other.max_x <= self.max_x
            and other.max_y <= self.max_y
        )

    def intersection(self, other: "Rect") -> "Rect | None":
        if not self.intersects(other):
            return None
        return Rect(
            max(self.min_x, other.min_x),
            max(self.min_y, other.min_y),
            min(self.max_x, other.max_x),
            min(self.max_y, other.max_y),
        )

    def as_polygon(self) -> "Polygon":
        return Polygon(
            (
                Point2(self.min_x, self.min_y),
                Point2(self.max_x, self.min_y),
                Point2(self.max_x, self.max_y),
                Point2(self.min_x, self.max_y),
            )
        )


@dataclass(frozen=True)
class Polygon:
    """Simple polygon given by its exterior ring (implicitly closed).

    Construction checks the cheap invariants (vertex count, finiteness, no
    repeated consecutive vertex). Simplicity is O(n^2) and is checked by
    :meth:`from_coords` / :func:`check_simple` instead, so that clipping
    results, which may carry zero-width bridges, can still be represented.
    """

    ring: tuple

    def __post_init__(self):
        ring = tuple(Point2(float(x), float(y)) for x, y in self.ring)
        object.__setattr__(self, "ring", ring)
        if len(ring) < 3:
            raise GeometryError(f"polygon needs at least 3 vertices, got {len(ring)}")
        for k, (x, y) in enumerate(ring):
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeometryError(f"non-finite vertex {k}: ({x}, {y})")
        for k in range(len(ring)):
            if ring[k] == ring[k - 1]:
                raise GeometryError(f"repeated consecutive vertex at index {k}: {ring[k]}")

    @classmethod
    def from_coords(cls, coords: Iterable[Sequence[float]], check: bool = True) -> "Polygon":
        """Build from (x, y) pairs; a trailing closing vertex is dropped."""
        pts = [Point2(float(c[0]), float(c[1])) for c in coords]
        if len(pts) > 1 and pts[0] == pts[-1]:
            pts.pop()
        poly = cls(tuple(pts))
        if check:
            check_simple(poly)
        return poly

    def __len__(self):
        return len(self.ring)

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p.x for p in self.ring]
        ys = [p.y for p in self.ring]
        return min(xs), min(ys), max(xs), max(ys)

    def bbox(self) -> Rect:
        return Rect(*self.bounds())

    def coords(self) -> np.ndarray:
        return np.asarray(self.ring, dtype=float)

    def centroid(self) -> Point2:
        x0, y0 = self.ring[0]
        a2 = cx = cy = 0.0
        n = len(self.ring)
        for k in range(n):
            xa, ya = self.ring[k].x - x0, self.ring[k].y - y0
            xb, yb = self.ring[(k + 1) % n].x - x0, self.ring[(k + 1) % n].y - y0
            cross = xa * yb - xb * ya
            a2 += cross
            cx += (xa + xb) * cross
            cy += (ya + yb) * cross
        if a2 == 0.0:
            raise GeometryError("centroid of a zero-area polygon is undefined")
        return Point2(x0 + cx / (3.0 * a2), y0 + cy / (3.0 * a2))

    def reversed(self) -> "Polygon":
        return Polygon(self.ring[::-1])


def _segments_cross(p1, p2, q1, q2) -> bool:
    """Closed-segment intersection test."""

    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if abs(v) <= COORD_TOL * COORD_TOL:
            return 0
        return 1 if v > 0 else -1

    def on_seg(a, b, c):
        return (
            min(a[0], b[0]) - COORD_TOL <= c[0] <= max(a[0], b[0]) + COORD_TOL
            and min(a[1], b[1]) - COORD_TOL <= c[1] <= max(a[1], b[1]) + COORD_TOL
        )

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(p1, p2, q1):
        return True
    if o2 == 0 and on_seg(p1, p2, q2):
        return True
    if o3 == 0 and on_seg(q1, q2, p1):
        return True
    if o4 == 0 and on_seg(q1, q2, p2):
        return True
    return False


def check_simple(p: Polygon) -> None:
    """Raise GeometryError if the ring self-intersects or has zero area."""
    ring = p.ring
    n = len(ring)
    for a in range(n):
        a1, a2 = ring[a], ring[(a + 1) % n]
        for b in range(a + 1, n):
            # adjacent edges share a vertex by construction
            if b == a + 1 or (a == 0 and b == n - 1):
                continue
            if _segments_cross(a1, a2, ring[b], ring[(b + 1) % n]):
                raise GeometryError(f"ring self-intersects between edges {a} and {b}")
    if polygon_area(p) == 0.0:
        raise GeometryError("polygon has zero area")


def signed_area(p: Polygon) -> float:
    ring = p.ring
    x0, y0 = ring[0]
    n = len(ring)
    acc = 0.0
    # translate to the first vertex to limit cancellation at large offsets
    for k in range(1, n - 1):
        xa, ya = ring[k].x - x0, ring[k].y - y0
        xb, yb = ring[k + 1].x - x0, ring[k + 1].y - y0
        acc += xa * yb - xb * ya
    return 0.5 * acc


def polygon_area(p: Polygon) -> float:
    """Shoelace area, independent of orientation."""
    if not isinstance(p, Polygon):
        raise GeometryError(f"expected Polygon, got {type(p).__name__}")
    return abs(signed_area(p))


def _clip_half(points, axis, bound, keep_greater):
    out = []
    if not points:
        return out
    other = 1 - axis

    def inside(pt):
        return pt[axis] >= bound if keep_greater else pt[axis] <= bound

    def cross(a, b):
        t = (bound - a[axis]) / (b[axis] - a[axis])
        v = a[other] + t * (b[other] - a[other])
        return (bound, v) if axis == 0 else (v, bound)

    prev = points[-1]
    prev_in = inside(prev)
    for cur in points:
        cur_in = inside(cur)
        if cur_in:
            if not prev_in:
                out.append(cross(prev, cur))
            out.append(cur)
        elif prev_in:
            out.append(cross(prev, cur))
        prev, prev_in = cur, cur_in
    return out


def _dedupe(points):
    out = []
    for pt in points:
        if not out or (abs(pt[0] - out[-1][0]) > COORD_TOL or abs(pt[1] - out[-1][1]) > COORD_TOL):
            out.append(pt)
    while len(out) > 1 and abs(out[0][0] - out[-1][0]) <= COORD_TOL and abs(out[0][1] - out[-1][1]) <= COORD_TOL:
        out.pop()
    return out


def clip_polygon_rect(p: Polygon, r: Rect) -> Polygon | None:
    """Sutherland-Hodgman clip of ``p`` against ``r``.

    Returns None when the intersection has zero area. Concave subjects may
    come back with degenerate zero-width edges along the rectangle border;
    their shoelace area is still exact.
    """
    bx0, by0, bx1, by1 = p.bounds()
    if bx1 <= r.min_x or bx0 >= r.max_x or by1 <= r.min_y or by0 >= r.max_y:
        return None
    if r.min_x <= bx0 and r.min_y <= by0 and bx1 <= r.max_x and by1 <= r.max_y:
        return p
    pts = list(p.ring)
    pts = _clip_half(pts, 0, r.min_x, True)
    pts = _clip_half(pts, 0, r.max_x, False)
    pts = _clip_half(pts, 1, r.min_y, True)
    pts = _clip_half(pts, 1, r.max_y, False)
    pts = _dedupe(pts)
    if len(pts) < 3:
        return None
    clipped = Polygon(tuple(pts))
    if polygon_area(clipped) <= AREA_REL_TOL * r.area:
        return None
    return clipped


def intersection_area(p: Polygon, r: Rect) -> float:
    clipped = clip_polygon_rect(p, r)
    return 0.0 if clipped is None else polygon_area(clipped)


def _on_segment(px, py, ax, ay, bx, by) -> bool:
    if not (min(ax, bx) - COORD_TOL <= px <= max(ax, bx) + COORD_TOL):
        return False
    if not (min(ay, by) - COORD_TOL <= py <= max(ay, by) + COORD_TOL):
        return False
    length = math.hypot(bx - ax, by - ay)
    return abs((bx - ax) * (py - ay) - (by - ay) * (px - ax)) <= COORD_TOL * max(length, 1.0)


def point_in_polygon(pt, p: Polygon) -> bool:
    """Even-odd test; points on the boundary count as inside."""
    px, py = float(pt[0]), float(pt[1])
    ring = p.ring
    n = len(ring)
    inside = False
    for k in range(n):
        ax, ay = ring[k - 1]
        bx, by = ring[k]
        if _on_segment(px, py, ax, ay, bx, by):
            return True
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside


def points_in_polygon(xs: np.ndarray, ys: np.ndarray, p: Polygon) -> np.ndarray:
    """Vectorized :func:`point_in_polygon` over coordinate arrays."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    inside = np.zeros(np.broadcast(xs, ys).shape, dtype=bool)
    boundary = np.zeros_like(inside)
    ring = p.ring
    for k in range(len(ring)):
        ax, ay = ring[k - 1]
        bx, by = ring[k]
        straddles = (ay > ys) != (by > ys)
        if by != ay:
            with np.errstate(invalid="ignore", divide="ignore"):
                x_cross = ax + (ys - ay) * (bx - ax) / (by - ay)
            inside ^= straddles & (xs < x_cross)
        length = math.hypot(bx - ax, by - ay)
        near = np.abs((bx - ax) * (ys - ay) - (by - ay) * (xs - ax)) <= COORD_TOL * max(length, 1.0)
        near &= (xs >= min(ax, bx) - COORD_TOL) & (xs <= max(ax, bx) + COORD_TOL)
        near &= (ys >= min(ay, by) - COORD_TOL) & (ys <= max(ay, by) + COORD_TOL)
        boundary |= near
    return inside | boundary


@dataclass(frozen=True)
class BinaryGrid:
    """Row-major occupancy raster; row 0 is the northern edge.

    ``origin`` is the north-west corner of cell (0, 0).
    """

    rows: int
    cols: int
    cell_size: float
    origin: Point2
    cells: np.ndarray

    def __post_init__(self):
        if self.cell_size <= 0:
            raise GeometryError("cell_size must be positive")
        if self.cells.shape != (self.rows, self.cols):
            raise GeometryError(f"cells shape {self.cells.shape} != ({self.rows}, {self.cols})")

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    @property
    def covered_area(self) -> float:
        return self.count * self.cell_size * self.cell_size

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        cx = self.origin.x + (np.arange(self.cols) + 0.5) * self.cell_size
        cy = self.origin.y - (np.arange(self.rows) + 0.5) * self.cell_size
        return cx, cy


def _cell_count(extent: float, cell: float) -> int:
    return max(1, math.ceil(extent / cell - 1e-9))


def rasterize(footprints: Sequence[Polygon], window: Rect, cell_size: float) -> BinaryGrid:
    """Center-point rasterization of footprints over ``window``."""
    if not cell_size > 0:
        raise GeometryError(f"cell_size must be positive, got {cell_size}")
    rows = _cell_count(window.height, cell_size)
    cols = _cell_count(window.width, cell_size)
    cells = np.zeros((rows, cols), dtype=bool)
    ox, oy = window.min_x, window.max_y
    for fp in footprints:
        x0, y0, x1, y1 = fp.bounds()
        # cell index ranges whose centers can fall inside the bbox
        c0 = max(0, math.floor((x0 - ox) / cell_size - 0.5))
        c1 = min(cols, math.ceil((x1 - ox) / cell_size + 0.5))
        r0 = max(0, math.floor((oy - y1) / cell_size - 0.5))
        r1 = min(rows, math.ceil((oy - y0) / cell_size + 0.5))
        if c0 >= c1 or r0 >= r1:
            continue
        cx = ox + (np.arange(c0, c1) + 0.5) * cell_size
        cy = oy - (np.arange(r0, r1) + 0.5) * cell_size
        gx, gy = np.meshgrid(cx, cy)
        cells[r0:r1, c0:c1] |= points_in_polygon(gx, gy, fp)
    return BinaryGrid(rows, cols, float(cell_size), Point2(ox, oy), cells)


def _check_latlon(lat, lon, what="coordinate"):
    if not (math.isfinite(lat) and math.isfinite(lon)):
        raise GeometryError(f"non-finite {what} ({lat}, {lon})")
    if abs(lat) > 90.0 or abs(lon) > 180.0:
        raise GeometryError(f"{what} out of range: lat={lat}, lon={lon}")


def latlon_to_local(lat: float, lon: float, origin_lat: float, origin_lon: float) -> Point2:
    """Equirectangular projection about (origin_lat, origin_lon), in meters."""
    _check_latlon(lat, lon)
    _check_latlon(origin_lat, origin_lon, "origin")
    k = EARTH_RADIUS_M * math.pi / 180.0
    return Point2(
        k * math.cos(math.radians(origin_lat)) * (lon - origin_lon),
        k * (lat - origin_lat),
    )


def local_to_latlon(x: float, y: float, origin_lat: float, origin_lon: float) -> tuple[float, float]:
    """Inverse of :func:`latlon_to_local`; returns (lat, lon)."""
    _check_latlon(origin_lat, origin_lon, "origin")
    k = EARTH_RADIUS_M * math.pi / 180.0
    lat = origin_lat + y / k
    lon = origin_lon + x / (k * math.cos(math.radians(origin_lat)))
    _check_latlon(lat, lon)
    return lat, lon
