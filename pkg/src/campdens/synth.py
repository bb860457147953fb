"""Deterministic synthetic camps and brute-force grid oracles.

A synthetic camp is a rectangular scene partitioned into a jittered grid of
blocks, filled with disjoint axis-aligned shelter footprints. Each block's
population is proportional to the footprint area it contains, optionally
perturbed by multiplicative Gaussian noise.

The oracle functions here count cell centers on a regular lattice with
their own even-odd test, so they share no code path with the geometry
module they are used to check.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError
from .geometry import Point2, Polygon, Rect, polygon_area
from .ingest import CampScene, MajheeBlock, write_blocks, write_footprints, write_manifest

MIN_BLOCK_EDGE_M = 4.0
COX_BAZAR_LATLON = (21.2, 92.15)


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) and math.isfinite(v)


@dataclass(frozen=True)
class SynthParams:
    scene_px: tuple = (2240, 2240)
    gsd: float = 0.1
    block_grid: tuple = (20, 20)
    block_jitter: float = 0.3
    n_structures: int = 1000
    structure_size_range: tuple = (3.0, 5.0)
    pop_per_struct_area: float = 0.25
    noise_sd: float = 0.0
    seed: int = 0
    # relative structure density per block, drawn uniformly from this range
    block_weight_range: tuple = (0.1, 1.0)
    concave_block: bool = False
    camp_id: str = "C01"
    scene_id: str = "C01-2019-01-15"
    capture_date: str = "2019-01-15"
    sw_corner: tuple = (0.0, 0.0)
    origin_latlon: tuple = COX_BAZAR_LATLON
    max_attempts_per_structure: int = 200

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not _is_int(self.seed):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        w, h = self.scene_px
        if not (_is_int(w) and _is_int(h) and w > 0 and h > 0):
            raise ConfigError(f"scene_px must be two positive integers, got {self.scene_px!r}")
        rows, cols = self.block_grid
        if not (_is_int(rows) and _is_int(cols) and rows > 0 and cols > 0):
            raise ConfigError(f"block_grid must be two positive integers, got {self.block_grid!r}")
        if self.concave_block and (rows < 2 or cols < 2):
            raise ConfigError("concave_block needs a block grid of at least 2x2")
        for name in ("gsd", "pop_per_struct_area"):
            v = getattr(self, name)
            if not (_is_num(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        for name in ("noise_sd", "block_jitter"):
            v = getattr(self, name)
            if not (_is_num(v) and v >= 0):
                raise ConfigError(f"{name} must be a non-negative number, got {v!r}")
        if self.block_jitter >= 1:
            raise ConfigError("block_jitter must be < 1 (fraction of a grid cell)")
        if not (_is_int(self.n_structures) and self.n_structures >= 0):
            raise ConfigError(f"n_structures must be a non-negative integer, got {self.n_structures!r}")
        lo, hi = self.structure_size_range
        if not (_is_num(lo) and _is_num(hi) and 0 < lo <= hi):
            raise ConfigError(f"structure_size_range must satisfy 0 < lo <= hi, got {self.structure_size_range!r}")
        wlo, whi = self.block_weight_range
        if not (_is_num(wlo) and _is_num(whi) and 0 <= wlo <= whi and whi > 0):
            raise ConfigError(f"block_weight_range must satisfy 0 <= lo <= hi, hi > 0, got {self.block_weight_range!r}")
        cell_w = w * self.gsd / cols
        cell_h = h * self.gsd / rows
        if min(cell_w, cell_h) * (1 - self.block_jitter) < MIN_BLOCK_EDGE_M:
            raise ConfigError(f"block grid too fine: blocks could be narrower than {MIN_BLOCK_EDGE_M} m")
        try:
            date.fromisoformat(self.capture_date)
        except (TypeError, ValueError):
            raise ConfigError(f"capture_date must be an ISO date, got {self.capture_date!r}") from None

    @classmethod
    def from_dict(cls, d: dict) -> "SynthParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth parameter(s): {', '.join(sorted(unknown))}")
        kw = {}
        for k, v in d.items():
            kw[k] = tuple(v) if isinstance(v, list) else v
        try:
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid synth parameters: {exc}") from None

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass
class SyntheticCamp:
    scene: CampScene
    blocks: list
    footprints: list
    true_alpha: float
    block_structure_area: dict = field(default_factory=dict)


def _cuts(n, extent, jitter, rng):
    step = extent / n
    cuts = [0.0]
    for k in range(1, n):
        cuts.append(k * step + rng.uniform(-0.5, 0.5) * jitter * step)
    cuts.append(extent)
    return cuts


def _block_rings(xs, ys, concave):
    """Rings for the jittered grid, keyed by (row, col) with row 0 at the south."""
    rows, cols = len(ys) - 1, len(xs) - 1
    rings = {}
    for r in range(rows):
        for c in range(cols):
            rings[(r, c)] = [(xs[c], ys[r]), (xs[c + 1], ys[r]), (xs[c + 1], ys[r + 1]), (xs[c], ys[r + 1])]
    if concave:
        # merge (0,0), (0,1), (1,0) into one L-shaped block
        del rings[(0, 1)], rings[(1, 0)]
        rings[(0, 0)] = [
            (xs[0], ys[0]), (xs[2], ys[0]), (xs[2], ys[1]),
            (xs[1], ys[1]), (xs[1], ys[2]), (xs[0], ys[2]),
        ]
    return rings


def _place_structures(params, extent: Rect, block_rects, weights, rng):
    lo, hi = params.structure_size_range
    n = params.n_structures
    if n == 0:
        return []
    probs = np.asarray(weights, dtype=float)
    probs = probs / probs.sum()
    bucket = hi
    grid: dict = {}
    placed = []
    attempts = 0
    budget = params.max_attempts_per_structure * n
    batch = max(64, 2 * n)
    while len(placed) < n:
        if attempts >= budget:
            raise ConfigError(
                f"placed only {len(placed)} of {n} structures after {budget} attempts; "
                "lower n_structures or structure_size_range"
            )
        # candidates are drawn in fixed-size batches so the stream is seed-determined
        ks = rng.choice(len(block_rects), size=batch, p=probs)
        ws = rng.uniform(lo, hi, size=batch)
        hs = rng.uniform(lo, hi, size=batch)
        us = rng.uniform(size=batch)
        vs = rng.uniform(size=batch)
        for k, w, h, u, v in zip(ks, ws, hs, us, vs):
            if len(placed) >= n or attempts >= budget:
                break
            attempts += 1
            br = block_rects[k]
            cx = br.min_x + u * br.width
            cy = br.min_y + v * br.height
            x0, y0, x1, y1 = cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2
            if x0 < extent.min_x or y0 < extent.min_y or x1 > extent.max_x or y1 > extent.max_y:
                continue
            gx0, gx1 = int((x0 - extent.min_x) // bucket), int((x1 - extent.min_x) // bucket)
            gy0, gy1 = int((y0 - extent.min_y) // bucket), int((y1 - extent.min_y) // bucket)
            clash = False
            for gx in range(gx0, gx1 + 1):
                for gy in range(gy0, gy1 + 1):
                    for (ax0, ay0, ax1, ay1) in grid.get((gx, gy), ()):
                        if x0 < ax1 and ax0 < x1 and y0 < ay1 and ay0 < y1:
                            clash = True
                            break
                    if clash:
                        break
                if clash:
                    break
            if clash:
                continue
            box = (float(x0), float(y0), float(x1), float(y1))
            for gx in range(gx0, gx1 + 1):
                for gy in range(gy0, gy1 + 1):
                    grid.setdefault((gx, gy), []).append(box)
            placed.append(box)
    return [Rect(*b).as_polygon() for b in placed]


def _cell_structure_area(cells, footprints):
    """Footprint area per grid cell; both are axis-aligned rectangles."""
    if not footprints:
        return [0.0] * len(cells)
    boxes = np.array([fp.bounds() for fp in footprints])
    out = []
    for c in cells:
        w = np.clip(np.minimum(boxes[:, 2], c.max_x) - np.maximum(boxes[:, 0], c.min_x), 0, None)
        h = np.clip(np.minimum(boxes[:, 3], c.max_y) - np.maximum(boxes[:, 1], c.min_y), 0, None)
        out.append(math.fsum(w * h))
    return out


def generate_scene(params: SynthParams) -> SyntheticCamp:
    """Build one synthetic camp scene; identical params give identical output."""
    params.validate()
    rng = np.random.default_rng(params.seed)
    w_px, h_px = params.scene_px
    width, height = w_px * params.gsd, h_px * params.gsd
    sx, sy = params.sw_corner
    extent = Rect(sx, sy, sx + width, sy + height)
    rows, cols = params.block_grid
    xs = [sx + v for v in _cuts(cols, width, params.block_jitter, rng)]
    ys = [sy + v for v in _cuts(rows, height, params.block_jitter, rng)]
    xs[-1], ys[-1] = extent.max_x, extent.max_y
    rings = _block_rings(xs, ys, params.concave_block)

    # structure placement uses the grid cells so density weights stay per cell
    cells = [Rect(xs[c], ys[r], xs[c + 1], ys[r + 1]) for r in range(rows) for c in range(cols)]
    wlo, whi = params.block_weight_range
    cell_w = rng.uniform(wlo, whi, size=len(cells))
    weights = cell_w * np.array([c.area for c in cells])
    if weights.sum() <= 0:
        weights = np.array([c.area for c in cells])
    footprints = _place_structures(params, extent, cells, weights, rng)

    when = date.fromisoformat(params.capture_date)
    cell_struct = _cell_structure_area(cells, footprints)
    blocks, struct_area = [], {}
    alpha = float(params.pop_per_struct_area)
    for (r, c) in sorted(rings):
        poly = Polygon.from_coords(rings[(r, c)])
        block_id = f"{params.camp_id}-B{r:02d}{c:02d}"
        members = [(r, c)]
        if params.concave_block and (r, c) == (0, 0):
            members = [(0, 0), (0, 1), (1, 0)]
        s_area = math.fsum(cell_struct[rr * cols + cc] for rr, cc in members)
        eps = rng.normal(0.0, params.noise_sd) if params.noise_sd > 0 else 0.0
        pop = max(0.0, alpha * s_area * (1.0 + eps))
        struct_area[block_id] = s_area
        blocks.append(MajheeBlock(block_id, params.camp_id, when, pop, poly))

    olat, olon = params.origin_latlon
    scene = CampScene(
        scene_id=params.scene_id,
        camp_id=params.camp_id,
        capture_date=when,
        origin=Point2(extent.min_x, extent.max_y),
        width_px=int(w_px),
        height_px=int(h_px),
        gsd=float(params.gsd),
        origin_lat=float(olat),
        origin_lon=float(olon),
    )
    return SyntheticCamp(scene, blocks, footprints, alpha, struct_area)


def _add_months(d: date, k: int) -> date:
    m = d.month - 1 + k
    return date(d.year + m // 12, m % 12 + 1, min(d.day, 28))


def generate_dataset(params: SynthParams, n_camps: int = 1, n_dates: int = 1, camp_spacing_m: float = 100.0) -> list[SyntheticCamp]:
    """Several camps side by side, each assessed on ``n_dates`` monthly rounds.

    Every (camp, date) scene is drawn independently with a seed derived from
    ``params.seed``; camps are laid out west to east in one metric frame.
    """
    if not (_is_int(n_camps) and n_camps >= 1 and _is_int(n_dates) and n_dates >= 1):
        raise ConfigError("n_camps and n_dates must be positive integers")
    start = date.fromisoformat(params.capture_date)
    width = params.scene_px[0] * params.gsd
    out = []
    for ci in range(n_camps):
        camp_id = f"C{ci + 1:02d}"
        for t in range(n_dates):
            when = _add_months(start, t)
            seed = int(np.random.SeedSequence([params.seed, ci, t]).generate_state(1)[0])
            p = SynthParams.from_dict(
                {
                    **params.to_dict(),
                    "seed": seed,
                    "camp_id": camp_id,
                    "scene_id": f"{camp_id}-{when.isoformat()}",
                    "capture_date": when.isoformat(),
                    "sw_corner": [params.sw_corner[0] + ci * (width + camp_spacing_m), params.sw_corner[1]],
                }
            )
            out.append(generate_scene(p))
    return out


def write_dataset(directory, camps: Sequence[SyntheticCamp], params: SynthParams | None = None, extra_meta: dict | None = None) -> Path:
    """Write blocks.geojson, footprints.geojson, manifest.json and synth_meta.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    olat, olon = camps[0].scene.origin_lat, camps[0].scene.origin_lon
    write_blocks(d / "blocks.geojson", [b for c in camps for b in c.blocks], olat, olon)
    fps, sids = [], []
    for c in camps:
        fps.extend(c.footprints)
        sids.extend([c.scene.scene_id] * len(c.footprints))
    write_footprints(d / "footprints.geojson", fps, olat, olon, scene_ids=sids)
    write_manifest(d / "manifest.json", [c.scene for c in camps])
    meta = {
        "true_alpha": camps[0].true_alpha,
        "scenes": [
            {
                "scene_id": c.scene.scene_id,
                "n_footprints": len(c.footprints),
                "n_blocks": len(c.blocks),
                "total_population": math.fsum(b.population for b in c.blocks),
                "total_structure_area": math.fsum(polygon_area(f) for f in c.footprints),
            }
            for c in camps
        ],
    }
    if params is not None:
        meta["params"] = params.to_dict()
    if extra_meta:
        meta.update(extra_meta)
    (d / "synth_meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return d


# ------------------------------------------------------------------ oracles --


def _even_odd(xs, ys, ring):
    """Even-odd membership of points; closed ring given as (n, 2) array."""
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(ring)
    for k in range(n):
        x1, y1 = ring[k]
        x2, y2 = ring[(k + 1) % n]
        if y1 == y2:
            continue
        cond = (y1 <= ys) != (y2 <= ys)
        xi = x1 + (ys - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (xs < xi)
    return inside


def _lattice(x0, x1, y0, y1, cell):
    nx = max(0, int(math.ceil((x1 - x0) / cell)))
    ny = max(0, int(math.ceil((y1 - y0) / cell)))
    cx = x0 + (np.arange(nx) + 0.5) * cell
    cy = y0 + (np.arange(ny) + 0.5) * cell
    return cx[cx < x1], cy[cy < y1]


def oracle_intersection_area(p: Polygon, r: Rect, cell: float, chunk: int = 400) -> float:
    """Area of ``p`` inside ``r`` by counting lattice cell centers.

    The lattice spacing is shrunk per axis (never above ``cell``) so the
    rectangle is tiled exactly; only the polygon's edges are then sampled.
    """
    if not cell > 0:
        raise ConfigError("cell must be positive")
    ring = np.asarray(p.ring, dtype=float)
    x0 = max(r.min_x, ring[:, 0].min())
    x1 = min(r.max_x, ring[:, 0].max())
    y0 = max(r.min_y, ring[:, 1].min())
    y1 = min(r.max_y, ring[:, 1].max())
    if x0 >= x1 or y0 >= y1:
        return 0.0
    sx = r.width / math.ceil(r.width / cell)
    sy = r.height / math.ceil(r.height / cell)
    ix = np.arange(math.floor((x0 - r.min_x) / sx), math.ceil((x1 - r.min_x) / sx))
    iy = np.arange(math.floor((y0 - r.min_y) / sy), math.ceil((y1 - r.min_y) / sy))
    cx = r.min_x + (ix + 0.5) * sx
    cy = r.min_y + (iy + 0.5) * sy
    cx = cx[cx < r.max_x]
    cy = cy[cy < r.max_y]
    count = 0
    for s in range(0, len(cy), chunk):
        gx, gy = np.meshgrid(cx, cy[s:s + chunk])
        count += int(_even_odd(gx, gy, ring).sum())
    return count * sx * sy


def oracle_disaggregate(chip_rect: Rect, blocks: Sequence[MajheeBlock], mode: str, cell: float = 0.05) -> float:
    """Grid oracle for chip labels.

    Every lattice cell is assigned to the first block containing its center.
    Block areas and chip overlaps are then cell counts, and the label is the
    overlap-weighted sum under the requested weighting
    ("conservative": overlap / block area; "paper-eq1": overlap / chip area).
    """
    if not blocks:
        return 0.0
    rings = [np.asarray(b.geometry.ring, dtype=float) for b in blocks]
    allpts = np.vstack(rings)
    x0, y0 = allpts.min(axis=0)
    x1, y1 = allpts.max(axis=0)
    cx, cy = _lattice(x0, x1, y0, y1, cell)
    block_cells = np.zeros(len(blocks))
    chip_cells = np.zeros(len(blocks))
    chip_total = 0
    chunk = 200
    for s in range(0, len(cy), chunk):
        gx, gy = np.meshgrid(cx, cy[s:s + chunk])
        free = np.ones(gx.shape, dtype=bool)
        in_chip = (gx >= chip_rect.min_x) & (gx < chip_rect.max_x) & (gy >= chip_rect.min_y) & (gy < chip_rect.max_y)
        chip_total += int(in_chip.sum())
        for k, ring in enumerate(rings):
            m = _even_odd(gx, gy, ring) & free
            free &= ~m
            block_cells[k] += m.sum()
            chip_cells[k] += (m & in_chip).sum()
    # lattice chip area, so a chip inside one block gets exactly that block's count
    chip_area = chip_total * cell * cell
    total = 0.0
    for k, b in enumerate(blocks):
        if chip_cells[k] == 0:
            continue
        overlap = chip_cells[k] * cell * cell
        if mode == "conservative":
            total += b.population * overlap / (block_cells[k] * cell * cell)
        elif mode == "paper-eq1":
            total += b.population * overlap / chip_area
        else:
            raise ConfigError(f"unknown mode {mode!r}")
    return total


def random_star_polygon(rng, center=(0.0, 0.0), r_min=1.0, r_max=5.0, n_min=5, n_max=12) -> Polygon:
    """Simple (star-shaped about ``center``) polygon, usually concave."""
    if n_min < 4:
        raise ConfigError("star polygons need at least 4 vertices")
    n = int(rng.integers(n_min, n_max + 1))
    # one angle per equal sector keeps every gap below pi, so the ring stays
    # star-shaped about the center and cannot cross itself
    sector = 2 * np.pi / n
    angles = (np.arange(n) + rng.uniform(0.05, 0.95, size=n)) * sector
    radii = rng.uniform(r_min, r_max, size=len(angles))
    pts = [(center[0] + rr * math.cos(a), center[1] + rr * math.sin(a)) for a, rr in zip(angles, radii)]
    return Polygon.from_coords(pts)


def is_concave(p: Polygon) -> bool:
    ring = p.ring
    n = len(ring)
    signs = set()
    for k in range(n):
        ax, ay = ring[k - 1]
        bx, by = ring[k]
        cx, cy = ring[(k + 1) % n]
        cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
        if cross != 0:
            signs.add(cross > 0)
    return len(signs) > 1
