"""Chip labels: disaggregated population, structure area and density."""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .chipping import Chip
from .errors import LabelingError
from .geometry import Polygon, Rect, clip_polygon_rect, intersection_area, polygon_area, rasterize
from .ingest import CampScene, MajheeBlock

log = logging.getLogger(__name__)

UNION_CELL_M = 0.05
DEFAULT_MIN_STRUCTURE_AREA = 1.0


class DisaggregationMode(enum.Enum):
    PAPER_EQ1 = "paper-eq1"
    CONSERVATIVE = "conservative"

    @classmethod
    def parse(cls, value) -> "DisaggregationMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            raise LabelingError(f"unknown disaggregation mode {value!r}; use 'conservative' or 'paper-eq1'") from None


@dataclass(frozen=True)
class LabeledChip:
    chip: Chip
    population: float
    density: float
    structure_area: float
    kept: bool = True
    # area of the chip covered by any block; 0 means the chip lies outside the census
    block_area: float = 0.0


def select_blocks(blocks: Sequence[MajheeBlock], camp_id: str, when: date) -> list[MajheeBlock]:
    """Blocks of ``camp_id`` from the assessment nearest to ``when``.

    Ties go to the earlier assessment.
    """
    dates = sorted({b.assessment_date for b in blocks if b.camp_id == camp_id})
    if not dates:
        return []
    best = min(dates, key=lambda d: (abs((d - when).days), d))
    return [b for b in blocks if b.camp_id == camp_id and b.assessment_date == best]


def blocks_for_scene(blocks: Sequence[MajheeBlock], scene: CampScene) -> list[MajheeBlock]:
    return select_blocks(blocks, scene.camp_id, scene.capture_date)


class BlockIndex:
    """Blocks with precomputed areas and bounding boxes for fast overlap queries."""

    def __init__(self, blocks: Sequence[MajheeBlock]):
        self.blocks = list(blocks)
        n = len(self.blocks)
        self.bounds = np.array([b.geometry.bounds() for b in self.blocks], dtype=float).reshape(n, 4)
        self.areas = [polygon_area(b.geometry) for b in self.blocks]
        self.is_rect = [_is_axis_rect(b.geometry) for b in self.blocks]

    def __len__(self):
        return len(self.blocks)

    def terms(self, rect: Rect):
        """Yield ``(block, overlap_area, block_area)`` for blocks overlapping ``rect``."""
        if not self.blocks:
            return
        b = self.bounds
        hit = (b[:, 0] < rect.max_x) & (b[:, 2] > rect.min_x) & (b[:, 1] < rect.max_y) & (b[:, 3] > rect.min_y)
        for k in np.flatnonzero(hit):
            if self.is_rect[k]:
                w = min(b[k, 2], rect.max_x) - max(b[k, 0], rect.min_x)
                h = min(b[k, 3], rect.max_y) - max(b[k, 1], rect.min_y)
                overlap = w * h if w > 0 and h > 0 else 0.0
            else:
                overlap = intersection_area(self.blocks[k].geometry, rect)
            if overlap > 0.0:
                yield self.blocks[k], overlap, self.areas[k]


def _as_block_index(blocks) -> BlockIndex:
    return blocks if isinstance(blocks, BlockIndex) else BlockIndex(blocks)


def disaggregate(chip: Chip, blocks, mode=DisaggregationMode.CONSERVATIVE) -> float:
    """Population assigned to ``chip`` as an overlap-weighted sum of blocks.

    PAPER_EQ1 weights each block count by overlap / chip area, so a chip
    lying inside one block receives that block's full count. CONSERVATIVE
    weights by overlap / block area, which preserves the block totals over
    any partition of the blocks.
    """
    mode = DisaggregationMode.parse(mode)
    total = 0.0
    for b, overlap, block_area in _as_block_index(blocks).terms(chip.world):
        if mode is DisaggregationMode.PAPER_EQ1:
            total += b.population * overlap / chip.area
        else:
            if block_area <= 0.0:
                raise LabelingError(f"block {b.block_id} has zero area but intersects chip {chip.chip_index}")
            total += b.population * overlap / block_area
    return max(total, 0.0)


def block_coverage(chip: Chip, blocks) -> float:
    return sum(overlap for _, overlap, _ in _as_block_index(blocks).terms(chip.world))


def _is_axis_rect(p: Polygon) -> bool:
    if len(p.ring) != 4:
        return False
    r = p.ring
    horiz_first = r[0].y == r[1].y and r[1].x == r[2].x and r[2].y == r[3].y and r[3].x == r[0].x
    vert_first = r[0].x == r[1].x and r[1].y == r[2].y and r[2].x == r[3].x and r[3].y == r[0].y
    return horiz_first or vert_first


def _pair_overlaps(a: Polygon, b: Polygon, both_rect: bool) -> bool:
    ba, bb = a.bbox(), b.bbox()
    box = ba.intersection(bb)
    if box is None:
        return False
    if both_rect:
        return True
    ca, cb = clip_polygon_rect(a, box), clip_polygon_rect(b, box)
    if ca is None or cb is None:
        return False
    ga = rasterize([ca], box, UNION_CELL_M)
    gb = rasterize([cb], box, UNION_CELL_M)
    return bool((ga.cells & gb.cells).any())


class FootprintIndex:
    """Bounding-box index over structure footprints.

    Axis-aligned rectangles are intersected in closed form; other shapes go
    through the polygon clipper. Footprints that overlap one another are
    unioned by rasterization inside each chip so shared area counts once.
    """

    def __init__(self, footprints: Sequence[Polygon]):
        self.footprints = list(footprints)
        n = len(self.footprints)
        self.bounds = np.array([p.bounds() for p in self.footprints], dtype=float).reshape(n, 4)
        self.areas = np.array([polygon_area(p) for p in self.footprints], dtype=float)
        self.is_rect = np.array([_is_axis_rect(p) for p in self.footprints], dtype=bool)
        self.overlapping = self._find_overlaps()
        if self.overlapping.any():
            log.info("%d of %d footprints overlap; unioning them at %.2f m", int(self.overlapping.sum()), n, UNION_CELL_M)

    def __len__(self):
        return len(self.footprints)

    def _find_overlaps(self) -> np.ndarray:
        n = len(self.footprints)
        flag = np.zeros(n, dtype=bool)
        if n < 2:
            return flag
        order = np.argsort(self.bounds[:, 0], kind="stable")
        b = self.bounds
        for pos, a in enumerate(order):
            ax1, ay0, ay1 = b[a, 2], b[a, 1], b[a, 3]
            for c in order[pos + 1:]:
                if b[c, 0] >= ax1:
                    break
                if b[c, 1] < ay1 and ay0 < b[c, 3]:
                    if _pair_overlaps(self.footprints[a], self.footprints[c], self.is_rect[a] and self.is_rect[c]):
                        flag[a] = flag[c] = True
        return flag

    def structure_area(self, rect: Rect) -> float:
        if not self.footprints:
            return 0.0
        b = self.bounds
        hit = (b[:, 0] < rect.max_x) & (b[:, 2] > rect.min_x) & (b[:, 1] < rect.max_y) & (b[:, 3] > rect.min_y)
        if not hit.any():
            return 0.0
        inside = (b[:, 0] >= rect.min_x) & (b[:, 2] <= rect.max_x) & (b[:, 1] >= rect.min_y) & (b[:, 3] <= rect.max_y)
        solo = hit & ~self.overlapping
        total = float(self.areas[solo & inside].sum())

        cut_rect = solo & ~inside & self.is_rect
        if cut_rect.any():
            w = np.minimum(b[cut_rect, 2], rect.max_x) - np.maximum(b[cut_rect, 0], rect.min_x)
            h = np.minimum(b[cut_rect, 3], rect.max_y) - np.maximum(b[cut_rect, 1], rect.min_y)
            total += float((np.clip(w, 0, None) * np.clip(h, 0, None)).sum())

        for k in np.flatnonzero(solo & ~inside & ~self.is_rect):
            total += intersection_area(self.footprints[k], rect)

        shared = np.flatnonzero(hit & self.overlapping)
        if shared.size:
            clipped = [clip_polygon_rect(self.footprints[k], rect) for k in shared]
            clipped = [c for c in clipped if c is not None]
            if clipped:
                total += rasterize(clipped, rect, UNION_CELL_M).covered_area
        return min(max(total, 0.0), rect.area)


def chip_structure_area(chip: Chip, footprints) -> float:
    """Total structure area inside the chip."""
    index = footprints if isinstance(footprints, FootprintIndex) else FootprintIndex(footprints)
    return min(index.structure_area(chip.world), chip.area)


def population_to_density(population: float, area: float) -> float:
    if not area > 0:
        raise LabelingError(f"area must be > 0, got {area}")
    return population / area


def density_to_population(density: float, area: float) -> float:
    if not area > 0:
        raise LabelingError(f"area must be > 0, got {area}")
    if density < 0 or not math.isfinite(density):
        raise LabelingError(f"density must be finite and >= 0, got {density}")
    return density * area


def label_chips(chips: Sequence[Chip], blocks, footprints, mode=DisaggregationMode.CONSERVATIVE):
    """Label every chip; all come back with ``kept=True``."""
    mode = DisaggregationMode.parse(mode)
    index = footprints if isinstance(footprints, FootprintIndex) else FootprintIndex(footprints)
    blocks = _as_block_index(blocks)
    out = []
    for chip in chips:
        pop = disaggregate(chip, blocks, mode)
        out.append(
            LabeledChip(
                chip=chip,
                population=pop,
                density=population_to_density(pop, chip.area),
                structure_area=chip_structure_area(chip, index),
                kept=True,
                block_area=block_coverage(chip, blocks),
            )
        )
    return out


def filter_test_chips(chips: Sequence[LabeledChip], min_structure_area: float = DEFAULT_MIN_STRUCTURE_AREA):
    """Mark chips with structures but no population as not kept.

    Such structures sit outside every block, so their chips carry no usable
    test label. Order is preserved and nothing is removed from the list.
    """
    return [
        replace(c, kept=not (c.structure_area > min_structure_area and c.population == 0.0))
        for c in chips
    ]


def label_record(lc: LabeledChip) -> dict:
    return {
        "scene_id": lc.chip.scene_id,
        "chip_index": lc.chip.chip_index,
        "population": lc.population,
        "density": lc.density,
        "structure_area": lc.structure_area,
        "kept": lc.kept,
        "block_area": lc.block_area,
    }


def write_labels(path, labels: Sequence[LabeledChip]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for lc in labels:
            fh.write(json.dumps(label_record(lc)) + "\n")


def read_labels(path, chips: Sequence[Chip]) -> list[LabeledChip]:
    """Re-attach labels.jsonl rows to their chips (matched on scene and index)."""
    by_key = {(c.scene_id, c.chip_index): c for c in chips}
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        rec = json.loads(line)
        key = (rec["scene_id"], rec["chip_index"])
        if key not in by_key:
            raise LabelingError(f"{path}:{lineno}: no chip for scene {key[0]} index {key[1]}")
        out.append(
            LabeledChip(
                chip=by_key[key],
                population=float(rec["population"]),
                density=float(rec["density"]),
                structure_area=float(rec["structure_area"]),
                kept=bool(rec["kept"]),
                block_area=float(rec.get("block_area", 0.0)),
            )
        )
    return out
