"""Training-box sampling and test-time tiling of scenes into chips.

Chip pixel coordinates ``(i, j)`` locate the chip's bottom-left corner in a
bottom-up pixel frame: ``i`` counts pixel rows up from the southern image
edge and ``j`` counts columns from the western edge.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import Rect
from .ingest import CampScene

TRAIN_SIZES = (224, 320, 480, 640, 720, 1024)
N_TRAIN_BOXES = 200
TEST_CHIP_PX = 224


@dataclass(frozen=True)
class Chip:
    scene_id: str
    chip_index: int
    i: int
    j: int
    l: int
    world: Rect
    area: float


def chip_world(scene: CampScene, i: int, j: int, l: int) -> Rect:
    """World rectangle of box (i, j, l), clipped to the scene bounds."""
    bottom = scene.origin.y - scene.height_px * scene.gsd
    top_px = min(i + l, scene.height_px)
    right_px = min(j + l, scene.width_px)
    return Rect(
        scene.origin.x + j * scene.gsd,
        bottom + i * scene.gsd,
        scene.origin.x + right_px * scene.gsd,
        bottom + top_px * scene.gsd,
    )


def make_chip(scene: CampScene, chip_index: int, i: int, j: int, l: int) -> Chip:
    world = chip_world(scene, i, j, l)
    return Chip(scene.scene_id, chip_index, i, j, l, world, world.area)


def sample_train_boxes(scene: CampScene, n: int = N_TRAIN_BOXES, sizes=TRAIN_SIZES, seed: int = 0) -> list[Chip]:
    """Draw ``n`` square boxes with uniformly random size and position.

    Sizes larger than either scene dimension are excluded. For every box the
    generator is consumed in a fixed order: size, then column, then row.
    """
    if n < 1:
        raise ConfigError(f"n must be >= 1, got {n}")
    feasible = [int(s) for s in sizes if s <= scene.width_px and s <= scene.height_px]
    if not feasible:
        raise ConfigError(
            f"scene {scene.scene_id} ({scene.width_px}x{scene.height_px} px) is smaller than "
            f"the smallest chip size {min(sizes)}"
        )
    rng = np.random.default_rng(seed)
    chips = []
    for k in range(n):
        l = feasible[int(rng.integers(len(feasible)))]
        j = int(rng.integers(0, scene.width_px - l + 1))
        i = int(rng.integers(0, scene.height_px - l + 1))
        chips.append(make_chip(scene, k, i, j, l))
    return chips


def tile_test_boxes(scene: CampScene, l: int = TEST_CHIP_PX) -> list[Chip]:
    """Non-overlapping stride-``l`` tiling that covers the whole scene.

    Tiles run row-major from the bottom-left corner. Remainder tiles at the
    far (east and north) edges are kept and clipped to the scene.
    """
    if l < 1:
        raise ConfigError(f"chip edge must be >= 1 px, got {l}")
    chips = []
    for i in range(0, scene.height_px, l):
        for j in range(0, scene.width_px, l):
            chips.append(make_chip(scene, len(chips), i, j, l))
    return chips


def is_tiling_chip(chip: Chip) -> bool:
    return chip.i % chip.l == 0 and chip.j % chip.l == 0


def chip_record(c: Chip) -> dict:
    return {
        "scene_id": c.scene_id,
        "chip_index": c.chip_index,
        "i": c.i,
        "j": c.j,
        "l": c.l,
        "min_x": c.world.min_x,
        "min_y": c.world.min_y,
        "max_x": c.world.max_x,
        "max_y": c.world.max_y,
        "area": c.area,
    }


def chip_from_record(rec: dict) -> Chip:
    return Chip(
        str(rec["scene_id"]),
        int(rec["chip_index"]),
        int(rec["i"]),
        int(rec["j"]),
        int(rec["l"]),
        Rect(rec["min_x"], rec["min_y"], rec["max_x"], rec["max_y"]),
        float(rec["area"]),
    )


def write_chips(path, chips):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for c in chips:
            fh.write(json.dumps(chip_record(c)) + "\n")


def read_chips(path) -> list[Chip]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [chip_from_record(json.loads(s)) for s in lines if s.strip()]
