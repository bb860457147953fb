"""Scene-level orchestration shared by the CLI and the acceptance harness."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .baseline import FitConfig, HuberModel, fit_huber
from .chipping import TEST_CHIP_PX, TRAIN_SIZES, N_TRAIN_BOXES, sample_train_boxes, tile_test_boxes
from .evaluation import EvalReport, build_report, predictions_from_model
from .ingest import CampScene, MajheeBlock
from .labeling import (
    DEFAULT_MIN_STRUCTURE_AREA,
    DisaggregationMode,
    FootprintIndex,
    LabeledChip,
    blocks_for_scene,
    filter_test_chips,
    label_chips,
)

log = logging.getLogger(__name__)


@dataclass
class Dataset:
    scenes: list
    blocks: list
    # scene_id -> list of footprint polygons
    footprints: dict = field(default_factory=dict)

    @classmethod
    def from_camps(cls, camps) -> "Dataset":
        """Wrap generated camps without a round trip through files."""
        return cls(
            [c.scene for c in camps],
            [b for c in camps for b in c.blocks],
            {c.scene.scene_id: list(c.footprints) for c in camps},
        )


def scene_seed(seed: int, scene_index: int) -> int:
    return int(np.random.SeedSequence([seed, scene_index]).generate_state(1)[0])


def label_test_scene(scene: CampScene, blocks: Sequence[MajheeBlock], index: FootprintIndex, mode, l=TEST_CHIP_PX,
                     min_structure_area=DEFAULT_MIN_STRUCTURE_AREA) -> list[LabeledChip]:
    chips = tile_test_boxes(scene, l)
    labels = label_chips(chips, blocks_for_scene(blocks, scene), index, mode)
    return filter_test_chips(labels, min_structure_area)


def label_train_scene(scene: CampScene, blocks, index: FootprintIndex, mode, n=N_TRAIN_BOXES, sizes=TRAIN_SIZES,
                      seed=0) -> list[LabeledChip]:
    chips = sample_train_boxes(scene, n, sizes, seed)
    return label_chips(chips, blocks_for_scene(blocks, scene), index, mode)


@dataclass
class LabelRun:
    test: dict
    train: dict


def label_dataset(ds: Dataset, mode=DisaggregationMode.CONSERVATIVE, test_l=TEST_CHIP_PX, n_train=N_TRAIN_BOXES,
                  sizes=TRAIN_SIZES, seed=0, min_structure_area=DEFAULT_MIN_STRUCTURE_AREA) -> LabelRun:
    test, train = {}, {}
    for k, scene in enumerate(ds.scenes):
        index = FootprintIndex(ds.footprints.get(scene.scene_id, []))
        test[scene.scene_id] = label_test_scene(scene, ds.blocks, index, mode, test_l, min_structure_area)
        train[scene.scene_id] = label_train_scene(scene, ds.blocks, index, mode, n_train, sizes, scene_seed(seed, k))
        kept = sum(c.kept for c in test[scene.scene_id])
        log.info("scene %s: %d test chips (%d kept), %d train chips", scene.scene_id,
                 len(test[scene.scene_id]), kept, len(train[scene.scene_id]))
    return LabelRun(test, train)


def training_samples(train_labels: dict, scene_ids=None) -> list[tuple[float, float]]:
    out = []
    for sid in sorted(train_labels):
        if scene_ids is not None and sid not in scene_ids:
            continue
        out.extend((c.structure_area, c.population) for c in train_labels[sid])
    return out


def fit_baseline(train_labels: dict, cfg: FitConfig | None = None, scene_ids=None) -> HuberModel:
    return fit_huber(training_samples(train_labels, scene_ids), cfg)


def evaluate_baseline(scenes, test_labels: dict, model: HuberModel, aggregation="scene") -> EvalReport:
    preds = {sid: predictions_from_model(model, labs) for sid, labs in test_labels.items()}
    return build_report(scenes, test_labels, preds, aggregation)
