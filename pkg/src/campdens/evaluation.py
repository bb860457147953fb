"""Camp-level aggregation, error metrics and result exports."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

from .baseline import HuberModel, predict
from .chipping import is_tiling_chip
from .errors import EvaluationError
from .geometry import local_to_latlon
from .ingest import CampScene, PredictionRecord
from .labeling import LabeledChip, density_to_population

TIMESERIES_HEADER = ("capture_date", "predicted_total", "reported_total")


@dataclass(frozen=True)
class SceneResult:
    scene_id: str
    camp_id: str
    capture_date: date
    predicted_total: float
    reported_total: float


@dataclass
class EvalReport:
    per_scene: list = field(default_factory=list)
    mae: float | None = None
    mape: float | None = None
    aggregation: str = "scene"

    def to_dict(self) -> dict:
        return {
            "aggregation": self.aggregation,
            "mae": self.mae,
            "mape": self.mape,
            "n_scenes": len(self.per_scene),
            "per_scene": [
                {
                    "scene_id": r.scene_id,
                    "camp_id": r.camp_id,
                    "capture_date": r.capture_date.isoformat(),
                    "predicted_total": r.predicted_total,
                    "reported_total": r.reported_total,
                }
                for r in self.per_scene
            ],
        }


def _fmt_indices(idx):
    idx = sorted(idx)
    head = ", ".join(str(i) for i in idx[:20])
    return head + (f", ... ({len(idx)} total)" if len(idx) > 20 else "")


def camp_total(chips: Sequence[LabeledChip], predictions: Mapping[int, float]) -> float:
    """Sum of per-chip predicted populations over the kept chips of one scene."""
    kept = {c.chip.chip_index for c in chips if c.kept}
    if not kept:
        raise EvaluationError("scene has no kept chips to evaluate")
    given = set(predictions)
    missing, extra = kept - given, given - kept
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing predictions for chips [{_fmt_indices(missing)}]")
        if extra:
            parts.append(f"unexpected predictions for chips [{_fmt_indices(extra)}]")
        raise EvaluationError("; ".join(parts))
    return math.fsum(float(predictions[i]) for i in sorted(kept))


def reported_total(chips: Sequence[LabeledChip]) -> float:
    return math.fsum(c.population for c in chips if c.kept)


def _check_pairs(pairs):
    pairs = [(float(p), float(r)) for p, r in pairs]
    if not pairs:
        raise EvaluationError("cannot compute a metric over zero pairs")
    return pairs


def mae(pairs) -> float:
    """Mean absolute error in persons."""
    pairs = _check_pairs(pairs)
    return math.fsum(abs(p - r) for p, r in pairs) / len(pairs)


def mape(pairs) -> float:
    """Mean absolute percent error; any zero reported value is an error."""
    pairs = _check_pairs(pairs)
    for k, (_, r) in enumerate(pairs):
        if r <= 0:
            raise EvaluationError(f"reported total must be > 0 for MAPE (pair {k} has {r})")
    return 100.0 * math.fsum(abs(p - r) / r for p, r in pairs) / len(pairs)


def predictions_from_model(model: HuberModel, labels: Sequence[LabeledChip]) -> dict[int, float]:
    return {c.chip.chip_index: float(predict(model, c.structure_area)) for c in labels if c.kept}


def predictions_from_records(records: Sequence[PredictionRecord], labels_by_scene: Mapping[str, Sequence[LabeledChip]]):
    """Convert per-chip density predictions to persons, per scene.

    Predictions for chips dropped by the test filter are ignored; chip
    indices outside the scene tiling and unknown scenes are errors.
    """
    chips = {sid: {c.chip.chip_index: c for c in labs} for sid, labs in labels_by_scene.items()}
    out: dict[str, dict[int, float]] = {sid: {} for sid in labels_by_scene}
    for rec in records:
        if rec.scene_id not in chips:
            raise EvaluationError(f"prediction for unknown scene_id {rec.scene_id!r}")
        lc = chips[rec.scene_id].get(rec.chip_index)
        if lc is None:
            raise EvaluationError(f"scene {rec.scene_id}: chip_index {rec.chip_index} is not in the test tiling")
        if rec.chip_index in out[rec.scene_id]:
            raise EvaluationError(f"scene {rec.scene_id}: duplicate prediction for chip {rec.chip_index}")
        if lc.kept:
            out[rec.scene_id][rec.chip_index] = density_to_population(rec.predicted_density, lc.chip.area)
    return out


def _aggregate(results, metric, aggregation):
    if aggregation == "scene":
        return metric([(r.predicted_total, r.reported_total) for r in results])
    if aggregation == "camp":
        by_camp = defaultdict(list)
        for r in results:
            by_camp[r.camp_id].append((r.predicted_total, r.reported_total))
        return math.fsum(metric(by_camp[c]) for c in sorted(by_camp)) / len(by_camp)
    raise EvaluationError(f"unknown aggregation {aggregation!r}; use 'scene' or 'camp'")


def report_from_results(results: Sequence[SceneResult], aggregation: str = "scene") -> EvalReport:
    results = sorted(results, key=lambda r: r.scene_id)
    return EvalReport(
        per_scene=results,
        mae=_aggregate(results, mae, aggregation),
        mape=_aggregate(results, mape, aggregation),
        aggregation=aggregation,
    )


def build_report(scenes: Sequence[CampScene], labels, predictions, aggregation: str = "scene") -> EvalReport:
    """Per-scene totals and metrics.

    ``labels`` and ``predictions`` are mappings keyed by scene_id; the
    latter maps chip_index to predicted persons.
    """
    results = []
    for scene in scenes:
        if scene.scene_id not in labels:
            raise EvaluationError(f"no labels for scene {scene.scene_id}")
        if scene.scene_id not in predictions:
            raise EvaluationError(f"no predictions for scene {scene.scene_id}")
        labs = labels[scene.scene_id]
        try:
            pred = camp_total(labs, predictions[scene.scene_id])
        except EvaluationError as exc:
            raise EvaluationError(f"scene {scene.scene_id}: {exc}") from None
        results.append(SceneResult(scene.scene_id, scene.camp_id, scene.capture_date, pred, reported_total(labs)))
    return report_from_results(results, aggregation)


def write_report(path, report: EvalReport):
    Path(path).write_text(json.dumps(report.to_dict(), indent=1) + "\n", encoding="utf-8")


def export_heatmap(scene: CampScene, labels: Sequence[LabeledChip], predictions: Mapping[int, float], include_unblocked: bool = False) -> dict:
    """Grid cells of predicted and reported density as a FeatureCollection.

    Chips that no block overlaps are left out unless ``include_unblocked``;
    their labels are zero by construction, not by observation.
    """
    feats = []
    for lc in labels:
        chip = lc.chip
        if not is_tiling_chip(chip):
            raise EvaluationError(f"chip {chip.chip_index} of {chip.scene_id} is not part of a test tiling")
        if not lc.kept:
            continue
        if lc.block_area <= 0.0 and not include_unblocked:
            continue
        if chip.chip_index not in predictions:
            raise EvaluationError(f"scene {scene.scene_id}: no prediction for chip {chip.chip_index}")
        w = chip.world
        ring = []
        for x, y in ((w.min_x, w.min_y), (w.max_x, w.min_y), (w.max_x, w.max_y), (w.min_x, w.max_y), (w.min_x, w.min_y)):
            lat, lon = local_to_latlon(x, y, scene.origin_lat, scene.origin_lon)
            ring.append([lon, lat])
        feats.append(
            {
                "type": "Feature",
                "properties": {
                    "scene_id": chip.scene_id,
                    "chip_index": chip.chip_index,
                    "predicted_density": float(predictions[chip.chip_index]) / chip.area,
                    "reported_density": lc.density,
                },
                "geometry": {"type": "Polygon", "coordinates": [ring]},
            }
        )
    return {"type": "FeatureCollection", "features": feats}


def merge_collections(collections) -> dict:
    feats = []
    for fc in collections:
        feats.extend(fc["features"])
    return {"type": "FeatureCollection", "features": feats}


def write_geojson(path, doc):
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def export_timeseries(results: Sequence[SceneResult]) -> dict[str, str]:
    """CSV text per camp, rows ordered by capture date."""
    if not results:
        raise EvaluationError("no scene results to export")
    by_camp = defaultdict(list)
    for r in results:
        by_camp[r.camp_id].append(r)
    out = {}
    for camp in sorted(by_camp):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for r in sorted(by_camp[camp], key=lambda r: (r.capture_date, r.scene_id)):
            w.writerow([r.capture_date.isoformat(), repr(r.predicted_total), repr(r.reported_total)])
        out[camp] = buf.getvalue()
    return out


def write_timeseries(directory, results) -> list[Path]:
    paths = []
    for camp, text in export_timeseries(results).items():
        p = Path(directory) / f"timeseries_{camp}.csv"
        p.write_text(text, encoding="utf-8", newline="")
        paths.append(p)
    return paths
