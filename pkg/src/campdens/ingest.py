"""Readers and writers for the on-disk dataset formats.

A dataset directory holds ``blocks.geojson`` (population polygons),
``footprints.geojson`` (structure outlines) and ``manifest.json`` (scene
inventory). GeoJSON positions are WGS84 ``[lon, lat]``; both GeoJSON files
carry a top-level ``projection_origin`` member ``{"lat": .., "lon": ..}``
that fixes the local metric frame. External model outputs arrive as
``predictions.csv``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .errors import GeometryError, IngestError
from .geometry import Point2, Polygon, Rect, latlon_to_local, local_to_latlon

PREDICTIONS_HEADER = ("scene_id", "chip_index", "predicted_density")
MANIFEST_FIELDS = (
    "scene_id",
    "camp_id",
    "capture_date",
    "origin_lat",
    "origin_lon",
    "origin_x",
    "origin_y",
    "width_px",
    "height_px",
    "gsd",
)


@dataclass(frozen=True)
class MajheeBlock:
    block_id: str
    camp_id: str
    assessment_date: date
    population: float
    geometry: Polygon


@dataclass(frozen=True)
class CampScene:
    """Georeferenced scene; pixel (row, col) maps to
    ``(origin.x + col*gsd, origin.y - row*gsd)`` with row 0 at the north edge."""

    scene_id: str
    camp_id: str
    capture_date: date
    origin: Point2
    width_px: int
    height_px: int
    gsd: float
    origin_lat: float = 0.0
    origin_lon: float = 0.0

    def __post_init__(self):
        if not (isinstance(self.gsd, (int, float)) and math.isfinite(self.gsd) and self.gsd > 0):
            raise IngestError(f"scene {self.scene_id}: gsd must be > 0, got {self.gsd!r}")
        for name in ("width_px", "height_px"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise IngestError(f"scene {self.scene_id}: {name} must be a positive integer, got {v!r}")

    @property
    def extent(self) -> Rect:
        return Rect(
            self.origin.x,
            self.origin.y - self.height_px * self.gsd,
            self.origin.x + self.width_px * self.gsd,
            self.origin.y,
        )


@dataclass(frozen=True)
class PredictionRecord:
    scene_id: str
    chip_index: int
    predicted_density: float


# ---------------------------------------------------------------- GeoJSON ----


def _read_json(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise IngestError(f"{path}: file not found") from None
    except json.JSONDecodeError as exc:
        raise IngestError(f"{path}: invalid JSON ({exc})") from None


def _feature_collection(doc, path):
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise IngestError(f"{path}: not a GeoJSON FeatureCollection")
    feats = doc.get("features")
    if not isinstance(feats, list):
        raise IngestError(f"{path}: FeatureCollection has no 'features' array")
    return feats


def _projection_origin(doc, origin, path):
    if origin is not None:
        return float(origin[0]), float(origin[1])
    po = doc.get("projection_origin")
    try:
        return float(po["lat"]), float(po["lon"])
    except (TypeError, KeyError, ValueError):
        raise IngestError(f"{path}: no projection_origin declared and none supplied") from None


def _ring_from_geometry(geom, origin_lat, origin_lon):
    if not isinstance(geom, dict) or geom.get("type") != "Polygon":
        raise GeometryError("geometry must be a GeoJSON Polygon")
    rings = geom.get("coordinates")
    if not isinstance(rings, list) or not rings:
        raise GeometryError("Polygon has no coordinates")
    if len(rings) > 1:
        raise GeometryError("polygons with holes are not supported")
    pts = []
    for pos in rings[0]:
        if not isinstance(pos, (list, tuple)) or len(pos) < 2:
            raise GeometryError(f"bad position {pos!r}")
        lon, lat = float(pos[0]), float(pos[1])
        pts.append(latlon_to_local(lat, lon, origin_lat, origin_lon))
    return Polygon.from_coords(pts)


def _parse_date(value, what):
    if not isinstance(value, str):
        raise IngestError(f"{what}: date must be an ISO-8601 string, got {value!r}")
    try:
        return date.fromisoformat(value)
    except ValueError:
        raise IngestError(f"{what}: malformed date {value!r}") from None


def parse_blocks(doc, origin=None, path="<memory>"):
    """Parse a blocks FeatureCollection; returns ``(blocks, problems)``.

    Every input feature yields either one block or one problem string.
    """
    feats = _feature_collection(doc, path)
    olat, olon = _projection_origin(doc, origin, path)
    blocks, problems, seen = [], [], set()
    for idx, feat in enumerate(feats):
        props = feat.get("properties") if isinstance(feat, dict) else None
        if not isinstance(props, dict):
            problems.append(f"feature {idx}: missing properties")
            continue
        missing = [k for k in ("block_id", "camp_id", "date", "population") if k not in props]
        if missing:
            problems.append(f"feature {idx}: missing property {missing[0]!r}")
            continue
        block_id = str(props["block_id"])
        try:
            pop = props["population"]
            if isinstance(pop, bool) or not isinstance(pop, (int, float)) or not math.isfinite(pop):
                raise IngestError(f"population must be a finite number, got {pop!r}")
            if pop < 0:
                raise IngestError(f"negative population {pop}")
            when = _parse_date(props["date"], "date")
            geom = _ring_from_geometry(feat.get("geometry"), olat, olon)
        except (IngestError, GeometryError, ValueError, TypeError) as exc:
            problems.append(f"feature {idx} (block {block_id}): {exc}")
            continue
        key = (block_id, when)
        if key in seen:
            problems.append(f"feature {idx}: duplicate block {block_id} on {when.isoformat()}")
            continue
        seen.add(key)
        blocks.append(MajheeBlock(block_id, str(props["camp_id"]), when, float(pop), geom))
    return blocks, problems


def parse_footprints(doc, origin=None, path="<memory>"):
    """Parse a footprints FeatureCollection into ``([(scene_id|None, Polygon)], problems)``."""
    feats = _feature_collection(doc, path)
    olat, olon = _projection_origin(doc, origin, path)
    out, problems = [], []
    for idx, feat in enumerate(feats):
        if not isinstance(feat, dict):
            problems.append(f"feature {idx}: not an object")
            continue
        props = feat.get("properties") or {}
        try:
            geom = _ring_from_geometry(feat.get("geometry"), olat, olon)
        except (GeometryError, ValueError, TypeError) as exc:
            problems.append(f"feature {idx}: {exc}")
            continue
        sid = props.get("scene_id")
        out.append((None if sid is None else str(sid), geom))
    return out, problems


def _raise_problems(path, problems):
    if problems:
        more = f" (+{len(problems) - 1} more)" if len(problems) > 1 else ""
        raise IngestError(f"{path}: {problems[0]}{more}")


def load_blocks(path, origin=None) -> list[MajheeBlock]:
    doc = _read_json(path)
    blocks, problems = parse_blocks(doc, origin, path)
    _raise_problems(path, problems)
    return blocks


def load_footprint_features(path, origin=None) -> list[tuple[str | None, Polygon]]:
    doc = _read_json(path)
    items, problems = parse_footprints(doc, origin, path)
    _raise_problems(path, problems)
    return items


def load_footprints(path, origin=None, scene_id=None) -> list[Polygon]:
    """Structure outlines; with ``scene_id``, only those tagged for that scene
    or untagged."""
    items = load_footprint_features(path, origin)
    return [p for sid, p in items if scene_id is None or sid is None or sid == scene_id]


def _geojson_ring(poly: Polygon, origin_lat, origin_lon):
    pts = []
    for x, y in poly.ring:
        lat, lon = local_to_latlon(x, y, origin_lat, origin_lon)
        pts.append([lon, lat])
    pts.append(pts[0])
    return {"type": "Polygon", "coordinates": [pts]}


def _dump_collection(path, features, origin_lat, origin_lon):
    doc = {
        "type": "FeatureCollection",
        "projection_origin": {"lat": origin_lat, "lon": origin_lon},
        "features": features,
    }
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n", encoding="utf-8")


def write_blocks(path, blocks, origin_lat, origin_lon):
    feats = [
        {
            "type": "Feature",
            "properties": {
                "block_id": b.block_id,
                "camp_id": b.camp_id,
                "date": b.assessment_date.isoformat(),
                "population": b.population,
            },
            "geometry": _geojson_ring(b.geometry, origin_lat, origin_lon),
        }
        for b in blocks
    ]
    _dump_collection(path, feats, origin_lat, origin_lon)


def write_footprints(path, footprints, origin_lat, origin_lon, scene_ids=None):
    feats = []
    for k, fp in enumerate(footprints):
        props = {} if scene_ids is None else {"scene_id": scene_ids[k]}
        feats.append({"type": "Feature", "properties": props, "geometry": _geojson_ring(fp, origin_lat, origin_lon)})
    _dump_collection(path, feats, origin_lat, origin_lon)


# --------------------------------------------------------------- manifest ----


def _num(rec, key, sid):
    v = rec.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise IngestError(f"scene {sid}: field {key!r} must be a finite number, got {v!r}")
    return v


def scene_from_record(rec) -> CampScene:
    if not isinstance(rec, dict):
        raise IngestError(f"manifest entry is not an object: {rec!r}")
    missing = [k for k in MANIFEST_FIELDS if k not in rec]
    sid = rec.get("scene_id", "?")
    if missing:
        raise IngestError(f"scene {sid}: missing field {missing[0]!r}")
    gsd = _num(rec, "gsd", sid)
    if gsd <= 0:
        raise IngestError(f"scene {sid}: gsd must be > 0, got {gsd}")
    olat, olon = _num(rec, "origin_lat", sid), _num(rec, "origin_lon", sid)
    if abs(olat) > 90 or abs(olon) > 180:
        raise IngestError(f"scene {sid}: projection origin out of range")
    return CampScene(
        scene_id=str(rec["scene_id"]),
        camp_id=str(rec["camp_id"]),
        capture_date=_parse_date(rec["capture_date"], f"scene {sid} capture_date"),
        origin=Point2(float(_num(rec, "origin_x", sid)), float(_num(rec, "origin_y", sid))),
        width_px=rec["width_px"],
        height_px=rec["height_px"],
        gsd=float(gsd),
        origin_lat=float(olat),
        origin_lon=float(olon),
    )


def parse_manifest(doc) -> list[CampScene]:
    if not isinstance(doc, list):
        raise IngestError("manifest must be a JSON array of scene records")
    scenes, seen = [], set()
    for rec in doc:
        scene = scene_from_record(rec)
        if scene.scene_id in seen:
            raise IngestError(f"duplicate scene_id {scene.scene_id!r}")
        seen.add(scene.scene_id)
        scenes.append(scene)
    return scenes


def load_manifest(path) -> list[CampScene]:
    doc = _read_json(path)
    try:
        return parse_manifest(doc)
    except IngestError as exc:
        raise IngestError(f"{path}: {exc}") from None


def scene_record(s: CampScene) -> dict:
    return {
        "scene_id": s.scene_id,
        "camp_id": s.camp_id,
        "capture_date": s.capture_date.isoformat(),
        "origin_lat": s.origin_lat,
        "origin_lon": s.origin_lon,
        "origin_x": s.origin.x,
        "origin_y": s.origin.y,
        "width_px": s.width_px,
        "height_px": s.height_px,
        "gsd": s.gsd,
    }


def write_manifest(path, scenes):
    Path(path).write_text(json.dumps([scene_record(s) for s in scenes], indent=1) + "\n", encoding="utf-8")


# ------------------------------------------------------------ predictions ----


def parse_predictions(text: str) -> list[PredictionRecord]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("predictions file is empty") from None
    if tuple(header) != PREDICTIONS_HEADER:
        raise IngestError(f"predictions header must be {','.join(PREDICTIONS_HEADER)!r}, got {','.join(header)!r}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise IngestError(f"line {lineno}: expected 3 fields, got {len(row)}")
        sid, idx, dens = row
        try:
            chip_index = int(idx)
            density = float(dens)
        except ValueError:
            raise IngestError(f"line {lineno}: non-numeric field in {row!r}") from None
        if not math.isfinite(density) or density < 0:
            raise IngestError(f"line {lineno}: predicted_density must be finite and >= 0, got {dens}")
        out.append(PredictionRecord(sid, chip_index, density))
    return out


def load_predictions(path) -> list[PredictionRecord]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise IngestError(f"{path}: file not found") from None
    try:
        return parse_predictions(text)
    except IngestError as exc:
        raise IngestError(f"{path}: {exc}") from None


def write_predictions(path, records):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREDICTIONS_HEADER)
        for r in records:
            w.writerow([r.scene_id, r.chip_index, repr(float(r.predicted_density))])
