"""Command-line entry point: ``campdens {synth,label,train-baseline,evaluate}``.

Exit codes: 0 success, 2 configuration error, 3 ingest error,
4 computation error (labeling, fitting, evaluation).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .baseline import FitConfig, fit_huber, load_model, save_model
from .chipping import N_TRAIN_BOXES, TEST_CHIP_PX, TRAIN_SIZES, read_chips, write_chips
from .errors import (
    CampdensError,
    ConfigError,
    EvaluationError,
    FitError,
    GeometryError,
    IngestError,
    LabelingError,
)
from .evaluation import (
    build_report,
    export_heatmap,
    merge_collections,
    predictions_from_model,
    predictions_from_records,
    write_geojson,
    write_report,
    write_timeseries,
)
from .ingest import load_blocks, load_footprint_features, load_manifest, load_predictions
from .labeling import (
    DEFAULT_MIN_STRUCTURE_AREA,
    DisaggregationMode,
    blocks_for_scene,
    read_labels,
    write_labels,
)
from .pipeline import Dataset, label_dataset, training_samples
from .synth import SynthParams, generate_dataset, write_dataset

log = logging.getLogger("campdens")

EXIT_OK, EXIT_CONFIG, EXIT_INGEST, EXIT_COMPUTE = 0, 2, 3, 4


@dataclass
class RunConfig:
    blocks: str | None = None
    footprints: str | None = None
    manifest: str | None = None
    mode: str = "conservative"
    train_sizes: list = field(default_factory=lambda: list(TRAIN_SIZES))
    n_train_chips: int = N_TRAIN_BOXES
    test_chip_l: int = TEST_CHIP_PX
    min_structure_area: float = DEFAULT_MIN_STRUCTURE_AREA
    seed: int = 0
    out: str = "runs"
    # camps held out for evaluation; None trains and evaluates on every scene
    test_camps: list | None = None
    aggregation: str = "scene"
    include_unblocked: bool = False
    fit: dict = field(default_factory=dict)

    def validate(self):
        for name in ("n_train_chips", "test_chip_l", "seed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
        if self.n_train_chips < 1 or self.test_chip_l < 1:
            raise ConfigError("n_train_chips and test_chip_l must be >= 1")
        if not self.train_sizes or not all(isinstance(s, int) and not isinstance(s, bool) and s > 0 for s in self.train_sizes):
            raise ConfigError(f"train_sizes must be positive integers, got {self.train_sizes!r}")
        msa = self.min_structure_area
        if isinstance(msa, bool) or not isinstance(msa, (int, float)) or not math.isfinite(msa) or msa < 0:
            raise ConfigError(f"min_structure_area must be a number >= 0, got {msa!r}")
        try:
            DisaggregationMode.parse(self.mode)
        except LabelingError as exc:
            raise ConfigError(str(exc)) from None
        if self.aggregation not in ("scene", "camp"):
            raise ConfigError(f"aggregation must be 'scene' or 'camp', got {self.aggregation!r}")
        if self.test_camps is not None and not isinstance(self.test_camps, list):
            raise ConfigError("test_camps must be a list of camp ids or null")
        try:
            FitConfig(**self.fit)
        except (TypeError, FitError) as exc:
            raise ConfigError(f"invalid fit settings: {exc}") from None
        for name in ("blocks", "footprints", "manifest"):
            if getattr(self, name) is None:
                raise ConfigError(f"no {name} path given (use --dataset DIR or --{name} PATH)")

    def fit_config(self) -> FitConfig:
        return FitConfig(**self.fit)

    def hash_inputs(self) -> dict:
        """Resolved settings plus input file digests; the run directory name derives from this."""
        d = asdict(self)
        d.pop("out")
        for name in ("blocks", "footprints", "manifest"):
            d[name] = _file_digest(d[name])
        d["mode"] = DisaggregationMode.parse(self.mode).value
        return d

    def run_dir(self) -> Path:
        blob = json.dumps(self.hash_inputs(), sort_keys=True, separators=(",", ":")).encode()
        return Path(self.out) / f"run-{hashlib.sha256(blob).hexdigest()[:12]}"


def _file_digest(path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except FileNotFoundError:
        raise IngestError(f"{path}: file not found") from None


def _read_config_file(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return doc


def build_run_config(args) -> RunConfig:
    values = {}
    base = Path.cwd()
    if getattr(args, "config", None):
        values = _read_config_file(args.config)
        base = Path(args.config).resolve().parent
        dataset = values.pop("dataset", None)
        if dataset is not None:
            for name, fname in (("blocks", "blocks.geojson"), ("footprints", "footprints.geojson"), ("manifest", "manifest.json")):
                values.setdefault(name, str(Path(dataset) / fname))
        for name in ("blocks", "footprints", "manifest"):
            if values.get(name) is not None and not Path(values[name]).is_absolute():
                values[name] = str(base / values[name])
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    # flags win over the file
    if getattr(args, "dataset", None):
        d = Path(args.dataset)
        values["blocks"], values["footprints"], values["manifest"] = (
            str(d / "blocks.geojson"), str(d / "footprints.geojson"), str(d / "manifest.json"))
    for name in ("blocks", "footprints", "manifest", "mode", "seed", "out"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def _configure_logging():
    # unset means warnings and errors only, so data-quality warnings stay visible
    level = os.environ.get("CAMPDENS_LOG")
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level is not None and level.lower() not in levels:
        raise ConfigError(f"CAMPDENS_LOG must be one of error|info|debug, got {level!r}")
    threshold = logging.WARNING if level is None else levels[level.lower()]
    logging.basicConfig(level=threshold, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


# ------------------------------------------------------------------ dataset --


def load_dataset(cfg: RunConfig) -> Dataset:
    scenes = load_manifest(cfg.manifest)
    blocks = load_blocks(cfg.blocks)
    feats = load_footprint_features(cfg.footprints)
    by_scene = {s.scene_id: [] for s in scenes}
    for sid, poly in feats:
        if sid is None:
            for lst in by_scene.values():
                lst.append(poly)
        elif sid in by_scene:
            by_scene[sid].append(poly)
        else:
            raise IngestError(f"{cfg.footprints}: footprint tagged with unknown scene_id {sid!r}")
    log.info("loaded %d scenes, %d blocks, %d footprints", len(scenes), len(blocks), len(feats))
    return Dataset(scenes, blocks, by_scene)


def _test_scene_ids(cfg, ds):
    if cfg.test_camps is None:
        return [s.scene_id for s in ds.scenes]
    return [s.scene_id for s in ds.scenes if s.camp_id in cfg.test_camps]


def _train_scene_ids(cfg, ds):
    if cfg.test_camps is None:
        return [s.scene_id for s in ds.scenes]
    return [s.scene_id for s in ds.scenes if s.camp_id not in cfg.test_camps]


def _write_config(run_dir: Path, cfg: RunConfig):
    rec = cfg.hash_inputs()
    rec["paths"] = {"blocks": cfg.blocks, "footprints": cfg.footprints, "manifest": cfg.manifest}
    text = json.dumps(rec, indent=1, sort_keys=True) + "\n"
    (run_dir / "config.json").write_text(text, encoding="utf-8")


def _label_outputs(cfg: RunConfig, ds: Dataset, run_dir: Path):
    """Run chipping+labeling and write the four jsonl files."""
    mode = DisaggregationMode.parse(cfg.mode)
    run = label_dataset(ds, mode, cfg.test_chip_l, cfg.n_train_chips, tuple(cfg.train_sizes), cfg.seed,
                        cfg.min_structure_area)
    order = [s.scene_id for s in ds.scenes]
    write_chips(run_dir / "chips.jsonl", [lc.chip for sid in order for lc in run.test[sid]])
    write_labels(run_dir / "labels.jsonl", [lc for sid in order for lc in run.test[sid]])
    write_chips(run_dir / "train_chips.jsonl", [lc.chip for sid in order for lc in run.train[sid]])
    write_labels(run_dir / "train_labels.jsonl", [lc for sid in order for lc in run.train[sid]])
    for scene in ds.scenes:
        labs = run.test[scene.scene_id]
        total = math.fsum(b.population for b in blocks_for_scene(ds.blocks, scene))
        got = math.fsum(lc.population for lc in labs)
        rel = abs(got - total) / total if total > 0 else abs(got)
        log.info("scene %s: %d chips, %d kept, label sum %.3f vs block sum %.3f",
                 scene.scene_id, len(labs), sum(lc.kept for lc in labs), got, total)
        if mode is DisaggregationMode.PAPER_EQ1 and rel > 1e-6:
            log.warning("scene %s: paper-eq1 labels do not conserve population (sum %.1f vs blocks %.1f, %.2f%% off)",
                        scene.scene_id, got, total, 100 * rel)
    return run


def _read_label_file(run_dir: Path, stem: str):
    chips = read_chips(run_dir / f"{stem}chips.jsonl")
    labels = read_labels(run_dir / f"{stem}labels.jsonl", chips)
    out = {}
    for lc in labels:
        out.setdefault(lc.chip.scene_id, []).append(lc)
    return out


def _ensure_labels(cfg, ds, run_dir):
    if (run_dir / "labels.jsonl").exists() and (run_dir / "train_labels.jsonl").exists():
        return _read_label_file(run_dir, ""), _read_label_file(run_dir, "train_")
    run = _label_outputs(cfg, ds, run_dir)
    return run.test, run.train


def _prepare(cfg):
    ds = load_dataset(cfg)
    run_dir = cfg.run_dir()
    run_dir.mkdir(parents=True, exist_ok=True)
    _write_config(run_dir, cfg)
    return ds, run_dir


# ----------------------------------------------------------------- commands --


def cmd_synth(args) -> int:
    values = _read_config_file(args.config) if args.config else {}
    n_camps = values.pop("n_camps", 1)
    n_dates = values.pop("n_dates", 1)
    if args.seed is not None:
        values["seed"] = args.seed
    params = SynthParams.from_dict(values)
    camps = generate_dataset(params, n_camps, n_dates)
    blob = json.dumps({**params.to_dict(), "n_camps": n_camps, "n_dates": n_dates}, sort_keys=True).encode()
    out = Path(args.out or "runs") / f"synth-{hashlib.sha256(blob).hexdigest()[:12]}"
    write_dataset(out, camps, params, {"n_camps": n_camps, "n_dates": n_dates})
    log.info("wrote %d scenes to %s", len(camps), out)
    print(out)
    return EXIT_OK


def cmd_label(args) -> int:
    cfg = build_run_config(args)
    ds, run_dir = _prepare(cfg)
    _label_outputs(cfg, ds, run_dir)
    print(run_dir)
    return EXIT_OK


def cmd_train_baseline(args) -> int:
    cfg = build_run_config(args)
    ds, run_dir = _prepare(cfg)
    _, train = _ensure_labels(cfg, ds, run_dir)
    samples = training_samples(train, set(_train_scene_ids(cfg, ds)))
    log.info("fitting baseline on %d training chips", len(samples))
    model = fit_huber(samples, cfg.fit_config())
    save_model(run_dir / "model.json", model)
    log.info("slope %.6g persons/m2, intercept %.6g persons", model.slope, model.intercept)
    print(run_dir)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_run_config(args)
    ds, run_dir = _prepare(cfg)
    test, _ = _ensure_labels(cfg, ds, run_dir)
    scene_ids = _test_scene_ids(cfg, ds)
    if not scene_ids:
        raise ConfigError("no scenes selected for evaluation")
    scenes = [s for s in ds.scenes if s.scene_id in scene_ids]
    labels = {sid: test[sid] for sid in scene_ids}
    if args.predictions:
        records = load_predictions(args.predictions)
        preds = predictions_from_records(records, labels)
        tag = "pred-" + _file_digest(args.predictions)[:8]
    else:
        model_path = Path(args.model) if args.model else run_dir / "model.json"
        if not model_path.exists():
            raise ConfigError(f"no model at {model_path}; run train-baseline first or pass --model/--predictions")
        model = load_model(model_path)
        preds = {sid: predictions_from_model(model, labels[sid]) for sid in scene_ids}
        tag = "baseline-" + _file_digest(model_path)[:8]
    report = build_report(scenes, labels, preds, cfg.aggregation)
    out = run_dir / f"eval-{tag}"
    out.mkdir(exist_ok=True)
    write_report(out / "report.json", report)
    heat = merge_collections(export_heatmap(s, labels[s.scene_id], preds[s.scene_id], cfg.include_unblocked) for s in scenes)
    write_geojson(out / "heatmap.geojson", heat)
    write_timeseries(out, report.per_scene)
    log.info("MAE %.3f persons, MAPE %.3f%% over %d scenes", report.mae, report.mape, len(report.per_scene))
    print(out)
    return EXIT_OK


# ------------------------------------------------------------------- parser --


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", metavar="PATH", default=default, help="JSON run configuration")
    parser.add_argument("--seed", type=int, metavar="N", default=default, help="override the configured seed")
    parser.add_argument("--mode", choices=[m.value for m in DisaggregationMode], default=default,
                        help="disaggregation weighting")
    parser.add_argument("--out", metavar="DIR", default=default, help="base output directory")


def _dataset_flags(parser):
    parser.add_argument("--dataset", metavar="DIR", help="directory holding blocks.geojson, footprints.geojson, manifest.json")
    parser.add_argument("--blocks", metavar="PATH")
    parser.add_argument("--footprints", metavar="PATH")
    parser.add_argument("--manifest", metavar="PATH")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="campdens", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic camp dataset")
    _global_flags(p, suppress=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("label", help="tile scenes and compute chip labels")
    _global_flags(p, suppress=True)
    _dataset_flags(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train-baseline", help="fit the structure-area Huber baseline")
    _global_flags(p, suppress=True)
    _dataset_flags(p)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("evaluate", help="aggregate predictions and score camp totals")
    _global_flags(p, suppress=True)
    _dataset_flags(p)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--model", metavar="PATH", help="baseline model.json (default: the run's own)")
    src.add_argument("--predictions", metavar="PATH", help="external per-chip density predictions CSV")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (IngestError, GeometryError)):
        return EXIT_INGEST
    if isinstance(exc, (LabelingError, FitError, EvaluationError)):
        return EXIT_COMPUTE
    return EXIT_COMPUTE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _configure_logging()
        return args.func(args)
    except CampdensError as exc:
        print(f"campdens {args.command}: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
