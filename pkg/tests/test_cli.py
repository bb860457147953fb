import hashlib
import json
import logging
import math
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from campdens.chipping import read_chips
from campdens.cli import main
from campdens.evaluation import build_report
from campdens.ingest import load_blocks, load_manifest
from campdens.labeling import read_labels, select_blocks

from schemas import CHIP, LABEL, MANIFEST, MODEL, check_eval_outputs


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out.strip(), err


def tree_digest(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


def jsonl(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Two noiseless default-size camps written by the synth command."""
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "synth.json"
    cfg.write_text(json.dumps({"n_camps": 2, "n_dates": 1, "concave_block": True}))
    assert main(["synth", "--config", str(cfg), "--out", str(root / "data")]) == 0
    (d,) = (root / "data").iterdir()
    return d


@pytest.fixture()
def out(tmp_path):
    return tmp_path / "runs"


class TestSynth:
    def test_default_params(self, capsys, tmp_path):
        code, path, _ = run(capsys, "synth", "--out", tmp_path)
        assert code == 0
        names = sorted(p.name for p in Path(path).iterdir())
        assert names == ["blocks.geojson", "footprints.geojson", "manifest.json", "synth_meta.json"]
        jsonschema.validate(json.loads((Path(path) / "manifest.json").read_text()), MANIFEST)

    def test_bad_seed_type(self, capsys, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"seed": "abc"}))
        code, _, err = run(capsys, "synth", "--config", cfg, "--out", tmp_path)
        assert code == 2 and "seed" in err

    def test_bad_seed_flag(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["synth", "--seed", "x", "--out", str(tmp_path)])
        assert info.value.code == 2

    def test_unknown_param(self, capsys, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"n_structurez": 5}))
        assert run(capsys, "synth", "--config", cfg)[0] == 2

    def test_deterministic(self, capsys, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"scene_px": [900, 700], "block_grid": [6, 6], "n_structures": 100, "n_dates": 2}))
        _, a, _ = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "a")
        _, b, _ = run(capsys, "synth", "--config", cfg, "--out", tmp_path / "b")
        assert Path(a).name == Path(b).name
        assert tree_digest(Path(a)) == tree_digest(Path(b))
        _, c, _ = run(capsys, "synth", "--config", cfg, "--seed", 5, "--out", tmp_path / "a")
        assert Path(c) != Path(a)


class TestLabel:
    def test_conservation_and_schema(self, capsys, dataset, out):
        code, run_dir, _ = run(capsys, "label", "--dataset", dataset, "--out", out)
        assert code == 0
        run_dir = Path(run_dir)
        for name in ("chips.jsonl", "labels.jsonl", "train_chips.jsonl", "train_labels.jsonl", "config.json"):
            assert (run_dir / name).exists()
        for rec in jsonl(run_dir / "chips.jsonl")[:50]:
            jsonschema.validate(rec, CHIP)
        labels = jsonl(run_dir / "labels.jsonl")
        for rec in labels[:50]:
            jsonschema.validate(rec, LABEL)
        blocks = load_blocks(dataset / "blocks.geojson")
        for scene in load_manifest(dataset / "manifest.json"):
            got = math.fsum(r["population"] for r in labels if r["scene_id"] == scene.scene_id)
            want = math.fsum(b.population for b in select_blocks(blocks, scene.camp_id, scene.capture_date))
            assert got == pytest.approx(want, rel=1e-6)
        assert len(jsonl(run_dir / "train_labels.jsonl")) == 200 * 2

    def test_paper_mode_differs_and_warns(self, capsys, dataset, out, caplog):
        _, cons_dir, _ = run(capsys, "label", "--dataset", dataset, "--out", out)
        with caplog.at_level(logging.WARNING):
            code, paper_dir, err = run(capsys, "label", "--dataset", dataset, "--out", out, "--mode", "paper-eq1")
        assert code == 0 and paper_dir != cons_dir
        assert "do not conserve" in err or "do not conserve" in caplog.text
        cons = {(r["scene_id"], r["chip_index"]): r["population"] for r in jsonl(Path(cons_dir) / "labels.jsonl")}
        paper = {(r["scene_id"], r["chip_index"]): r["population"] for r in jsonl(Path(paper_dir) / "labels.jsonl")}
        assert cons.keys() == paper.keys()
        assert sum(abs(cons[k] - paper[k]) > 1e-6 * max(1.0, cons[k]) for k in cons) > len(cons) // 2

    def test_missing_blocks_file(self, capsys, dataset, out):
        code, _, err = run(
            capsys, "label", "--blocks", dataset / "nope.geojson",
            "--footprints", dataset / "footprints.geojson", "--manifest", dataset / "manifest.json", "--out", out,
        )
        assert code == 3 and "nope.geojson" in err

    def test_missing_dataset_paths(self, capsys, out):
        assert run(capsys, "label", "--out", out)[0] == 2

    def test_config_file_and_flag_override(self, capsys, dataset, out, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"dataset": str(dataset), "mode": "paper-eq1", "test_chip_l": 448, "seed": 3}))
        _, run_dir, _ = run(capsys, "label", "--config", cfg, "--out", out, "--mode", "conservative")
        rec = json.loads((Path(run_dir) / "config.json").read_text())
        assert rec["mode"] == "conservative" and rec["test_chip_l"] == 448 and rec["seed"] == 3
        _, again, _ = run(capsys, "--config", cfg, "--mode", "conservative", "label", "--out", out)
        assert again == run_dir

    def test_bad_config_value(self, capsys, dataset, out, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"dataset": str(dataset), "n_train_chips": "many"}))
        assert run(capsys, "label", "--config", cfg, "--out", out)[0] == 2

    def test_bad_log_level(self, capsys, dataset, out, monkeypatch):
        monkeypatch.setenv("CAMPDENS_LOG", "loud")
        assert run(capsys, "label", "--dataset", dataset, "--out", out)[0] == 2

    def test_idempotent(self, capsys, dataset, tmp_path):
        _, a, _ = run(capsys, "label", "--dataset", dataset, "--out", tmp_path / "x")
        _, b, _ = run(capsys, "label", "--dataset", dataset, "--out", tmp_path / "y")
        assert tree_digest(Path(a)) == tree_digest(Path(b))


class TestTrain:
    def test_noiseless_slope(self, capsys, dataset, out):
        code, run_dir, _ = run(capsys, "train-baseline", "--dataset", dataset, "--out", out)
        assert code == 0
        model = json.loads((Path(run_dir) / "model.json").read_text())
        jsonschema.validate(model, MODEL)
        alpha = json.loads((dataset / "synth_meta.json").read_text())["true_alpha"]
        assert abs(model["slope"] - alpha) / alpha < 0.02

    def test_rerun_identical_model(self, capsys, dataset, tmp_path):
        _, a, _ = run(capsys, "train-baseline", "--dataset", dataset, "--out", tmp_path / "a")
        _, b, _ = run(capsys, "train-baseline", "--dataset", dataset, "--out", tmp_path / "b")
        assert (Path(a) / "model.json").read_bytes() == (Path(b) / "model.json").read_bytes()

    def test_too_few_samples(self, capsys, tmp_path):
        cfg = tmp_path / "p.json"
        cfg.write_text(json.dumps({"scene_px": [600, 600], "block_grid": [3, 3], "n_structures": 40}))
        _, data, _ = run(capsys, "synth", "--config", cfg, "--out", tmp_path)
        run_cfg = tmp_path / "run.json"
        run_cfg.write_text(json.dumps({"dataset": data, "n_train_chips": 1}))
        code, _, err = run(capsys, "train-baseline", "--config", run_cfg, "--out", tmp_path / "runs")
        assert code == 4 and "at least 2 samples" in err


class TestEvaluate:
    def test_baseline_outputs(self, capsys, dataset, out):
        run(capsys, "train-baseline", "--dataset", dataset, "--out", out)
        code, eval_dir, _ = run(capsys, "evaluate", "--dataset", dataset, "--out", out)
        assert code == 0
        report = check_eval_outputs(eval_dir)
        assert report["n_scenes"] == 2 and report["mape"] < 1.0

    def test_report_matches_independent_recomputation(self, capsys, dataset, out):
        run(capsys, "train-baseline", "--dataset", dataset, "--out", out)
        _, eval_dir, _ = run(capsys, "evaluate", "--dataset", dataset, "--out", out)
        run_dir = Path(eval_dir).parent
        model = json.loads((run_dir / "model.json").read_text())
        pred, rep = {}, {}
        for r in jsonl(run_dir / "labels.jsonl"):
            if r["kept"]:
                p = max(0.0, model["slope"] * r["structure_area"] + model["intercept"])
                pred[r["scene_id"]] = pred.get(r["scene_id"], 0.0) + p
                rep[r["scene_id"]] = rep.get(r["scene_id"], 0.0) + r["population"]
        want_mape = 100 * sum(abs(pred[s] - rep[s]) / rep[s] for s in rep) / len(rep)
        want_mae = sum(abs(pred[s] - rep[s]) for s in rep) / len(rep)
        report = json.loads((Path(eval_dir) / "report.json").read_text())
        assert report["mape"] == pytest.approx(want_mape, rel=1e-9)
        assert report["mae"] == pytest.approx(want_mae, rel=1e-9)

    def test_perfect_predictions_and_path_equivalence(self, capsys, dataset, out, tmp_path):
        _, run_dir, _ = run(capsys, "label", "--dataset", dataset, "--out", out)
        labels = jsonl(Path(run_dir) / "labels.jsonl")
        csv_path = tmp_path / "predictions.csv"
        lines = ["scene_id,chip_index,predicted_density"]
        lines += [f"{r['scene_id']},{r['chip_index']},{r['density']!r}" for r in labels]
        csv_path.write_text("\n".join(lines) + "\n")
        code, eval_dir, _ = run(capsys, "evaluate", "--dataset", dataset, "--out", out, "--predictions", csv_path)
        assert code == 0
        report = check_eval_outputs(eval_dir)
        assert report["mape"] == pytest.approx(0.0, abs=1e-9)
        assert report["mae"] == pytest.approx(0.0, abs=1e-6)

        # the same values fed in-process give the same report
        chips = read_chips(Path(run_dir) / "chips.jsonl")
        labs = read_labels(Path(run_dir) / "labels.jsonl", chips)
        by_scene = {}
        for lc in labs:
            by_scene.setdefault(lc.chip.scene_id, []).append(lc)
        preds = {sid: {lc.chip.chip_index: lc.density * lc.chip.area for lc in v if lc.kept} for sid, v in by_scene.items()}
        direct = build_report(load_manifest(dataset / "manifest.json"), by_scene, preds).to_dict()
        for a, b in zip(report["per_scene"], direct["per_scene"]):
            assert a["predicted_total"] == pytest.approx(b["predicted_total"], rel=1e-12)
            assert a["reported_total"] == b["reported_total"]

    def test_unknown_scene_in_predictions(self, capsys, dataset, out, tmp_path):
        csv_path = tmp_path / "predictions.csv"
        csv_path.write_text("scene_id,chip_index,predicted_density\nghost,0,0.1\n")
        code, _, err = run(capsys, "evaluate", "--dataset", dataset, "--out", out, "--predictions", csv_path)
        assert code == 4 and "ghost" in err

    def test_negative_prediction_is_ingest_error(self, capsys, dataset, out, tmp_path):
        csv_path = tmp_path / "predictions.csv"
        csv_path.write_text("scene_id,chip_index,predicted_density\nC01-2019-01-15,0,-1\n")
        assert run(capsys, "evaluate", "--dataset", dataset, "--out", out, "--predictions", csv_path)[0] == 3

    def test_without_model(self, capsys, dataset, tmp_path):
        assert run(capsys, "evaluate", "--dataset", dataset, "--out", tmp_path / "fresh")[0] == 2

    def test_held_out_camps(self, capsys, dataset, out, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"dataset": str(dataset), "test_camps": ["C02"]}))
        run(capsys, "train-baseline", "--config", cfg, "--out", out)
        _, eval_dir, _ = run(capsys, "evaluate", "--config", cfg, "--out", out)
        report = check_eval_outputs(eval_dir)
        assert [r["camp_id"] for r in report["per_scene"]] == ["C02"]


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "campdens.cli", "synth", "--config", str(tmp_path / "missing.json")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2 and "not found" in proc.stderr
