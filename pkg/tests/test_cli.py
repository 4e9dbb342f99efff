import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from demcurate.cli import main
from demcurate.config import DEFAULT_CONFIG_YAML
from demcurate.grid import GeoFootprint, RasterSample, grid_read, grid_write
from demcurate.ingest import save_sample

SMALL = "synth:\n  width: 560\n  height: 600\n  frame_angle: 6.0\n"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.yaml"
    cfg.write_text(SMALL)
    assert main(["synth", "--config", str(cfg), "--output", str(root / "raw"), "--count", "2", "--seed", "7"]) == 0
    assert main(["process", "--config", str(cfg), "--input", str(root / "raw"), "--output", str(root / "ds")]) == 0
    assert main(["split", "--input", str(root / "ds"), "--seed", "7"]) == 0
    return root


def test_print_default_config(capsys):
    assert main(["--print-default-config"]) == 0
    assert capsys.readouterr().out == DEFAULT_CONFIG_YAML


def test_usage_and_config_errors(tmp_path, capsys):
    assert main([]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["process", "--input", "x"])
    assert exc.value.code == 3
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense: 1\n")
    assert main(["synth", "--config", str(bad), "--output", str(tmp_path / "o")]) == 3
    assert main(["synth", "--output", str(tmp_path / "o"), "--threads", "0"]) == 3


def test_internal_error_exit(tmp_path):
    assert main(["process", "--input", str(tmp_path / "nope"), "--output", str(tmp_path / "o")]) == 1


def test_process_outputs(dataset):
    ds = dataset / "ds"
    manifest = rows(ds / "dataset-manifest.csv")
    assert manifest and {r["split"] for r in manifest} <= {"train", "val"}
    for r in manifest:
        d = ds / r["split"] / f"{r['sample_id']}_{r['row0']}_{r['col0']}"
        assert grid_read(d / "dem.mgrd").shape == (518, 518)
    assert (ds / "rejections.csv").is_file() and (ds / "clusters.json").is_file()


def test_resume_skips_completed(dataset, capsys):
    before = (dataset / "ds" / "dataset-manifest.csv").read_bytes()
    cfg = dataset / "cfg.yaml"
    shutil.copytree(dataset / "ds", dataset / "ds2")
    assert main(["process", "--config", str(cfg), "--input", str(dataset / "raw"), "--output", str(dataset / "ds2")]) == 0
    assert (dataset / "ds2" / "dataset-manifest.csv").read_bytes() == before


def test_verify_detects_hand_edited_leak(dataset, capsys):
    ds = dataset / "leak"
    shutil.copytree(dataset / "ds", ds)
    assert main(["split", "--input", str(ds), "--verify-only"]) == 0
    samples = json.loads((ds / "samples.json").read_text())
    ids = sorted(samples)
    # make the two samples overlap on the ground, then put them in different splits
    samples[ids[1]]["left"] = samples[ids[0]]["left"]
    (ds / "samples.json").write_text(json.dumps(samples))
    clusters = [{"cluster_id": i, "members": [sid], "patch_count": 1, "split": split}
                for i, (sid, split) in enumerate(zip(ids, ("train", "val")))]
    (ds / "clusters.json").write_text(json.dumps(clusters))
    capsys.readouterr()
    assert main(["split", "--input", str(ds), "--verify-only"]) == 2
    assert f"leakage: {ids[0]} {ids[1]}" in capsys.readouterr().err


def test_stats_and_eval(dataset, tmp_path):
    ds = dataset / "ds"
    assert main(["stats", "--input", str(ds)]) == 0
    for name in ("elevation_metric.csv", "elevation_standardized.csv", "masked_fraction.csv",
                 "mean_slope.csv", "patches.csv", "summary.json"):
        assert (ds / "stats" / name).is_file()
    assert main(["stats", "--input", str(ds), "--output", str(tmp_path)]) == 3

    pred = tmp_path / "pred"
    for r in rows(ds / "dataset-manifest.csv"):
        name = f"{r['sample_id']}_{r['row0']}_{r['col0']}"
        (pred / r["split"] / name).mkdir(parents=True)
        shutil.copy(ds / r["split"] / name / "dem.mgrd", pred / r["split"] / name / "pred.mgrd")
    out = tmp_path / "eval"
    assert main(["eval", "--input", str(pred), "--dataset", str(ds), "--output", str(out)]) == 0
    agg = [r for r in rows(out / "metrics.csv") if r["sample_id"] == "mean"]
    assert len(agg) == 1
    assert all(float(agg[0][k]) == 0 for k in ("rmse", "mae", "rel_err", "rel_abs_err"))
    assert (out / "cdf.csv").is_file() and (out / "bins.csv").is_file()
    assert main(["eval", "--input", str(tmp_path / "empty"), "--dataset", str(ds), "--output", str(out)]) == 1


def test_all_black_sample_rejected_black(tmp_path):
    fp = GeoFootprint(0, 1, 0, 1)
    dem = np.random.default_rng(0).normal(size=(600, 560)).astype(np.float32) * 100
    s = RasterSample("dark", np.zeros((600, 560), np.uint8), dem, np.zeros(dem.shape, bool),
                     np.zeros(dem.shape, bool), fp, fp)
    save_sample(s, tmp_path / "raw" / "dark")
    assert main(["process", "--input", str(tmp_path / "raw"), "--output", str(tmp_path / "ds")]) == 0
    rej = rows(tmp_path / "ds" / "rejections.csv")
    assert [r["reason"] for r in rej] == ["black"]
    assert rows(tmp_path / "ds" / "dataset-manifest.csv") == []


def test_console_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "demcurate", "--print-default-config"],
                         capture_output=True, text=True, check=True)
    assert out.stdout == DEFAULT_CONFIG_YAML
