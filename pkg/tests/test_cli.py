import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from branchdepth.cli import main, write_synthetic_scene
from branchdepth.io import read_manifest, read_pfm

from conftest import tree_bytes


@pytest.fixture(scope="module")
def thin_dir(tmp_path_factory, thin_scene):
    d = tmp_path_factory.mktemp("thin")
    write_synthetic_scene(thin_scene, d)
    return d


def test_synth_matches_generator(tmp_path, thin_scene):
    assert main(["--quiet", "synth", "--spec", "thin", "--seed", "0", "--out", str(tmp_path)]) == 0
    scene = read_manifest(tmp_path / "manifest.txt")
    np.testing.assert_array_equal(scene.rgb, thin_scene.rgb)
    np.testing.assert_array_equal(scene.disparity, thin_scene.disparity)
    # PFM holds float32
    np.testing.assert_array_equal(scene.ground_truth, thin_scene.ground_truth.astype(np.float32))
    assert [i.id for i in scene.instances] == [i.id for i in thin_scene.instances]


def test_synth_from_json(tmp_path, thin_scene):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps(thin_scene.spec.to_dict()))
    assert main(["--quiet", "synth", "--spec", str(spec), "--seed", "0", "--out", str(tmp_path / "s")]) == 0
    np.testing.assert_array_equal(read_pfm(tmp_path / "s" / "disparity.pfm"), thin_scene.disparity)


def test_run_writes_outputs(tmp_path, thin_dir):
    out = tmp_path / "run"
    assert main(["--quiet", "run", "--manifest", str(thin_dir / "manifest.txt"), "--version", "v6", "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"stats.csv", "report.json", "histograms.json", "timings.json"} <= names
    report = json.loads((out / "report.json").read_text())
    assert report["version"] == "v6"
    for b in report["branches"]:
        assert {f"branch_{b['id']}.ply", f"mask_{b['id']}.png", f"depth_{b['id']}.pfm"} <= names
    rows = list(csv.DictReader(open(out / "stats.csv")))
    assert [int(r["branch_id"]) for r in rows] == [b["id"] for b in report["branches"]]


def test_compare_and_eval(tmp_path, thin_dir):
    out = tmp_path / "cmp"
    assert main(["--quiet", "compare", "--manifest", str(thin_dir / "manifest.txt"), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "comparison.csv")))
    assert [r["version"] for r in rows] == ["v1", "v2", "v3", "v4", "v5", "v6"]
    assert all((out / v / "stats.csv").exists() for v in ("v1", "v6"))
    assert main(["--quiet", "eval", "--out-dir", str(out), "--scene", str(thin_dir)]) == 0
    ev = json.loads((out / "eval.json").read_text())
    assert {r["version"] for r in ev} == {"v1", "v2", "v3", "v4", "v5", "v6"}
    assert all(r["mae_mm"] >= 0 for r in ev)


def test_config_file_applies(tmp_path, thin_dir):
    cfg = tmp_path / "c.txt"
    cfg.write_text("version = v1\n")
    out = tmp_path / "run"
    assert main(["--quiet", "run", "--manifest", str(thin_dir / "manifest.txt"), "--version", "v5", "--config", str(cfg), "--out", str(out)]) == 0
    assert json.loads((out / "report.json").read_text())["version"] == "v5"


def test_exit_codes(tmp_path, thin_dir, capsys):
    with pytest.raises(SystemExit) as e:
        main(["run", "--manifest", "x", "--version", "v7", "--out", str(tmp_path)])
    assert e.value.code == 2
    assert main(["--quiet", "run", "--manifest", str(tmp_path / "none.txt"), "--version", "v6", "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["--quiet", "eval", "--out-dir", str(tmp_path / "nope"), "--scene", str(thin_dir)]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("v6.mad_threshold = abc\n")
    assert main(["--quiet", "run", "--manifest", str(thin_dir / "manifest.txt"), "--version", "v6", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1


def test_thread_count_does_not_change_outputs(tmp_path, thin_dir):
    outs = []
    for threads in ("1", "4"):
        out = tmp_path / f"t{threads}"
        env = dict(os.environ, BRANCHDEPTH_THREADS=threads)
        subprocess.run(
            [sys.executable, "-m", "branchdepth.cli", "--quiet", "compare", "--manifest", str(thin_dir / "manifest.txt"), "--out", str(out)],
            check=True,
            env=env,
        )
        outs.append(tree_bytes(out))
    assert outs[0] == outs[1]
