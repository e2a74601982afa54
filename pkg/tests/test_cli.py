import json
import math
import subprocess
import sys

import numpy as np
import pytest

from articulate.cli import main
from articulate.geometry import Rotation, write_xyz
from articulate.part_grounding import FeatureStore, GAPartClass
from articulate.scene_model import load_bundled_scene


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_program_json_and_table(capsys):
    text = "Strategy 1: 1 step: (1) (Door, revolute, +)"
    code, out, _ = run(capsys, "parse-program", text)
    assert code == 0
    assert json.loads(out)["strategies"][0]["steps"][0] == {"part": "Door", "joint": "revolute", "delta": 90.0}
    code, out, _ = run(capsys, "parse-program", text, "--format", "table")
    assert out.strip() == "Strategy 1: 1 step: (1) (Door, revolute, +90)"


def test_parse_program_from_file_and_error(capsys, tmp_path):
    f = tmp_path / "prog.txt"
    f.write_text("Strategy 1: 1 step: (1) (Button, prismatic, -0.5)")
    assert run(capsys, "parse-program", str(f))[0] == 0
    code, _, err = run(capsys, "parse-program", "Strategy 1: 1 step: (1) (Door, twisting, +)")
    assert code == 2 and "line 1" in err


def test_estimate_joint(capsys, tmp_path):
    rng = np.random.default_rng(0)
    x0 = rng.uniform(size=(100, 3))
    r = Rotation.about_z(30)
    xt = r.apply(x0)
    write_xyz(tmp_path / "a.xyz", x0)
    write_xyz(tmp_path / "b.xyz", xt)
    code, out, _ = run(capsys, "estimate-joint", "--before", str(tmp_path / "a.xyz"), "--after",
                       str(tmp_path / "b.xyz"), "--iters", "32", "--thresh", "0.01", "--axis-hint", "0,0,1")
    doc = json.loads(out)
    assert code == 0 and doc["kind"] == "revolute"
    assert doc["displacement"] == pytest.approx(math.radians(30), abs=1e-9)


def test_ground(capsys, tmp_path):
    FeatureStore([[1, 0], [0.9, 0.1], [0, 1]], [GAPartClass.HINGE_DOOR, GAPartClass.HINGE_DOOR,
                                                 GAPartClass.SLIDER_BUTTON]).dump_jsonl(tmp_path / "s.jsonl")
    code, out, _ = run(capsys, "ground", "--store", str(tmp_path / "s.jsonl"), "--query", "[1, 0.05]", "-k", "3")
    assert json.loads(out) == {"label": "hinge_door", "votes": {"hinge_door": 2, "slider_button": 1}}


def test_plan_traj(capsys):
    code, out, _ = run(capsys, "plan-traj", "--scene", "storage_furniture", "--part", "drawer", "--delta", "0.5")
    doc = json.loads(out)
    assert code == 0 and len(doc["waypoints"]) == 251
    obj = load_bundled_scene("storage_furniture")
    extent = obj.part_box("drawer_top").extent_along(obj.world_joint("drawer_top").axis_dir)
    assert doc["joint_delta"] == pytest.approx(0.5 * extent)


def test_run_task_with_log(capsys, tmp_path):
    log = tmp_path / "events.jsonl"
    code, out, _ = run(capsys, "run-task", "--scene", "microwave_latched", "--instruction", "Open the microwave",
                       "--log", str(log), "--format", "table")
    assert code == 0
    assert "success" in out and "strategies tried  2" in out
    assert all(json.loads(x)["event"] for x in log.read_text().splitlines())


def test_run_task_errors(capsys):
    assert run(capsys, "run-task", "--scene", "no_such_scene", "--instruction", "x")[0] == 2
    code, _, err = run(capsys, "run-task", "--scene", "microwave", "--instruction", "Juggle")
    assert code == 2 and "no rule" in err


def test_bench_subset(capsys, tmp_path):
    out_file = tmp_path / "bench.json"
    code, _, _ = run(capsys, "bench", "--trials", "1", "--out", str(out_file))
    doc = json.loads(out_file.read_text())
    assert code == 0 and len(doc["tasks"]) == 12
    assert all(t["trials"] == 1 for t in doc["tasks"])


def test_metrics(capsys):
    code, out, _ = run(capsys, "metrics", "--trials", "4", "--noise", "0", "--outliers", "0", "--points", "100",
                       "--format", "table")
    assert code == 0 and len(out.strip().splitlines()) == 2


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "articulate", "parse-program",
                           "Strategy: 1 step: (1) (Lid, prismatic, -0.5)"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["strategies"][0]["steps"][0]["delta"] == -0.5
