import csv
import json
import shutil
import subprocess
import sys

import numpy as np

from capillary_abp.cli import main
from capillary_abp.scenarios import CHECKS, generate, parse_scenario, reproduce, run_scenario


FLOOR = {"kind": "halfspace", "halfspaces": [{"normal": [0.0, 1.0], "offset": 0.0}]}


def strip_meta(report):
    return {k: v for k, v in report.items() if k != "meta"}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_generate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["generate", "halfspace", "--n", "5", "--seed", "7", "-o", str(a)]) == 0
    assert main(["generate", "halfspace", "--n", "5", "--seed", "7", "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    sc = json.loads(a.read_text())
    assert len(sc["boundary_fn"]["sites"]) == 5
    assert sc["lambda_grid"] == [-0.7, -0.3, 0.0, 0.3, 0.7]


def test_generated_wedge_uses_both_faces():
    sc = generate("wedge", n=2, seed=1)
    V = np.asarray(sc["boundary_fn"]["normals"])
    assert not np.allclose(V[0], V[1])


def test_generated_ball_3d_has_certificate(tmp_path, capsys):
    path = tmp_path / "s.json"
    assert main(["generate", "ball", "--n", "8", "--dim", "3", "--checks", "half_line", "-o", str(path)]) == 0
    code, out, _ = run(["run", str(path)], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["records"][0]["check"] == "half_line" and rep["records"][0]["pass"]


def test_run_single_site_equality(tmp_path, capsys):
    sc = {
        "body": FLOOR,
        "boundary_fn": {"sites": [[0.0, 0.0]], "values": [0.0], "normals": [[0.0, 1.0]]},
        "lambda_grid": [0.5],
        "checks": ["half_line", "main_inequality"],
        "method": "exact2d",
    }
    code, out, _ = run(["run", write(tmp_path / "s.json", sc)], capsys)
    rep = json.loads(out)
    assert code == 0 and rep["pass"]
    (main_rec,) = [r for r in rep["records"] if r["check"] == "main_inequality"]
    assert abs(main_rec["margin"]) <= 1e-9


def test_exit_codes(tmp_path, capsys):
    good = generate("halfspace", n=3, seed=0, lambdas=[0.0], samples=2000)
    assert run(["run", write(tmp_path / "g.json", good)], capsys)[0] == 0

    bad_lam = dict(good, lambda_grid=[1.5])
    code, _, err = run(["run", write(tmp_path / "l.json", bad_lam)], capsys)
    assert code == 2 and "error" in err
    assert run(["run", write(tmp_path / "c.json", dict(good, checks=["nope"]))], capsys)[0] == 2
    assert run(["run", str(tmp_path / "missing.json")], capsys)[0] == 2
    (tmp_path / "broken.json").write_text("{")
    assert run(["run", str(tmp_path / "broken.json")], capsys)[0] == 2
    assert run(["generate", "torus"], capsys)[0] == 2
    assert run(["generate", "wedge", "--angle", "4.0"], capsys)[0] == 2
    assert run(["run", write(tmp_path / "j.json", good), "--jobs", "0"], capsys)[0] == 2

    # a set that dips into the body is rejected by the energy check itself
    failing = {
        "body": FLOOR,
        "lambda_grid": [0.0],
        "checks": ["theorem1"],
        "params": {
            "theorem1": {
                "kind": "explicit",
                "set": {
                    "vertices": [[0, -0.5], [1, -0.5], [1, 0.5], [0, 0.5]],
                    "faces": [[0, 1], [1, 2], [2, 3], [3, 0]],
                    "wetted": [False] * 4,
                },
            }
        },
    }
    code, out, err = run(["run", write(tmp_path / "f.json", failing)], capsys)
    assert code == 1 and "FAIL theorem1" in err
    assert json.loads(out)["records"][0]["error"]


def test_csv_and_output_file(tmp_path, capsys):
    sc = generate("polytope", n=4, seed=3, lambdas=[-0.3, 0.3], samples=5000)
    rep_path, csv_path = tmp_path / "r.json", tmp_path / "r.csv"
    code, out, _ = run(["run", write(tmp_path / "s.json", sc), "-o", str(rep_path), "--csv", str(csv_path)], capsys)
    assert code == 0 and out == ""
    rep = json.loads(rep_path.read_text())
    rows = list(csv.DictReader(csv_path.open()))
    assert len(rows) == len(rep["records"]) == 3
    assert {r["check"] for r in rows} == {"half_line", "main_inequality"}
    assert all(r["pass"] == "True" for r in rows)


def test_overrides_and_report_fields(tmp_path, capsys):
    sc = generate("ball", n=4, seed=2, dim=3, lambdas=[0.0])
    code, out, _ = run(["run", write(tmp_path / "s.json", sc), "--samples", "3000", "--seed", "11"], capsys)
    rep = json.loads(out)
    assert rep["scenario"]["budget"]["samples"] == 3000 and rep["scenario"]["budget"]["seed"] == 11
    assert set(rep["versions"]) >= {"capillary_abp", "numpy", "scipy"}
    assert len(rep["fingerprint"]) >= 16
    assert rep["meta"]["jobs"] == 1 and rep["meta"]["wall_time"] >= 0


def test_jobs_do_not_change_results(tmp_path, capsys):
    sc = generate("polytope", n=5, seed=4, dim=3, lambdas=[-0.3, 0.0, 0.3], samples=5000)
    path = write(tmp_path / "s.json", sc)
    one = json.loads(run(["run", path], capsys)[1])
    two = json.loads(run(["run", path, "--jobs", "2"], capsys)[1])
    assert json.dumps(strip_meta(one), sort_keys=True) == json.dumps(strip_meta(two), sort_keys=True)


def test_reproduce_is_byte_identical():
    sc = parse_scenario(generate("wedge", n=4, seed=9, dim=3, samples=4000))
    rep = run_scenario(sc)
    again = reproduce(json.loads(json.dumps(rep)))
    assert json.dumps(rep, sort_keys=True) == json.dumps(again, sort_keys=True)


def test_other_checks_through_the_cli(tmp_path, capsys):
    sc = generate("wedge", n=4, seed=5, lambdas=[-0.3, 0.3], samples=5000, checks=list(CHECKS))
    sc["params"] = {
        "theorem1": {"kind": "wedge_droplet", "k": 64},
        "mesh": {"kind": "cap", "h": 0.2},
        "minimize": {"n_sites": 3, "starts": 2, "sweeps": 3},
    }
    code, out, err = run(["run", write(tmp_path / "s.json", sc)], capsys)
    rep = json.loads(out)
    assert code == 0, err
    assert {r["check"] for r in rep["records"]} == set(CHECKS)


def test_console_script():
    exe = shutil.which("capillary-abp")
    cmd = [exe] if exe else [sys.executable, "-m", "capillary_abp.cli"]
    res = subprocess.run(cmd + ["generate", "ball", "--n", "3"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["body"]["kind"] == "ball"
