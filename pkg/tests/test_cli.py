import json

import pytest

from mfcdesign import cli
from mfcdesign.design import alpha_bound
from mfcdesign.plants import pendulum_discrete


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def bound_from(out):
    line = next(l for l in out.splitlines() if l.startswith("alpha bound"))
    return float(line.split()[-1])


def test_unity_bound(capsys):
    code, out, _ = run(capsys, "alpha-bound", "--plant", "unity", "--ts", "0.01")
    assert code == 0
    assert bound_from(out) == pytest.approx(100.0)


def test_pendulum_bound_and_json(tmp_path, capsys):
    target = tmp_path / "bound.json"
    code, out, _ = run(capsys, "alpha-bound", "--plant", "pendulum", "--c", "4", "--rule", "upper-first",
                       "--out", str(target))
    assert code == 0
    assert bound_from(out) == pytest.approx(17.006, rel=0.05)
    data = json.loads(target.read_text())
    assert data["rule"] == "upper-first" and data["bound"] == pytest.approx(bound_from(out), rel=1e-5)


def test_missing_plant_file_exits_2(tmp_path, capsys):
    code, _, err = run(capsys, "alpha-bound", "--plant", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path))
    assert code == cli.EXIT_LOAD and "nope.json" in err
    assert list(tmp_path.iterdir()) == []


def test_malformed_plant_file_exits_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"num": [1]}')
    assert run(capsys, "alpha-bound", "--plant", str(p))[0] == cli.EXIT_LOAD


def test_pole_on_unit_circle_exits_3(tmp_path, capsys):
    p = tmp_path / "nyq.json"
    p.write_text(json.dumps({"num": [0, 1], "den": [1, 1], "ts": 0.1}))
    code, _, err = run(capsys, "alpha-bound", "--plant", str(p))
    assert code == cli.EXIT_NUMERIC and "31.4" in err


def test_bad_parameters_exit_4(tmp_path, capsys):
    assert run(capsys, "alpha-bound", "--plant", "pendulum", "--points", "1")[0] == cli.EXIT_PARAM
    code = run(capsys, "simulate", "--plant", "pendulum", "--kp", "1", "--out-dir", str(tmp_path))[0]
    assert code == cli.EXIT_PARAM
    assert list(tmp_path.iterdir()) == []


def test_stability_set_files(tmp_path, capsys):
    code, out, _ = run(capsys, "stability-set", "--plant", "pendulum", "--c", "4", "--resolution", "21",
                       "--points", "512", "--out-dir", str(tmp_path))
    assert code == 0
    rows = (tmp_path / "region.csv").read_text().splitlines()
    assert rows[0] == "kp,kd,predicted,stable" and len(rows) == 21 ** 2 + 1
    svg = (tmp_path / "region.svg").read_text()
    assert svg.startswith("<svg") and "href" not in svg
    summary = json.loads((tmp_path / "region.json").read_text())
    assert summary["summary"]["points"] == 21 ** 2


def test_outputs_are_byte_identical(tmp_path, capsys):
    args = ["stability-set", "--plant", "pendulum", "--c", "4", "--resolution", "15", "--points", "256"]
    run(capsys, *args, "--out-dir", str(tmp_path / "a"))
    run(capsys, *args, "--out-dir", str(tmp_path / "b"))
    sim = ["simulate", "--plant", "pendulum", "--c", "4", "--alpha", "170.06", "--kp", "48.98", "--kd", "64.92",
           "--horizon", "3"]
    run(capsys, *sim, "--out-dir", str(tmp_path / "a"))
    run(capsys, *sim, "--out-dir", str(tmp_path / "b"))
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["region.csv", "region.json", "region.svg", "trace.csv", "trace.metrics.json"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"c": 3.0, "margin": 5.0}))
    env = {"MFC_GRID_POINTS": "300"}
    r = cli.resolve("alpha-bound", {"c": 2.0, "margin": None}, cfg, env)
    assert r.c == 2.0            # flag beats file
    assert r.margin == 5.0       # file beats default
    assert r.points == 300       # env beats default
    assert cli.resolve("alpha-bound", {}, None, {}).points == cli.DEFAULTS["points"]
    cfg.write_text(json.dumps({"points": 99}))
    assert cli.resolve("alpha-bound", {}, cfg, env).points == 99
    assert cli.resolve("alpha-bound", {"points": 50}, cfg, env).points == 50


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"colour": "red"}))
    assert run(capsys, "alpha-bound", "--config", str(cfg))[0] == cli.EXIT_LOAD


def test_grid_points_env_reaches_design(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MFC_GRID_POINTS", "64")
    target = tmp_path / "b.json"
    assert run(capsys, "alpha-bound", "--plant", "pendulum", "--c", "4", "--out", str(target))[0] == 0
    data = json.loads(target.read_text())
    assert data["grid"]["points"] == 64
    g = pendulum_discrete()
    grid = cli._grid(cli.resolve("alpha-bound", {}, None, {"MFC_GRID_POINTS": "64"}), g)
    assert data["bound"] == pytest.approx(alpha_bound(g, 4.0, grid=grid).bound)


def test_cascade_simulation_runs(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--plant", "vehicle", "--cascade", "table1-freq", "--out-dir",
                       str(tmp_path))
    assert code == 0 and "diverged False" in out
    m = json.loads((tmp_path / "trace.metrics.json").read_text())
    assert set(m) == {"iae", "iaudd", "os"}


def test_metrics_command_matches_simulation(tmp_path, capsys):
    run(capsys, "simulate", "--plant", "pendulum", "--c", "4", "--alpha", "170.06", "--kp", "48.98", "--kd",
        "64.92", "--horizon", "2", "--out-dir", str(tmp_path))
    code, out, _ = run(capsys, "metrics", str(tmp_path / "trace.csv"))
    assert code == 0
    got = json.loads(out.splitlines()[0])
    want = json.loads((tmp_path / "trace.metrics.json").read_text())
    for k in want:
        assert got[k] == pytest.approx(want[k], rel=1e-9, abs=1e-12)
    assert run(capsys, "metrics", str(tmp_path / "absent.csv"))[0] == cli.EXIT_LOAD


def test_reproduce_writes_report(tmp_path, capsys):
    code, out, _ = run(capsys, "reproduce", "pendulum", "--points", "1024", "--resolution", "31", "--out-dir",
                       str(tmp_path))
    assert code == 0
    assert "[PASS]" in out
    report = json.loads((tmp_path / "pendulum_report.json").read_text())
    assert report["case"] == "pendulum" and report["checks"]
    assert (tmp_path / "pendulum_report.txt").exists()


def test_failed_bundle_leaves_no_files(tmp_path):
    from mfcdesign.export import write_bundle
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    with pytest.raises(OSError):
        write_bundle({tmp_path / "a.csv": "x\n", blocker / "b.csv": "y\n"})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["blocker"]
    write_bundle({tmp_path / "a.csv": "x\n"})
    assert (tmp_path / "a.csv").read_text() == "x\n"
