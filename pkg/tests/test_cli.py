import json
import math
import subprocess
import sys

import numpy as np
import pytest

from gibbsmple.cli import load_config, main


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def poisson_cfg(tmp_path, side=10.0, extra=""):
    return write(
        tmp_path / "poisson.toml",
        f'family = "multi_strauss"\nranges = [0.0]\n{extra}\n[window]\nxmin = 0.0\nxmax = {side}\nymin = 0.0\nymax = {side}\n',
    )


def csv(tmp_path, rows, name="data.csv", header="x,y"):
    lines = [header] + [",".join(repr(float(v)) for v in r) for r in rows]
    return write(tmp_path / name, "\n".join(lines) + "\n")


def run(argv):
    return main([str(a) for a in argv])


def test_fit_poisson_fixture(tmp_path):
    rng = np.random.default_rng(0)
    data = csv(tmp_path, rng.uniform(0, 10, (100, 2)))
    out = tmp_path / "fit.json"
    assert run(["fit", "--model", poisson_cfg(tmp_path), "--data", data, "--out", out, "--grid", "8x8"]) == 0
    doc = json.loads(out.read_text())
    assert abs(doc["theta_hat"][0] - 0.0) < 1e-8
    assert doc["diagnostics"]["converged"] is True
    assert doc["config"]["command"] == "fit" and doc["config"]["grid"] == [8, 8]


def test_missing_data_file(tmp_path, capsys):
    missing = tmp_path / "nope.csv"
    assert run(["fit", "--model", poisson_cfg(tmp_path), "--data", missing]) == 1
    assert str(missing) in capsys.readouterr().err


def test_missing_model_file(tmp_path, capsys):
    assert run(["stats", "--model", tmp_path / "none.toml", "--data", "x.csv"]) == 1
    assert "none.toml" in capsys.readouterr().err


def test_hard_core_violation_exits_1(tmp_path, capsys):
    cfg = write(tmp_path / "hc.toml",
                'family = "multi_strauss"\nranges = [0.3, 1.0]\nhard_core = true\n'
                "[window]\nxmin = 0.0\nxmax = 6.0\nymin = 0.0\nymax = 6.0\n")
    data = csv(tmp_path, [(3.0, 3.0), (3.1, 3.0), (1.5, 4.5)])
    assert run(["fit", "--model", cfg, "--data", data, "--grid", "8x8"]) == 1
    assert "hard-core" in capsys.readouterr().err


def test_bad_flags_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as ei:
        main(["fit", "--grid"])
    assert ei.value.code == 1
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == 1
    assert run(["fit", "--model", poisson_cfg(tmp_path), "--data", csv(tmp_path, []), "--grid", "banana"]) == 1
    assert run(["fit", "--model", poisson_cfg(tmp_path), "--data", csv(tmp_path, []), "--level", "1.5"]) == 1


def test_dvee_below_range_rejected(tmp_path, capsys):
    cfg = write(tmp_path / "s.toml", 'family = "overlap_area"\nR = 1.0\n')
    data = csv(tmp_path, [(2.0, 2.0)])
    assert run(["fit", "--model", cfg, "--data", data, "--window", "0,6,0,6", "--dvee", "0.5"]) == 1
    assert "dvee" in capsys.readouterr().err


def test_non_convergence_exits_2(tmp_path, capsys):
    out = tmp_path / "fit.json"
    assert run(["fit", "--model", poisson_cfg(tmp_path), "--data", csv(tmp_path, []), "--out", out, "--grid", "4x4"]) == 2
    assert json.loads(out.read_text())["diagnostics"]["converged"] is False
    assert "converge" in capsys.readouterr().err


def sim_cfg(tmp_path):
    return write(tmp_path / "sim.toml",
                 'family = "overlap_area"\nR = 1.0\ntheta = [-0.6931471805599453, 1.0]\n'
                 "[window]\nxmin = 0.0\nxmax = 8.0\nymin = 0.0\nymax = 8.0\n"
                 "[simulation]\nsteps = 5000\nburn_in = 1000\nseed = 11\n")


def test_simulate_is_byte_identical(tmp_path):
    cfg = sim_cfg(tmp_path)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["simulate", "--model", cfg, "--out", a]) == 0
    assert run(["simulate", "--model", cfg, "--out", b]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) > 1
    man = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    assert man["config"]["seed"] == 11 and man["config"]["steps"] == 5000
    c = tmp_path / "c.csv"
    assert run(["simulate", "--model", cfg, "--out", c, "--seed", "12"]) == 0
    assert c.read_bytes() != a.read_bytes()


def test_simulate_zero_steps_writes_header(tmp_path):
    out = tmp_path / "e.csv"
    assert run(["simulate", "--model", sim_cfg(tmp_path), "--out", out, "--steps", "0", "--burn-in", "0"]) == 0
    assert out.read_text() == "x,y\n"


def test_simulate_needs_theta_and_out(tmp_path, capsys):
    cfg = poisson_cfg(tmp_path)
    assert run(["simulate", "--model", cfg, "--out", tmp_path / "o.csv"]) == 1
    assert run(["simulate", "--model", cfg, "--theta", "0"]) == 1
    assert "--out" in capsys.readouterr().err


def test_simulate_poisson_mean(tmp_path):
    cfg = write(tmp_path / "p.toml",
                'family = "multi_strauss"\nranges = [0.0]\ntheta = [-0.6931471805599453]\n'
                "[window]\nxmin = 0.0\nxmax = 10.0\nymin = 0.0\nymax = 5.0\n")
    # intensity exp(log 2) = 2 on area 50
    counts = []
    for seed in range(100):
        out = tmp_path / "run.csv"
        assert run(["simulate", "--model", cfg, "--out", out,
                    "--seed", seed, "--steps", 3000, "--burn-in", 1500]) == 0
        counts.append(len(out.read_text().splitlines()) - 1)
    assert abs(np.mean(counts) - 100) < 3 * math.sqrt(100 / 100)


def test_stats_examples(tmp_path):
    out = tmp_path / "s.json"
    cfg = write(tmp_path / "g.toml", 'family = "geyer_triplet"\nR = 1.0\n')
    assert run(["stats", "--model", cfg, "--data", csv(tmp_path, []), "--window", "0,4,0,4", "--out", out]) == 0
    assert json.loads(out.read_text())["global"] == [0.0, 0.0, 0.0]
    tri = csv(tmp_path, [(1.0, 1.0), (1.5, 1.0), (1.25, 1.4)], "tri.csv")
    assert run(["stats", "--model", cfg, "--data", tri, "--window", "0,4,0,4", "--out", out, "--local"]) == 0
    doc = json.loads(out.read_text())
    assert doc["global"] == [3.0, 3.0, 1.0]
    assert len(doc["local"]) == 3 and doc["hard_core_violation"] == [False] * 3
    cfg = write(tmp_path / "o.json", json.dumps({"family": "overlap_area", "R": 1.0}))
    pair = csv(tmp_path, [(1.0, 1.0), (1.5, 1.0)], "pair.csv")
    assert run(["stats", "--model", cfg, "--data", pair, "--window", "0,4,0,4", "--out", out]) == 0
    g = json.loads(out.read_text())["global"]
    assert g[0] == 2.0 and g[1] == pytest.approx(0.307092425, abs=1e-9)


@pytest.fixture(scope="module")
def overlap_data(tmp_path_factory):
    d = tmp_path_factory.mktemp("ov")
    cfg = sim_cfg(d)
    data = d / "data.csv"
    assert run(["simulate", "--model", cfg, "--out", data, "--steps", 20000, "--burn-in", 10000]) == 0
    return d, cfg, str(data)


def test_fit_then_gnz(overlap_data):
    d, cfg, data = overlap_data
    fit, gnz = d / "fit.json", d / "gnz.json"
    assert run(["fit", "--model", cfg, "--data", data, "--out", fit, "--grid", "64x64", "--threads", 2]) == 0
    doc = json.loads(fit.read_text())
    assert doc["diagnostics"]["converged"]
    assert run(["gnz", "--model", cfg, "--data", data, "--fit", fit, "--grid", "64x64", "--out", gnz]) == 0
    res = json.loads(gnz.read_text())
    assert res["theta"] == doc["theta_hat"]
    assert max(abs(v) for v in res["per_statistic_per_area"]) < 10 * 1e-8


def test_vcov_matches_fit(overlap_data):
    d, cfg, data = overlap_data
    fit, vc = d / "fit2.json", d / "vcov.json"
    assert run(["fit", "--model", cfg, "--data", data, "--out", fit, "--grid", "32x32", "--cell", "0.5"]) == 0
    assert run(["vcov", "--model", cfg, "--data", data, "--fit", fit, "--grid", "32x32", "--cell", "0.5",
                "--out", vc]) == 0
    a, b = json.loads(fit.read_text()), json.loads(vc.read_text())
    assert np.allclose(a["vcov"], b["vcov"], rtol=1e-12)
    assert b["neighbour_radius"] == 2 and b["config"]["cell"] == 0.5


def test_json_stdout(overlap_data, capsys):
    d, cfg, data = overlap_data
    assert run(["gnz", "--model", cfg, "--data", data, "--theta=-0.69,1.0", "--grid", "16x16"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["theta"] == [-0.69, 1.0] and doc["raw"] is not None


def test_load_config_validation(tmp_path):
    with pytest.raises(Exception, match="unknown keys"):
        load_config(write(tmp_path / "x.toml", 'family = "overlap_area"\nR = 1.0\n[fit]\nbogus = 1\n'))
    with pytest.raises(Exception, match="invalid TOML"):
        load_config(write(tmp_path / "y.toml", "family = \n"))
    cfg = load_config(write(tmp_path / "z.json", '{"family": "strauss_disc", "mmax": 0.5, "fit": {"grid": [8, 8]}}'))
    assert cfg["fit"]["grid"] == [8, 8]


def test_module_entry_point(tmp_path):
    data = csv(tmp_path, [(1.0, 1.0), (2.0, 3.0)])
    proc = subprocess.run([sys.executable, "-m", "gibbsmple", "stats", "--model", poisson_cfg(tmp_path), "--data", data],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["global"] == [2.0]
