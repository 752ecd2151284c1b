import json
import math

import numpy as np
import pytest

from curvegas import cli, io
from curvegas.diagnostics import check_stationarity, diagnose
from curvegas.errors import ConfigError


def _run(tmp_path, config, *flags, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(config))
    return cli.main(["--config", str(path), *flags])


def _files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def _sim_config(out, **params):
    base = {"N": 8, "beta": 2.0, "dt": 0.01, "t_end": 0.5, "n_frames": 20}
    base.update(params)
    return {"command": "simulate", "curve": {"kind": "circle", "radius": 1.0},
            "params": base, "output_dir": str(out), "seed": 7, "format": "csv"}


def test_simulate_writes_csv_and_meta(tmp_path):
    out = tmp_path / "sim"
    assert _run(tmp_path, _sim_config(out)) == 0
    assert sorted(p.name for p in out.iterdir()) == ["trajectory.csv", "trajectory.meta.json"]
    header, data = io.read_csv_matrix(out / "trajectory.csv")
    assert header == ["t"] + [f"x{i}" for i in range(1, 9)]
    assert data.shape == (18, 9)  # stride ceil(50 / 20) = 3, plus the final step
    assert data[-1, 0] == pytest.approx(0.5)
    x = data[:, 1:]
    assert np.all(np.diff(x, axis=1) > 0) and np.all(x[:, -1] < x[:, 0] + 2 * math.pi)
    meta = json.loads((out / "trajectory.meta.json").read_text())
    assert meta["meta"]["seed"] == 7 and meta["meta"]["n_steps"] == 50


def test_simulate_json_includes_curve_points(tmp_path):
    out = tmp_path / "sim"
    assert _run(tmp_path, _sim_config(out), "--format", "json") == 0
    d = json.loads((out / "trajectory.json").read_text())
    z = np.array([[complex(a, b) for a, b in row] for row in d["curve_points"]])
    np.testing.assert_allclose(np.abs(z), 1.0, atol=1e-14)


def test_reruns_are_byte_identical(tmp_path, monkeypatch):
    outs = [tmp_path / f"r{k}" for k in range(3)]
    assert _run(tmp_path, _sim_config(outs[0])) == 0
    assert _run(tmp_path, _sim_config(outs[1]), "--threads", "2") == 0
    monkeypatch.setenv("CURVEGAS_THREADS", "3")
    assert _run(tmp_path, _sim_config(outs[2])) == 0
    assert _files(outs[0]) == _files(outs[1]) == _files(outs[2])
    assert _run(tmp_path, _sim_config(tmp_path / "other"), "--seed", "8") == 0
    assert _files(tmp_path / "other") != _files(outs[0])


def test_sampler_rerun_identical(tmp_path):
    cfg = {"command": "sample", "curve": {"kind": "ellipse", "a": 2.0, "b": 1.0},
           "params": {"N": 3, "n_samples": 200, "burn_in": 50}, "seed": 1, "format": "csv"}
    for d in ("a", "b"):
        assert _run(tmp_path, cfg, "--output", str(tmp_path / d)) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    text = (tmp_path / "a" / "samples.csv").read_text().splitlines()
    assert text[0] == "chain,x1,x2,x3"
    assert text[1].split(",")[0] == "0"


def test_fekete_discriminant(tmp_path):
    cfg = {"command": "fekete", "params": {"N": 4}, "output_dir": str(tmp_path / "f")}
    assert _run(tmp_path, cfg) == 0
    d = json.loads((tmp_path / "f" / "fekete.json").read_text())
    assert d["discriminant"] == pytest.approx(256.0, rel=1e-6)
    assert d["converged"] is True


def test_beta_below_one_is_a_config_error(tmp_path, capsys):
    assert _run(tmp_path, _sim_config(tmp_path / "s", beta=0.5)) == 2
    err = capsys.readouterr().err
    assert "beta >= 1" in err and "configuration error" in err
    assert not (tmp_path / "s" / "trajectory.csv").exists()


@pytest.mark.parametrize("config, field", [
    ({"command": "simulate", "params": {"beta": 2.0}}, "params.N"),
    ({"command": "simulate", "params": {"N": 3, "dt": "fast"}}, "params.dt"),
    ({"command": "simulate", "params": {"N": 3, "dt": -1}}, "params.dt"),
    ({"command": "simulate", "params": {"N": 3}, "curve": {"kind": "ellipse", "a": 2}},
     "curve.b"),
    ({"command": "simulate", "params": {"N": 3}, "format": "xml"}, "format"),
    ({"command": "simulate", "params": {"N": 3}, "seed": -1}, "seed"),
    ({"command": "rate", "params": {"path": "sideways", "N": 3}}, "params.path"),
    ({"command": "hydro", "params": {"test_functions": ["exp(x)"]}}, "polynomial"),
    ({"command": "hydro", "curve": {"kind": "fourier", "k_min": 1, "coeffs": [[1, 0], [0.1, 0]]},
      "params": {"measure": "equilibrium"}}, "params.measure"),
])
def test_config_errors_name_the_field(tmp_path, capsys, config, field):
    config.setdefault("output_dir", str(tmp_path / "o"))
    assert _run(tmp_path, config) == 2
    assert field in capsys.readouterr().err


def test_unreadable_configs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["--config", str(bad)]) == 2
    assert cli.main(["--config", str(tmp_path / "missing.json")]) == 2
    assert cli.main([]) == 2
    assert cli.main(["sample", "--config", str(_write(tmp_path, {"command": "fekete"}))]) == 2
    with pytest.raises(SystemExit):
        cli.main(["teleport"])


def test_unwritable_output_and_threads(tmp_path, monkeypatch, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert _run(tmp_path, _sim_config(blocker / "sub")) == 2
    assert "output_dir" in capsys.readouterr().err
    assert _run(tmp_path, _sim_config(tmp_path / "t"), "--threads", "0") == 2
    monkeypatch.setenv("CURVEGAS_THREADS", "many")
    assert _run(tmp_path, _sim_config(tmp_path / "t")) == 2
    assert "CURVEGAS_THREADS" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = {"command": "fekete", "params": {"N": 5, "max_iter": 1},
           "output_dir": str(tmp_path / "f")}
    assert _run(tmp_path, cfg) == 3
    assert "NonConvergence" in capsys.readouterr().err
    cfg = _sim_config(tmp_path / "s", dt=2.0, t_end=4.0, max_halvings=0,
                      initial=[0.0, 1e-9, 3.0])
    assert _run(tmp_path, cfg) == 3


def test_capacity_rate_and_hydro(tmp_path):
    out = tmp_path / "o"
    cap = {"command": "capacity", "params": {"N_list": [4, 8]}, "output_dir": str(out),
           "format": "csv"}
    assert _run(tmp_path, cap) == 0
    header, data = io.read_csv_matrix(out / "capacity.csv")
    np.testing.assert_allclose(data[:, 1], data[:, 0] ** (1 / (data[:, 0] - 1)), rtol=1e-6)
    rate = {"command": "rate", "params": {"N": 3, "dt": 1e-3, "t_end": 0.5,
                                          "initial": [0.0, 1.0, 2.5]},
            "output_dir": str(out)}
    assert _run(tmp_path, rate) == 0
    rows = json.loads((out / "rate.json").read_text())["rows"]
    assert [r["functional"] for r in rows] == ["I", "J"]
    assert rows[0]["value"] <= 1e-4
    assert rows[1]["value"] == pytest.approx(rows[0]["value"], rel=1e-6)
    rate["params"]["path"] = "reversed"
    assert _run(tmp_path, rate) == 0
    assert json.loads((out / "rate.json").read_text())["rows"][0]["value"] > 1e-2
    hydro = {"command": "hydro", "params": {"n_points": 256}, "output_dir": str(out)}
    assert _run(tmp_path, hydro) == 0
    rows = json.loads((out / "hydro.json").read_text())["rows"]
    assert len(rows) == len(cli.DEFAULT_TEST_FUNCTIONS)
    assert max(abs(r["value"]) for r in rows) <= 1e-10
    two = {"command": "hydro", "output_dir": str(out),
           "params": {"measure": {"points": [[1, 0], [0, 1]], "weights": [0.5, 0.5]},
                      "test_functions": ["x"]}}
    assert _run(tmp_path, two) == 0
    assert json.loads((out / "hydro.json").read_text())["rows"][0]["value"] == \
        pytest.approx(-0.25)


def test_rate_from_path_file(tmp_path):
    t = np.linspace(0, 1, 11)
    rows = [[ti, 0.0 + ti, 2.0 + ti] for ti in t]
    io.write_csv(tmp_path / "path.csv", ["t", "x1", "x2"], rows)
    cfg = {"command": "rate", "output_dir": str(tmp_path / "o"),
           "params": {"path_file": str(tmp_path / "path.csv"), "functional": "I"}}
    assert _run(tmp_path, cfg) == 0
    value = json.loads((tmp_path / "o" / "rate.json").read_text())["rows"][0]["value"]
    assert value > 0


def test_atomic_writes_leave_no_temporaries(tmp_path, monkeypatch):
    io.write_json(tmp_path / "a.json", {"x": 1.5, "y": [float("nan"), np.float64(2.0)]})
    assert [p.name for p in tmp_path.iterdir()] == ["a.json"]
    assert json.loads((tmp_path / "a.json").read_text()) == {"x": 1.5, "y": [None, 2.0]}

    before = (tmp_path / "a.json").read_bytes()

    def fail(*args):
        raise OSError("disk full")

    monkeypatch.setattr(io.os, "replace", fail)
    with pytest.raises(OSError):
        io.write_json(tmp_path / "a.json", {"x": 2})
    assert [p.name for p in tmp_path.iterdir()] == ["a.json"]
    assert (tmp_path / "a.json").read_bytes() == before


def test_csv_floats_round_trip(tmp_path):
    vals = [0.1, 1 / 3, 2.0 ** -60, 1e300, -0.0]
    io.write_csv(tmp_path / "v.csv", ["v"], [[v] for v in vals])
    _, data = io.read_csv_matrix(tmp_path / "v.csv")
    assert data[:, 0].tolist() == vals


def test_config_merging(tmp_path):
    p = _write(tmp_path, {"command": "fekete", "seed": 3, "output_dir": "x"})
    cfg = cli.load_config(p, seed=9, output=tmp_path / "y", fmt="csv")
    assert (cfg.command, cfg.seed, cfg.output_dir, cfg.format) == ("fekete", 9, tmp_path / "y",
                                                                   "csv")
    with pytest.raises(ConfigError):
        cli.ExperimentConfig("simulate", cli.CurveSpec.circle(), params=[1])


# ---------------------------------------------------------------- diagnostics

@pytest.mark.parametrize("seed", [0, 1])
def test_diagnose_passes(seed):
    report = diagnose(seed=seed)
    failed = [c.name for c in report.checks if not c.passed]
    assert not failed, failed
    d = report.to_json_dict()
    assert d["schema_version"] == 1 and d["environment"]["seed"] == seed
    assert set(d["checks"][0]) == {"name", "statistic", "threshold", "passed", "detail"}


def test_corrupted_drift_fails_stationarity():
    res = check_stationarity(0, corrupt_drift=True)
    assert not res.passed and res.statistic > res.threshold


def test_diagnose_command(tmp_path, capsys):
    cfg = {"command": "diagnose", "params": {"corrupt_drift": True},
           "output_dir": str(tmp_path / "d")}
    assert _run(tmp_path, cfg) == 0
    report = json.loads((tmp_path / "d" / "diagnostics.json").read_text())
    status = {c["name"]: c["passed"] for c in report["checks"]}
    assert status.pop("stationary_fpk_residual") is False
    assert all(status.values())
    assert report["all_passed"] is False
    assert "FAIL  stationary_fpk_residual" in capsys.readouterr().out


def _write(tmp_path, obj, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return p
