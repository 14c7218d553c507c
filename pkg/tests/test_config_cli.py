import json
import logging
import os

import pytest
from hypothesis import given, strategies as st

from spinsqueeze import cli
from spinsqueeze.config import ConfigError, from_dict, loads, parse_config, point_seed
from spinsqueeze.io import read_csv

MINIMAL = {"experiment_id": "e1", "geometry": "ring1d", "params": {"alpha": 1.5}, "sizes": [64]}


def test_minimal_config_defaults():
    cfg = from_dict(MINIMAL)
    assert cfg.delta == 0.0 and cfg.spin_s == 0.5 and cfg.method == "rotor_sw"
    assert cfg.n_samples == 500 and cfg.t_grid.kind == "auto" and cfg.sweep is None
    assert cfg.params.dilution_p == 0.0 and cfg.params.apply_kac
    assert from_dict(dict(MINIMAL, geometry="triangular2d")).params.dimension == 2


def test_delta_outside_squeezing_regime():
    with pytest.raises(ConfigError) as exc:
        from_dict(dict(MINIMAL, delta=1.5))
    assert exc.value.errors == ["delta: delta=1.5 violates |delta| < 1 (squeezing regime)"]


def test_duplicate_sweep_values_warn(caplog):
    with caplog.at_level(logging.WARNING):
        cfg = from_dict(dict(MINIMAL, sweep={"variable": "delta", "values": [0.1, 0.2, 0.1]}))
    assert cfg.sweep.values == (0.1, 0.2)
    assert len(cfg.warnings) == 1 and "duplicate" in caplog.text


def test_every_error_is_listed():
    bad = {"experiment_id": "", "geometry": "pw2", "params": {"alpha": "x", "colour": 1},
           "sizes": [12, 64], "delta": -1.0, "spin_s": 0.3, "method": "magic", "bogus": True,
           "t_grid": {"kind": "linear"}, "sweep": {"variable": "temperature", "values": [1]}}
    with pytest.raises(ConfigError) as exc:
        from_dict(bad)
    joined = "\n".join(exc.value.errors)
    for field in ("experiment_id", "params.alpha", "params.colour", "sizes[0]", "delta:",
                  "spin_s", "method", "bogus", "t_grid.t_max", "sweep.variable"):
        assert field in joined, field
    assert "sizes[1]" not in joined


def test_malformed_json_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="malformed"):
        loads("{not json")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "absent.json")


configs = st.fixed_dictionaries({
    "experiment_id": st.text("abcxyz_-0123", min_size=1, max_size=12),
    "geometry": st.sampled_from(["ring1d", "correlated_bond"]),
    "params": st.fixed_dictionaries({"alpha": st.floats(0.0, 4.0),
                                     "bond_C": st.floats(0.01, 1.0)}),
    "sizes": st.lists(st.integers(2, 5000), min_size=1, max_size=4),
    "delta": st.floats(-0.99, 0.99),
    "spin_s": st.sampled_from([0.5, 1.0, 1.5, 3.0]),
    "method": st.sampled_from(["rotor_sw", "dtwa", "both"]),
    "n_samples": st.integers(2, 10 ** 4),
    "seed": st.integers(0, 2 ** 62),
    "sweep": st.one_of(st.none(), st.fixed_dictionaries({
        "variable": st.sampled_from(["alpha", "bond_C", "kappa_scale"]),
        "values": st.lists(st.floats(0.01, 3.0), min_size=1, max_size=5, unique=True)})),
    "t_grid": st.fixed_dictionaries({"kind": st.sampled_from(["linear", "log"]),
                                     "t_max": st.floats(0.1, 1e4),
                                     "n_points": st.integers(3, 500)}),
})


@given(configs)
def test_config_round_trip(raw):
    cfg = from_dict(raw)
    again = loads(cfg.dumps())
    assert again == cfg
    assert again.dumps() == cfg.dumps()
    assert again.digest() == cfg.digest()


@given(st.lists(st.floats(-0.9, 0.9), min_size=2, max_size=6, unique=True), st.randoms())
def test_point_seed_independent_of_order(values, rnd):
    base = dict(MINIMAL, sweep={"variable": "delta", "values": values})
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a = from_dict(base)
    b = from_dict(dict(base, sweep={"variable": "delta", "values": shuffled}))
    assert {v: a.point_seed(v) for v in values} == {v: b.point_seed(v) for v in values}
    assert len({point_seed(0, "delta", v) for v in values}) == len(values)


# --- CLI --------------------------------------------------------------------

def test_spectrum_subcommand(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["spectrum", "--geometry", "ring1d", "--alpha", "1.8", "--sizes",
                     "64,128,256,512,1024", "--out", str(out), "--id", "spec", "--recurrence"],
                    environ={})
    assert code == 0
    d = out / "spec"
    h, rows = read_csv(d / "spectrum_N64.csv")
    assert h == ["index", "lambda"] and len(rows) == 64
    rep = json.loads((d / "spectrum_report.json").read_text())
    assert rep["predicted_ds"] == pytest.approx(2.5)
    assert rep["ds_from_gap"]["ds"] == pytest.approx(2.5, rel=0.15)
    man = json.loads((d / "manifest.json").read_text())
    assert man["exit_code"] == 0 and "spectrum_N1024.csv" in man["files"]
    assert man["config_sha256"] and man["versions"]["numpy"]
    assert (d / "recurrence_N64.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    args = ["squeeze", "--geometry", "ring1d", "--alpha", "1.5", "--dilution", "0.2",
            "--sizes", "16,32", "--method", "both", "--samples", "20", "--n-points", "12",
            "--seed", "9", "--id", "r"]
    assert cli.main(args + ["--out", str(tmp_path / "a")], environ={}) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b")], environ={}) == 0
    for name in ("dtwa_N16.csv", "dtwa_N32.csv", "rotor_N32.csv", "minima.csv",
                 "analysis.json"):
        assert (tmp_path / "a" / "r" / name).read_bytes() == (tmp_path / "b" / "r" / name).read_bytes()


def test_squeeze_both_methods_share_grid(tmp_path):
    code = cli.main(["squeeze", "--geometry", "ring1d", "--alpha", "0", "--sizes", "16",
                     "--method", "both", "--samples", "40", "--n-points", "20", "--gnuplot",
                     "--out", str(tmp_path), "--id", "b"], environ={})
    assert code == 0
    d = tmp_path / "b"
    h, dt = read_csv(d / "dtwa_N16.csv")
    _, ro = read_csv(d / "rotor_N16.csv")
    assert [r[0] for r in dt] == [r[0] for r in ro]
    assert h[-4:] == ["m_xy", "m_xy_err", "n_samples", "xi2_err"]
    assert set(json.loads((d / "analysis.json").read_text())["b"]) == {"rotor_sw", "dtwa"}
    assert (d / "squeeze.gp").exists() and (d / "perturbation_N16.json").exists()


def test_invalid_config_exits_one(tmp_path, capsys):
    cfgf = tmp_path / "c.json"
    cfgf.write_text(json.dumps(dict(MINIMAL, delta=1.5)))
    assert cli.main(["squeeze", "--config", str(cfgf), "--out", str(tmp_path)], environ={}) == 1
    assert "delta=1.5 violates" in capsys.readouterr().err
    assert cli.main(["squeeze", "--no-such-flag"], environ={}) == 1
    assert cli.main(["spectrum", "--geometry", "pw2", "--sizes", "12"], environ={}) == 1


def test_partial_sweep_failure_exits_two(tmp_path):
    # at p = 0.999 the 16-site ring loses its bonds, so that point fails
    code = cli.main(["sweep", "--geometry", "ring1d", "--alpha", "1.5", "--sizes", "16,32,64",
                     "--sweep", "dilution_p=0.0,0.1,0.999", "--refine", "0", "--out",
                     str(tmp_path), "--id", "s"], environ={})
    assert code == 2
    man = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert man["exit_code"] == 2 and len(man["failures"]) == 1
    assert man["failures"][0]["value"] == 0.999
    assert "without bonds" in man["failures"][0]["error"]
    assert "dilution_p=0.1" in man["seeds"]
    assert (tmp_path / "s" / "dilution_p=0" / "rotor_N64.csv").exists()


def test_sweep_success_writes_report(tmp_path):
    code = cli.main(["sweep", "--geometry", "ring1d", "--alpha", "1.5", "--sizes", "16,32,64",
                     "--sweep", "delta=0.0,0.5", "--refine", "0", "--gnuplot", "--out",
                     str(tmp_path), "--id", "d"], environ={})
    assert code == 0
    rep = json.loads((tmp_path / "d" / "analysis.json").read_text())["d"]
    assert set(rep["classification"]) == {"0", "0.5"}
    h, rows = read_csv(tmp_path / "d" / "sweep_minima.csv")
    assert h == ["value", "size", "t_min", "xi2_min", "xi2_err", "at_edge"] and len(rows) == 6


def test_environment_overrides(tmp_path):
    env = {"SPINSQUEEZE_OUTPUT_DIR": str(tmp_path / "envout"), "SPINSQUEEZE_THREADS": "3"}
    assert cli.main(["graph-stats", "--geometry", "pw2", "--alpha", "0.5", "--sizes", "64",
                     "--id", "g"], environ=env) == 0
    man = json.loads((tmp_path / "envout" / "g" / "manifest.json").read_text())
    assert man["config"]["workers"] == 3
    # flags win over the environment
    assert cli.main(["graph-stats", "--geometry", "pw2", "--alpha", "0.5", "--sizes", "64",
                     "--id", "g", "--out", str(tmp_path / "flag")], environ=env) == 0
    assert (tmp_path / "flag" / "g" / "graph_stats.csv").exists()
    assert cli.main(["graph-stats", "--geometry", "pw2", "--sizes", "64"],
                    environ={"SPINSQUEEZE_THREADS": "many"}) == 1


def test_fit_subcommand(tmp_path):
    assert cli.main(["squeeze", "--geometry", "ring1d", "--alpha", "0", "--sizes",
                     "64,256,1024", "--n-points", "400", "--out", str(tmp_path), "--id", "q"],
                    environ={}) == 0
    traces = [str(tmp_path / "q" / f"rotor_N{n}.csv") for n in (64, 256, 1024)]
    assert cli.main(["fit", *traces, "--out", str(tmp_path), "--id", "f"], environ={}) == 0
    rep = json.loads((tmp_path / "f" / "analysis.json").read_text())["f"]
    assert 0.60 <= rep["mu"]["exponent"] <= 0.73
    assert rep["classification"] in ("scalable", "undecided")
    bad = tmp_path / "nosize.csv"
    bad.write_text("t,xi2\n0,1\n")
    assert cli.main(["fit", str(bad), "--out", str(tmp_path)], environ={}) == 1


def test_percolate_subcommand(tmp_path):
    assert cli.main(["percolate", "--geometry", "ring1d", "--alpha", "0", "--sizes", "16,32,64",
                     "--grid", "0.5,0.8,0.9,0.95,0.98,0.99", "--seeds-per-point", "100",
                     "--out", str(tmp_path), "--id", "p"], environ={}) == 0
    rep = json.loads((tmp_path / "p" / "percolation.json").read_text())
    assert rep["control"] == "dilution_p" and rep["sizes"]["32"]["formula"] == pytest.approx(1 - 1 / 30)
    assert os.path.exists(tmp_path / "p" / "percolation.csv")
