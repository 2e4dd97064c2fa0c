import csv
import json
import math

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

from sapcr.cli import main
from sapcr.config import (PER_KM2, dbm_to_watt, from_dict, load_config, sweep_values,
                          watt_to_dbm)
from sapcr.errors import ConfigError

NET = {"primary_density_per_km2": 500, "primary_power_dbm": 43, "secondary_power_dbm": 23,
       "path_loss_exponent": 4, "pair_distance_m": 2}


def _write(tmp_path, raw, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


@given(st.floats(-120.0, 80.0))
def test_dbm_round_trip(dbm):
    assert watt_to_dbm(dbm_to_watt(dbm)) == pytest.approx(dbm, rel=1e-9, abs=1e-12)


def test_units_are_converted_once():
    cfg = from_dict({"network": dict(NET, beamwidth_deg=10,
                                     blockage={"factor_per_m": 0.04, "length_m": 15,
                                               "width_m": 10}, regime="mmw")})
    p = cfg.params
    assert p.lambda1 == pytest.approx(500 * PER_KM2)
    assert p.p1 == pytest.approx(19.952623149688797)
    assert p.omega == pytest.approx(math.pi / 18)
    assert p.blockage.xi == pytest.approx(0.04)


def test_schema_errors_carry_the_path():
    with pytest.raises(ConfigError) as err:
        from_dict({"network": dict(NET, primary_density_per_km2=-5)})
    assert err.value.path == "network/primary_density_per_km2"
    with pytest.raises(ConfigError) as err:
        from_dict({"network": dict(NET), "simulation": {"bins": 0}})
    assert err.value.path == "simulation/bins"
    with pytest.raises(ConfigError):
        from_dict({"network": dict(NET), "unknown": 1})


def test_sweeps():
    assert list(sweep_values({"values": [1, 2]})) == [1.0, 2.0]
    assert len(sweep_values({"start": 1, "stop": 10, "num": 4})) == 4
    assert sweep_values({"start": 1, "stop": 3, "num": 3, "spacing": "linear"})[1] == 2.0
    with pytest.raises(ConfigError):
        from_dict({"network": NET, "beta": {"start": 1, "stop": 2, "num": 0}})


def test_yaml_and_json_load(tmp_path):
    y = _write(tmp_path, {"network": NET, "seed": 3})
    j = tmp_path / "cfg.json"
    j.write_text(json.dumps({"network": NET, "seed": 3}))
    assert load_config(y).params == load_config(j).params
    bad = tmp_path / "bad.yaml"
    bad.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_empty_sweep_writes_nothing(tmp_path):
    cfg = _write(tmp_path, {"network": NET, "beta": {"values": []}})
    out = tmp_path / "out"
    assert main(["op-curve", "--config", str(cfg), "--out", str(out)]) == 2
    assert not out.exists()


def test_op_curve_is_byte_identical_and_self_describing(tmp_path):
    raw = {"network": NET, "seed": 2, "beta": {"values": [1.0]},
           "simulation": {"n_samples": 3000, "bins": 8, "min_bin_count": 20}}
    cfg = _write(tmp_path, raw)
    bodies = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main(["op-curve", "--config", str(cfg), "--out", str(out)]) == 0
        bodies.append((out / "op_curve.csv").read_bytes())
    assert bodies[0] == bodies[1]
    meta = json.loads((tmp_path / "o0" / "op_curve.json").read_text())
    assert meta["resolved_params"]["lambda1_per_m2"] == pytest.approx(5e-4)
    assert meta["seed"] == 2 and "created" in meta
    rows = list(csv.DictReader(open(tmp_path / "o0" / "op_curve.csv")))
    assert set(rows[0]) == {"beta", "interference_w", "count", "analytic_op", "mc_op",
                            "ci_low", "ci_high", "naive_op"}
    out = tmp_path / "o2"
    assert main(["op-curve", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    assert (out / "op_curve.csv").read_bytes() != bodies[0]


def test_op_curve_beta_mode(tmp_path):
    raw = {"network": dict(NET, primary_density_per_km2=7000, primary_power_dbm=6.06,
                           secondary_power_dbm=3.162, path_loss_exponent=3,
                           pair_distance_m=1.2),
           "empty_ball_radius_m": 3.6, "beta": {"values": [0.1, 1, 10]},
           "simulation": {"n_samples": 4000}}
    out = tmp_path / "o"
    assert main(["op-curve", "--config", str(_write(tmp_path, raw)), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "op_curve.csv")))
    assert [float(r["beta"]) for r in rows] == [0.1, 1.0, 10.0]
    for r in rows:
        assert abs(float(r["analytic_op"]) - float(r["mc_op"])) < 0.05


def test_ase_sweep_markers(tmp_path):
    raw = {"network": dict(NET, primary_density_per_km2=80, secondary_density_per_km2=16000,
                           pair_distance_m=3),
           "beta": {"start": 0.5, "stop": 50, "num": 5}}
    out = tmp_path / "o"
    assert main(["ase-sweep", "--config", str(_write(tmp_path, raw)), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "ase_sweep.csv")))
    marks = {r["marker"] for r in rows}
    assert "beta_min" in marks and any("beta_star" in m for m in marks)
    for r in rows:
        if float(r["beta"]) < float(next(x["beta"] for x in rows if x["marker"] == "beta_min")):
            assert r["feasible"] == "0"
    # an almost unconstrained cap pushes beta_min towards zero
    raw["network"]["outage_cap"] = 1 - 1e-12
    out2 = tmp_path / "o2"
    assert main(["ase-sweep", "--config", str(_write(tmp_path, raw, "c2.yaml")),
                 "--out", str(out2)]) == 0
    meta = json.loads((out2 / "ase_sweep.json").read_text())
    assert meta["policy"]["beta_min"] < 1e-3


def test_exit_codes(tmp_path):
    cfg = _write(tmp_path, {"network": NET, "validate": {"criteria": [1]}})
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "v")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "v" / "validate.csv")))
    assert rows[0]["criterion"] == "1" and rows[0]["passed"] == "1"
    assert main(["validate", "--config", str(cfg), "--out", str(tmp_path / "v2"),
                 "--tolerance-scale", "0"]) == 4
    assert main(["op-curve", "--config", str(tmp_path / "missing.yaml")]) == 2
    blk = {"network": dict(NET, regime="blockage", path_loss_exponent=2.7, pair_distance_m=5,
                           primary_density_per_km2=80,
                           blockage={"factor_per_m": 0.04, "length_m": 15, "width_m": 10}),
           "simulation": {"n_samples": 500, "min_bin_count": 100000},
           "fit_l": {"xi_per_m": [0.04]}}
    assert main(["fit-l", "--config", str(_write(tmp_path, blk, "b.yaml")),
                 "--out", str(tmp_path / "f")]) == 3


def test_census_and_compare_macs(tmp_path):
    raw = {"network": dict(NET, regime="mmw", path_loss_exponent=2.7, pair_distance_m=5,
                           primary_density_per_km2=80, secondary_density_per_km2=16000,
                           beamwidth_deg=10,
                           blockage={"factor_per_m": 0.04, "length_m": 15, "width_m": 10}),
           "simulation": {"n_samples": 2000}, "census": {"beamwidths_deg": [360, 10]}}
    out = tmp_path / "c"
    assert main(["census", "--config", str(_write(tmp_path, raw)), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "census.csv")))
    assert float(rows[1]["exposed_rate"]) > float(rows[0]["exposed_rate"])
    raw2 = {"network": dict(NET, primary_density_per_km2=80, secondary_density_per_km2=16000,
                            pair_distance_m=3),
            "beta": {"values": [4.0]},
            "simulation": {"n_topologies": 2, "slots_per_topology": 2, "half_width_m": 50,
                           "macs": ["sap", "no_prediction"]}}
    out = tmp_path / "m"
    assert main(["compare-macs", "--config", str(_write(tmp_path, raw2, "m.yaml")),
                 "--out", str(out)]) == 0
    macs = {r["mac"] for r in csv.DictReader(open(out / "compare_macs.csv"))}
    assert {"sap", "no_prediction"} <= macs
    raw2["simulation"]["macs"] = ["aloha"]
    assert main(["compare-macs", "--config", str(_write(tmp_path, raw2, "m2.yaml")),
                 "--out", str(tmp_path / "m2")]) == 2
