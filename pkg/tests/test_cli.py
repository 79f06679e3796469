"""CLI contract: schema validation, unit handling, manifests, determinism."""

import hashlib
import json
import math

import pytest

import catsim
from catsim import cli

TWO_PI = 2.0 * math.pi


def _write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _sha256(path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_list_names_all_ten_experiments(capsys):
    assert cli.main(["list"]) == 0
    out = capsys.readouterr().out
    names = {line.split()[0] for line in out.strip().splitlines()}
    assert names == {"fig1bc", "figS2", "fig1d", "fig2a", "fig2b", "fig3a",
                     "fig3b", "table_s1", "gap_sweep", "lifetime"}


def test_validate_normalizes_units_and_pins_seeds(tmp_path, capsys):
    cfg = _write_config(tmp_path, {
        "experiment": "lifetime",
        "output_dir": str(tmp_path / "out"),
        "params": {"kappa_s": {"value": 10.0, "unit": "kHz"}},
        "thermal": {"T": {"value": 100.0, "unit": "mK"},
                    "gamma_relax": {"value": 4.0, "unit": "mHz"}},
        "seeds": {"master": 1234},
    })
    assert cli.main(["validate", cfg]) == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["params"]["kappa_s"] == pytest.approx(TWO_PI * 1e4, rel=1e-12)
    assert resolved["thermal"]["T"] == pytest.approx(0.1, rel=1e-12)
    assert resolved["thermal"]["gamma_relax"] == pytest.approx(TWO_PI * 4e-3, rel=1e-12)
    assert resolved["seeds"]["master"] == 1234
    assert set(resolved["seeds"]) == {"master", "trajectories", "delta_j"}

    # the echo is itself a valid config and resolves to the same document
    echo = _write_config(tmp_path, resolved, name="echo.json")
    assert cli.main(["validate", echo]) == 0
    assert json.loads(capsys.readouterr().out) == resolved


def test_seed_policy_streams():
    a = cli.seed_policy({"seeds": {"master": 42}})
    b = cli.seed_policy({"seeds": {"master": 42}})
    assert a == b
    assert a["trajectories"] != a["delta_j"]
    c = cli.seed_policy({"seeds": {"master": 43}})
    assert c["trajectories"] != a["trajectories"]
    # unseeded runs still get a recorded, replayable master
    d = cli.seed_policy({})
    assert cli.seed_policy({"seeds": {"master": d["master"]}}) == d


def test_run_lifetime_writes_manifest_with_checksums(tmp_path, capsys):
    out = tmp_path / "run1"
    cfg = _write_config(tmp_path, {
        "experiment": "lifetime",
        "output_dir": str(out),
        "seeds": {"master": 7},
    })
    assert cli.main(["run", cfg]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "lifetime"
    assert manifest["version"] == catsim.__version__
    assert manifest["wall_time_s"] >= 0.0

    emitted = {p.name for p in out.iterdir()}
    assert emitted == set(manifest["files"]) | {"manifest.json"}
    for name, digest in manifest["files"].items():
        assert _sha256(out / name) == digest, name
    assert manifest["config_sha256"] == manifest["files"]["resolved_config.json"]

    payload = json.loads((out / "lifetime.json").read_text())
    # flagship point: Gamma_1at = 2*4*kappa_s/(Delta/g_col)^2 = 2pi * 8 Hz
    assert payload["suppression_ratio"] == pytest.approx(1e4, rel=1e-12)
    assert payload["Gamma_1at"]["Hz"] == pytest.approx(8.0, rel=1e-12)
    assert payload["flags"] == []


def test_rerun_from_echoed_config_is_bit_identical(tmp_path, capsys):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    cfg = _write_config(tmp_path, {
        "experiment": "gap_sweep",
        "output_dir": str(out1),
    })
    assert cli.main(["run", cfg]) == 0

    echoed = json.loads((out1 / "resolved_config.json").read_text())
    echoed["output_dir"] = str(out2)
    cfg2 = _write_config(tmp_path, echoed, name="rerun.json")
    assert cli.main(["run", cfg2]) == 0

    assert (out1 / "gap_sweep.csv").read_bytes() == (out2 / "gap_sweep.csv").read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["files"]["gap_sweep.csv"] == m2["files"]["gap_sweep.csv"]
    assert m1["seeds"] == m2["seeds"]


def test_explicit_omega_override_pins_sweep_size(tmp_path, capsys):
    # a user-chosen Omega collapses the size sweep to that single point,
    # and the echo records the override so a rerun does the same
    out = tmp_path / "one"
    cfg = _write_config(tmp_path, {
        "experiment": "gap_sweep",
        "output_dir": str(out),
        "params": {"Omega": 0.0225},  # 3.0 * chi for the default scales
    })
    assert cli.main(["run", cfg]) == 0
    lines = (out / "gap_sweep.csv").read_text().strip().splitlines()
    assert len(lines) == 2
    assert float(lines[1].split(",")[0]) == pytest.approx(3.0, rel=1e-12)
    echoed = json.loads((out / "resolved_config.json").read_text())
    assert echoed["overridden"] == ["Omega"]


def test_config_errors_exit_2(tmp_path, capsys):
    cases = [
        {"experiment": "no_such_thing", "output_dir": "x"},
        {"experiment": "lifetime", "output_dir": "x", "bogus_key": 1},
        {"experiment": "lifetime", "output_dir": "x",
         "params": {"not_a_field": 1.0}},
        # rk4 needs an explicit max_step
        {"experiment": "fig2a", "output_dir": "x",
         "integrator": {"method": "rk4"}},
        # table_s1 takes no params section
        {"experiment": "table_s1", "output_dir": "x",
         "params": {"N": 3}},
        {"experiment": "fig3a", "output_dir": "x",
         "dephasing": {"gamma_loc": -1.0}},
    ]
    for payload in cases:
        cfg = _write_config(tmp_path, payload)
        assert cli.main(["run", cfg]) == 2, payload
        err = json.loads(capsys.readouterr().out)
        assert err["error"]["kind"] == "config", payload

    bad = tmp_path / "not_json.json"
    bad.write_text("{nope")
    assert cli.main(["validate", str(bad)]) == 2
    assert cli.main(["validate", str(tmp_path / "missing.json")]) == 2


def test_runtime_error_exits_3_without_partial_artifacts(tmp_path, capsys):
    out = tmp_path / "broken"
    cfg = _write_config(tmp_path, {
        "experiment": "lifetime",
        "output_dir": str(out),
        "params": {"kappa_p": 0.0},
    })
    assert cli.main(["run", cfg]) == 3
    err = json.loads(capsys.readouterr().out)
    assert err["error"]["kind"] == "runtime"
    assert "kappa_p" in err["error"]["message"]
    assert not out.exists()
    # the staging directory must not leak either
    assert not list(tmp_path.glob(".catsim-stage-*"))


def test_table_s1_artifact_flags(tmp_path, capsys):
    out = tmp_path / "table"
    cfg = _write_config(tmp_path, {"experiment": "table_s1",
                                   "output_dir": str(out)})
    assert cli.main(["run", cfg]) == 0
    flags = json.loads((out / "table_s1_flags.json").read_text())
    assert flags["tolerance"] == 0.10
    assert {row["ref"] for row in flags["flagged"]} == {"brune1996", "xu2020"}
    lines = (out / "table_s1.csv").read_text().strip().splitlines()
    assert len(lines) == 12  # header + 11 rows
    assert "kappa_s_rad_s" in lines[0] and "kappa_s_kHz" in lines[0]


def test_full_flag_switches_fig1d_to_paper_size(tmp_path, capsys):
    cfg = _write_config(tmp_path, {"experiment": "fig1d", "output_dir": "x"})
    assert cli.main(["validate", cfg]) == 0
    desk = json.loads(capsys.readouterr().out)
    assert desk["params"]["N"] == 20 and desk["full"] is False

    assert cli.main(["validate", cfg, "--full"]) == 0
    full = json.loads(capsys.readouterr().out)
    assert full["params"]["N"] == 100 and full["full"] is True

    # "full": true in the config body works without the flag
    cfg2 = _write_config(tmp_path, {"experiment": "fig1d", "output_dir": "x",
                                    "full": True}, name="full.json")
    assert cli.main(["validate", cfg2]) == 0
    assert json.loads(capsys.readouterr().out)["params"]["N"] == 100
