import json

import pytest

from higgsflow.cli import load_config, main


def run_cli(*argv):
    return main(list(argv))


def test_catalog_lists_scenarios(capsys):
    assert run_cli("catalog") == 0
    out = capsys.readouterr().out
    assert "nilpotent-r2" in out and "extension-sweep" in out
    assert run_cli("catalog", "--json") == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) >= 7


def test_validate_scenarios(capsys):
    assert run_cli("validate", "--scenario", "nilpotent-r2") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["valid"] is True


def test_validate_unknown_scenario(capsys):
    assert run_cli("validate", "--scenario", "nope") == 2
    err = capsys.readouterr().err
    assert json.loads(err)["error"]


def test_state_file_roundtrip_through_cli(tmp_path, capsys):
    from higgsflow import build_scenario, save_state
    snap = tmp_path / "state.snap"
    save_state(build_scenario("nilpotent-r2", N=16), snap)
    assert run_cli("validate", "--state-file", str(snap)) == 0
    assert json.loads(capsys.readouterr().out)["valid"] is True

    # missing files are a structured failure, not a traceback
    assert run_cli("validate", "--state-file", str(tmp_path / "nope.snap")) == 2
    assert json.loads(capsys.readouterr().err)["error"]


def test_run_flat_trivial_immediate_pass(tmp_path, capsys):
    code = run_cli("run", "--scenario", "flat-trivial-r1",
                   "--flow-kind", "donaldson", "--flow-T", "0.05",
                   "--flow-dt", "1e-2", "--target-epsilon", "1e-8",
                   "--out-dir", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["targets_ok"] is True
    assert summary["trace"]["final"]["ymh_energy"] == 0.0
    assert (tmp_path / "trace.csv").exists()
    assert (tmp_path / "certificate.json").exists()
    assert (tmp_path / "final_state.snap").exists()


def test_run_certificate_failure_exit_code(tmp_path):
    code = run_cli("run", "--scenario", "nilpotent-r2", "--N", "16",
                   "--flow-kind", "none", "--target-epsilon", "1e-3",
                   "--out-dir", str(tmp_path))
    assert code == 1
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["passed"] is False


def test_run_long_flow_reaches_flatness_target(tmp_path):
    code = run_cli("run", "--scenario", "nilpotent-r2", "--N", "16",
                   "--flow-kind", "donaldson", "--flow-T", "100",
                   "--flow-dt", "1e-3", "--target-epsilon", "0.05",
                   "--out-dir", str(tmp_path))
    assert code == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert cert["passed"] and cert["eps_achieved"] < 0.05
    summary = json.loads((tmp_path / "summary.json").read_text())
    # polynomial decay: the fitted YMH exponent sits near -2
    assert summary["trace"]["decay_exponent_ymh"] == pytest.approx(-2.0, abs=0.3)


def test_run_determinism_byte_identical(tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for d in dirs:
        code = run_cli("run", "--scenario", "nilpotent-r2", "--N", "16",
                       "--flow-kind", "ymh", "--flow-T", "0.25",
                       "--flow-dt", "1e-2", "--flow-fixed", "1",
                       "--target-epsilon", "10.0", "--seed", "0",
                       "--out-dir", str(d))
        assert code == 0
    assert (dirs[0] / "trace.csv").read_bytes() == (dirs[1] / "trace.csv").read_bytes()
    assert (dirs[0] / "final_state.snap").read_bytes() == \
        (dirs[1] / "final_state.snap").read_bytes()


def test_run_blowup_saves_last_healthy_snapshot(tmp_path, capsys):
    # a fixed step far above the parabolic stability bound must blow up,
    # exit nonzero, and leave the last healthy state on disk
    code = run_cli("run", "--scenario", "conformal-r1",
                   "--flow-kind", "donaldson", "--flow-T", "20.0",
                   "--flow-dt", "0.5", "--flow-fixed", "1",
                   "--out-dir", str(tmp_path))
    assert code == 3
    err = json.loads(capsys.readouterr().err)
    assert "blew up" in err["error"]
    from higgsflow import load_state
    healthy = load_state(tmp_path / "last_healthy.snap")
    healthy.metric.check_positive()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "# donaldson run at desk scale\n"
        "scenario = nilpotent-r2\n"
        "N = 16\n"
        "flow.kind = donaldson\n"
        "flow.dt = 1e-2\n"
        "flow.T = 0.5\n"
        "target.epsilon = 10.0\n"
        "seed = 1\n")
    out = tmp_path / "out"
    code = run_cli("run", "--config", str(cfg), "--out-dir", str(out),
                   "--flow-T", "0.25")
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["flow"]["T"] == 0.25  # flag overrides config


def test_config_rejects_unknown_key(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scenario = nilpotent-r2\nbogus = 1\n")
    with pytest.raises(ValueError, match="unknown key"):
        load_config(str(cfg))


def test_sweep_rho_outputs(tmp_path, capsys):
    code = run_cli("sweep-rho", "--out-dir", str(tmp_path))
    assert code == 0
    rows = (tmp_path / "rho_sweep.csv").read_text().splitlines()
    assert rows[0] == "rho,sup_a,sup_b1,sup_c1,sup_f"
    assert len(rows) == 6
    two_col = (tmp_path / "rho_supf.csv").read_text().splitlines()
    assert two_col[0] == "rho,sup_f"
    payload = json.loads((tmp_path / "rho_sweep.json").read_text())
    assert payload["passed"] is True
    assert abs(payload["fitted_slope"] - 2.0) < 0.2
    assert all(chk["passed"] for chk in payload["epsilon_checks"])


def test_verify_filtration_cli(tmp_path, capsys):
    code = run_cli("verify-filtration", "--scenario", "nilpotent-r2",
                   "--N", "16", "--target-epsilon", "1e-6",
                   "--out-dir", str(tmp_path))
    assert code == 0
    payload = json.loads((tmp_path / "filtration.json").read_text())
    assert payload["passed"] is True
    out = capsys.readouterr().out
    assert "PASS" in out


def test_flow_equivalence_cli(tmp_path):
    code = run_cli("flow-equivalence", "--scenario", "nilpotent-r2",
                   "--N", "16", "--flow-T", "0.25", "--flow-dt", "1e-2",
                   "--tolerance", "1e-3", "--out-dir", str(tmp_path))
    assert code == 0
    payload = json.loads((tmp_path / "flow_equivalence.json").read_text())
    assert payload["max_norm_residual"] <= 1e-3
