"""Command-line surface: option handling, formats, exit codes, determinism."""

import json
import math

import numpy as np
import pytest

from rotorkit import NumericalError, PhasePoint, Representation, overlap
from rotorkit import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv)
    assert code == 0, err
    return json.loads(out)


def test_overlap_coincident_points(capsys):
    payload = run_json(capsys, "overlap", "--s", "1", "--zI", "0,0", "--zF", "0,0")
    # norm^2 at s = 1 carries a visible theta correction above sqrt(pi)
    assert payload["overlap"][0] == pytest.approx(1.7726372048266525, rel=1e-15)
    assert payload["overlap"][1] == 0.0
    assert payload["normalized"] == [1.0, 0.0]
    assert payload["normalized_abs"] == 1.0


def test_overlap_antipodal_points(capsys):
    payload = run_json(capsys, "overlap", "--s", "0.5",
                       "--zI", "0,0", "--zF", "pi,0")
    n = np.arange(-60, 61)
    weights = np.exp(-0.25 * n.astype(float) ** 2)
    brute = float(np.sum(weights * np.cos(np.pi * n)) / np.sum(weights))
    got = complex(payload["normalized"][0], payload["normalized"][1])
    # the brute sum cancels O(1) terms down to ~1e-4, so its own noise
    # floor sits near 1e-12 relative
    assert abs(got - brute) <= 1e-11 * abs(brute)
    # leading image pair of the Poisson-resummed overlap at s = 1/2
    assert payload["normalized_abs"] == pytest.approx(2.0 * math.exp(-math.pi**2),
                                                      rel=1e-7)


def test_pi_tokens_match_decimal_output(capsys):
    args = ("overlap", "--s", "0.4", "--delta", "0.3", "--zI", "0,0")
    _, out_token, _ = run(capsys, *args, "--zF", "0.5pi,0")
    _, out_plain, _ = run(capsys, *args, "--zF", "1.5707963267948966,0")
    assert out_token == out_plain
    _, out_div, _ = run(capsys, *args, "--zF", "pi/2,0")
    assert out_div == out_token


def test_config_supplies_defaults_flags_win(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"s": 0.25, "zI": "0,0", "zF": "1,0"}))
    merged = run_json(capsys, "overlap", "--config", str(cfg), "--s", "0.5")
    direct = run_json(capsys, "overlap", "--s", "0.5", "--zI", "0,0", "--zF", "1,0")
    assert merged == direct
    from_cfg = run_json(capsys, "overlap", "--config", str(cfg))
    low = run_json(capsys, "overlap", "--s", "0.25", "--zI", "0,0", "--zF", "1,0")
    assert from_cfg == low


def test_unknown_config_key_rejected_without_output(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"zI": "0,0", "zF": "1,0", "bogus": 1}))
    out_file = tmp_path / "result.json"
    code, _, err = run(capsys, "overlap", "--config", str(cfg),
                       "--out", str(out_file))
    assert code == 2
    assert "unknown config keys" in err
    assert not out_file.exists()


def test_malformed_config_is_a_usage_error(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    code, _, err = run(capsys, "overlap", "--config", str(cfg),
                       "--zI", "0,0", "--zF", "1,0")
    assert code == 2
    assert "malformed config" in err


def test_missing_required_options(capsys):
    code, _, err = run(capsys, "overlap", "--s", "0.5")
    assert code == 2
    assert "zI" in err and "zF" in err


def test_expect_point_conventions(capsys):
    payload = run_json(capsys, "expect", "--s", "0.6",
                       "--phi", "0.5pi", "--p", "0.2")
    # label p maps to <p> = p/s^2 up to an e^{-pi^2/s^2} lattice correction,
    # which at s = 0.6 sits near 1e-12
    assert payload["exp_p"] == pytest.approx(0.2 / 0.36, rel=1e-10)
    phase = math.atan2(payload["exp_iphi"][1], payload["exp_iphi"][0])
    assert phase == pytest.approx(math.pi / 2, abs=1e-12)
    assert payload["uncertainty"]["relative_gap"] <= 1e-10


def test_husimi_csv_layout_and_determinism(capsys, tmp_path):
    out_a = tmp_path / "a.csv"
    out_b = tmp_path / "b.csv"
    args = ("husimi", "--s", "0.5", "--phi", "0.5pi", "--p", "0.5",
            "--phi-count", "32", "--p-count", "17")
    payload = run_json(capsys, *args, "--out", str(out_a))
    run_json(capsys, *args, "--out", str(out_b))
    assert out_a.read_bytes() == out_b.read_bytes()
    lines = out_a.read_text().splitlines()
    assert lines[0] == "phi,p,value"
    assert len(lines) == 1 + 32 * 17
    assert payload["rows"] == 32 * 17
    # row-major: the momentum column cycles fastest
    first_phis = {line.split(",")[0] for line in lines[1:18]}
    assert len(first_phis) == 1
    values = np.array([float(line.split(",")[2]) for line in lines[1:]])
    peak = lines[1 + int(np.argmax(values))].split(",")
    assert float(peak[0]) == pytest.approx(math.pi / 2, abs=0.2)
    assert float(peak[1]) == pytest.approx(0.5, abs=0.25)


def test_husimi_requires_out(capsys):
    code, _, err = run(capsys, "husimi", "--phi", "0")
    assert code == 2
    assert "--out" in err


def test_zeros_schema_two_term_state(capsys, tmp_path):
    state = tmp_path / "state.json"
    state.write_text(json.dumps(
        {"n_min": 0, "coeffs": [[1.0, 0.0], [1.0, 0.0]]}))
    out_file = tmp_path / "zeros.json"
    code, out, _ = run(capsys, "zeros", "--s", "0.5", "--state", str(state),
                       "--out", str(out_file))
    assert code == 0
    assert out_file.read_text() == out
    payload = json.loads(out)
    assert set(payload) == {"m", "l", "C", "zeros"}
    assert payload["m"] == 0
    assert payload["l"] == 0
    assert len(payload["zeros"]) == 1
    z = payload["zeros"][0]
    assert z[0] == pytest.approx(math.pi, abs=1e-9)
    assert z[1] == pytest.approx(0.125, abs=1e-9)
    assert payload["C"][0] == pytest.approx(math.log(1 + math.exp(-0.125)),
                                            abs=1e-10)
    assert abs(payload["C"][1]) < 1e-10


def test_reconstruct_roundtrip_error(capsys, tmp_path):
    state = tmp_path / "state.json"
    state.write_text(json.dumps(
        {"n_min": -1, "coeffs": [[0.4, 0.1], [1.0, 0.0], [-0.3, 0.7]]}))
    payload = run_json(capsys, "reconstruct", "--s", "0.5", "--delta", "0.2",
                       "--state", str(state), "--samples", "40", "--seed", "3")
    assert payload["max_rel_error"] <= 1e-6
    assert payload["samples"] == 40


def test_propagate_csv_and_short_time_value(capsys, tmp_path):
    out_file = tmp_path / "branches.csv"
    payload = run_json(capsys, "propagate", "--s", "0.3", "--delta", "0.3",
                       "--zI", "0.1,0", "--zF", "0.524,0", "--tau", "0.001",
                       "--out", str(out_file))
    lines = out_file.read_text().splitlines()
    assert lines[0] == "n,nu,re_contrib,im_contrib,re_S,im_S,prefactor_abs,prefactor_arg"
    assert len(lines) == 1 + payload["branch_count"]
    rep = Representation(0.3, 0.3)
    ref = overlap(rep, PhasePoint.from_label(0.524 + 0j),
                  PhasePoint.from_label(0.1 + 0j))
    got = complex(payload["value"][0], payload["value"][1])
    assert abs(got - ref) <= 1e-3 * abs(ref)
    assert payload["solver"]["max_boundary_residual"] < 1e-9


def test_explicit_windings_flag(capsys):
    payload = run_json(capsys, "propagate", "--s", "0.3", "--zI", "0,0",
                       "--zF", "0.3,0", "--tau", "0.2", "--steps", "120",
                       "--windings=-1,0,1")
    assert payload["truncation_report"]["included"] == [-1, 0, 1]


def test_validate_battery_passes(capsys):
    payload = run_json(capsys, "validate")
    assert payload["passed"] is True
    assert len(payload["checks"]) == 10
    assert all(c["ok"] for c in payload["checks"])


def test_numerical_error_exit_code_and_artifacts(capsys, tmp_path, monkeypatch):
    def explode(opts, out_path, threads):
        raise NumericalError("synthetic failure")

    monkeypatch.setitem(cli.HANDLERS, "overlap", explode)
    out_file = tmp_path / "err.json"
    code, out, _ = run(capsys, "overlap", "--zI", "0,0", "--zF", "1,0",
                       "--out", str(out_file))
    assert code == 3
    payload = json.loads(out)
    assert payload["error"]["type"] == "NumericalError"
    assert payload["error"]["message"] == "synthetic failure"
    assert out_file.read_text() == out


def test_out_json_copy_matches_stdout(capsys, tmp_path):
    out_file = tmp_path / "overlap.json"
    code, out, _ = run(capsys, "overlap", "--zI", "0.2,0.1", "--zF", "1,0",
                       "--out", str(out_file))
    assert code == 0
    assert out_file.read_text() == out
