"""Harness behavior: exit codes, CSV and PNG outputs, config routing."""

import numpy as np
import pytest

from nepbroyden.cli import (RunConfig, _complex_arg, apply_config_file,
                            build_problem, main)
from nepbroyden.history import ConvergenceHistory


def _write_history(path, ks, lams):
    hist = ConvergenceHistory()
    for i, (k, lam) in enumerate(zip(ks, lams)):
        hist.record(k, 10.0 ** -i, lam, 0.01 * i)
    hist.write_csv(str(path))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def test_run_writes_history_and_converges(tmp_path, capsys):
    out = tmp_path / "toy.csv"
    code = main(["run", "--problem", "diag-toy", "--method", "T",
                 "--sigma", "4.9", "-o", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "problem=diag-toy method=T" in captured.out
    assert f"wrote {out}" in captured.out
    hist = ConvergenceHistory.read_csv(str(out))
    assert hist.residual[-1] <= 1e-10
    assert abs(hist.lam[-1] - 5.0) < 1e-8


def test_run_is_deterministic_apart_from_timing(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for out in paths:
        assert main(["run", "--problem", "qdep", "--method", "T",
                     "-o", str(out)]) == 0
    ha, hb = (ConvergenceHistory.read_csv(str(p)) for p in paths)
    assert ha.k == hb.k
    assert ha.residual == hb.residual
    assert ha.lam == hb.lam


def test_run_single_precision_loosens_tolerance(tmp_path, capsys):
    out = tmp_path / "single.csv"
    code = main(["run", "--problem", "diag-toy", "--method", "J",
                 "--sigma", "4.9", "--precision", "single", "-o", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "precision=single" in captured.out
    hist = ConvergenceHistory.read_csv(str(out))
    assert hist.residual[-1] <= 1e-5


def test_run_resinv_method(tmp_path, capsys):
    out = tmp_path / "ri.csv"
    code = main(["run", "--problem", "diag-toy", "--method", "resinv",
                 "--sigma", "4.9", "-o", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "lambda = " in captured.out
    hist = ConvergenceHistory.read_csv(str(out))
    assert abs(hist.lam[-1] - 5.0) < 1e-8


def test_run_deflated_prints_eigenvalues(tmp_path, capsys):
    out = tmp_path / "defl.csv"
    code = main(["run", "--problem", "qdep", "--method", "deflated",
                 "--p", "2", "-o", str(out)])
    captured = capsys.readouterr()
    assert code == 0
    assert "2 eigenvalue(s)" in captured.out
    hist = ConvergenceHistory.read_csv(str(out))
    assert len(hist) > 0
    assert all(b > a for a, b in zip(hist.k, hist.k[1:]))


def test_run_stepper_problem_without_assembled_matrix(tmp_path):
    out = tmp_path / "dde.csv"
    code = main(["run", "--problem", "tpdde-scalar", "--method", "T",
                 "--sigma", "0.9", "-o", str(out)])
    assert code == 0
    hist = ConvergenceHistory.read_csv(str(out))
    # b = 0 scalar problem: lam = a is an eigenvalue of the discrete march too
    assert abs(hist.lam[-1] - 1.0) < 1e-8


def test_run_not_converged_still_writes_csv(tmp_path, capsys):
    out = tmp_path / "stall.csv"
    code = main(["run", "--problem", "qdep", "--maxit", "1",
                 "--tol", "1e-30", "-o", str(out)])
    captured = capsys.readouterr()
    assert code == 2
    assert "not converged" in captured.out
    assert len(ConvergenceHistory.read_csv(str(out))) >= 1


def test_run_solver_error_exits_1(tmp_path, capsys):
    # at sigma = 4.9 the smallest-eigenvalue candidate of the toy problem is
    # the second basis vector, orthogonal to c = e1
    out = tmp_path / "none.csv"
    code = main(["run", "--problem", "diag-toy", "--sigma", "4.9",
                 "--c-choice", "e1", "-o", str(out)])
    captured = capsys.readouterr()
    assert code == 1
    assert "error:" in captured.err
    assert not out.exists()


def test_run_plot_writes_png_next_to_csv(tmp_path, capsys):
    out = tmp_path / "toy.csv"
    code = main(["run", "--problem", "diag-toy", "--sigma", "4.9",
                 "-o", str(out), "--plot"])
    captured = capsys.readouterr()
    png = tmp_path / "toy.png"
    assert code == 0
    assert f"wrote {png}" in captured.out
    assert png.read_bytes()[:4] == b"\x89PNG"


# ---------------------------------------------------------------------------
# usage and config errors
# ---------------------------------------------------------------------------


def test_bad_flag_exits_with_usage_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--problem", "no-such"])
    assert exc.value.code == 64
    capsys.readouterr()


def test_compare_needs_two_files(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["compare", "only-one.csv"])
    assert exc.value.code == 64
    capsys.readouterr()


def test_bad_config_value_exits_64(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("tol = not-a-number\n")
    code = main(["run", "--problem", "diag-toy", "--config", str(cfgfile),
                 "-o", str(tmp_path / "x.csv")])
    captured = capsys.readouterr()
    assert code == 64
    assert "bad value for 'tol'" in captured.err


def test_unknown_problem_parameter_exits_64(tmp_path, capsys):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("n = 10\n")
    code = main(["run", "--problem", "diag-toy", "--config", str(cfgfile),
                 "-o", str(tmp_path / "x.csv")])
    captured = capsys.readouterr()
    assert code == 64
    assert "not understood by problem 'diag-toy'" in captured.err


# ---------------------------------------------------------------------------
# compare and report
# ---------------------------------------------------------------------------


def test_compare_identical_histories(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    lams = [0.3 + 0.1j, 0.31 + 0.09j, 0.312 + 0.088j]
    _write_history(a, [0, 1, 2], lams)
    _write_history(b, [0, 1, 2], lams)
    code = main(["compare", str(a), str(b)])
    captured = capsys.readouterr()
    assert code == 0
    assert f"max |dlambda| vs reference for {b}: 0.000000e+00" in captured.out


def test_compare_disjoint_iteration_ranges(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    _write_history(a, [0, 1, 2], [0.1, 0.2, 0.3])
    _write_history(b, [10, 11], [0.1, 0.2])
    code = main(["compare", str(a), str(b)])
    captured = capsys.readouterr()
    assert code == 65
    assert "no overlapping iterations" in captured.out


def test_compare_rejects_malformed_file(tmp_path, capsys):
    a = tmp_path / "a.csv"
    _write_history(a, [0, 1], [0.1, 0.2])
    bad = tmp_path / "bad.csv"
    bad.write_text("k,residual_norm\n0,1\n")
    code = main(["compare", str(a), str(bad)])
    captured = capsys.readouterr()
    assert code == 65
    assert "malformed history file" in captured.err


def test_report_renders_default_png(tmp_path, capsys):
    a = tmp_path / "hist.csv"
    _write_history(a, [0, 1, 2, 3], [0.1, 0.2, 0.25, 0.26])
    code = main(["report", str(a)])
    captured = capsys.readouterr()
    png = tmp_path / "hist.png"
    assert code == 0
    assert f"wrote {png}" in captured.out
    assert png.read_bytes()[:4] == b"\x89PNG"


def test_report_two_files_with_target(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    _write_history(a, [0, 1, 2], [0.1, 0.2, 0.26])
    _write_history(b, [0, 1, 2], [0.1, 0.21, 0.259])
    png = tmp_path / "figure.png"
    code = main(["report", str(a), str(b), "--target", "0.26",
                 "-o", str(png)])
    captured = capsys.readouterr()
    assert code == 0
    assert "max |dlambda|" in captured.out
    assert png.read_bytes()[:4] == b"\x89PNG"


def test_report_missing_file_exits_65(tmp_path, capsys):
    code = main(["report", str(tmp_path / "nope.csv")])
    captured = capsys.readouterr()
    assert code == 65
    assert "error:" in captured.err


# ---------------------------------------------------------------------------
# configuration plumbing
# ---------------------------------------------------------------------------


def test_config_file_wins_over_flags(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("method = J\ntol = 1e-8\nc-choice = e1\nn = 12\n")
    cfg = RunConfig(problem="qdep", method="T", tol=1e-3)
    apply_config_file(cfg, str(cfgfile))
    assert cfg.method == "J"
    assert cfg.tol == 1e-8
    assert cfg.c_choice == "e1"
    assert cfg.problem_params == {"n": "12"}
    cfg.validate()


def test_config_file_bad_value_message(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("maxit = soon\n")
    with pytest.raises(ValueError, match="bad value for 'maxit': 'soon'"):
        apply_config_file(RunConfig(), str(cfgfile))


def test_run_config_validation_messages():
    with pytest.raises(ValueError, match="unknown problem 'nope'"):
        RunConfig(problem="nope").validate()
    with pytest.raises(ValueError, match="unknown method 'X'"):
        RunConfig(method="X").validate()
    with pytest.raises(ValueError, match="unknown c-choice"):
        RunConfig(c_choice="zeros").validate()
    with pytest.raises(ValueError, match="maxit"):
        RunConfig(maxit=0).validate()
    with pytest.raises(ValueError, match="damping"):
        RunConfig(damping=0.0).validate()
    with pytest.raises(ValueError, match="not understood"):
        RunConfig(problem="qep", problem_params={"tau": "2"}).validate()


def test_effective_tol_tracks_precision():
    assert RunConfig().effective_tol == 1e-10
    assert RunConfig(precision="single").effective_tol == 1e-5
    assert RunConfig(tol=3e-7, precision="single").effective_tol == 3e-7


def test_build_problem_routes_parameters():
    nep = build_problem(RunConfig(problem="qdep",
                                  problem_params={"n": "17"}))
    assert nep.n == 17
    nep = build_problem(RunConfig(problem="qep", precision="single"))
    assert nep.dtype == np.complex64
    # a steps key in the config beats the --ode-steps flag
    nep = build_problem(RunConfig(problem="milling-1dof", ode_steps=32,
                                  problem_params={"zeta": "0.05",
                                                  "steps": "64"}))
    assert nep.ode_config.steps == 64
    assert nep.milling_config.zeta == 0.05


def test_complex_argument_parsing():
    assert _complex_arg("0.5+8j") == 0.5 + 8j
    assert _complex_arg("-2") == -2 + 0j
    assert _complex_arg("1 + 2j") == 1 + 2j
