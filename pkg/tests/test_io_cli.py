import io
import json
import string

import numpy as np
import numpy.testing as npt
import pytest

import jsonschema

from fusedkite.alm import AlmParams, ssnal_solve
from fusedkite.baselines import BaselineParams, admm_solve
from fusedkite.io_cli import (
    LibsvmFormatError,
    cli_main,
    emit_report,
    generate_synthetic,
    lambda_from_alphas,
    normalize_columns,
    parse_csv_dense,
    parse_libsvm,
    read_solution,
    write_csv,
    write_libsvm,
    write_solution,
)

from conftest import make_problem


def _schema():
    import importlib.resources as res
    text = res.files("fusedkite").joinpath("report_schema.json").read_text()
    return json.loads(text)


def test_parse_libsvm_documented_example():
    A, b = parse_libsvm(io.StringIO("1.5 1:2 3:-1\n-0.5 2:4\n"))
    assert A.shape == (2, 3)
    npt.assert_allclose(b, [1.5, -0.5])
    npt.assert_allclose(A.toarray(), [[2.0, 0.0, -1.0], [0.0, 4.0, 0.0]])
    assert A.is_sparse


def test_parse_libsvm_skips_blank_lines_and_label_only_rows():
    A, b = parse_libsvm(io.StringIO("\n1.0 1:1\n\n  \n2.0\n"))
    assert A.shape == (2, 1)
    npt.assert_allclose(b, [1.0, 2.0])
    npt.assert_allclose(A.toarray(), [[1.0], [0.0]])


@pytest.mark.parametrize("text,lineno", [
    ("abc 1:2\n", 1),
    ("1.0 1:2\n2.0 oops\n", 2),
    ("1.0 0:2\n", 1),
    ("1.0 -3:2\n", 1),
    ("1.0 2:1 2:3\n", 1),
    ("1.0 5:1 3:2\n", 1),
    ("1.0 1:not_a_number\n", 1),
    ("1.0 1:1_0\n", 1),
    ("1.0 1_0:5\n", 1),
    ("1.0 1:\n", 1),
])
def test_parse_libsvm_rejects_malformed_rows(text, lineno):
    with pytest.raises(LibsvmFormatError) as err:
        parse_libsvm(io.StringIO(text))
    assert err.value.lineno == lineno
    assert f"line {lineno}:" in str(err.value)


def test_parse_libsvm_empty_input():
    with pytest.raises(LibsvmFormatError) as err:
        parse_libsvm(io.StringIO(""))
    assert err.value.lineno == 0


def test_parse_libsvm_fuzz_never_crashes_without_typed_error():
    rng = np.random.default_rng(80)
    alphabet = string.printable
    for _ in range(300):
        size = int(rng.integers(0, 60))
        junk = "".join(alphabet[i] for i in rng.integers(0, len(alphabet),
                                                         size=size))
        try:
            A, b = parse_libsvm(io.StringIO(junk))
        except LibsvmFormatError:
            continue
        assert A.shape[0] == b.shape[0]


def test_libsvm_round_trip(tmp_path):
    A, b, _ = generate_synthetic(12, 30, density=0.4, seed=81)
    path = tmp_path / "data.libsvm"
    write_libsvm(A, b, path)
    A2, b2 = parse_libsvm(path)
    npt.assert_array_equal(b2, b)
    # trailing all-zero columns are unrepresentable; pad and compare
    dense = A.toarray()
    got = A2.toarray()
    assert got.shape[1] <= dense.shape[1]
    npt.assert_array_equal(got, dense[:, :got.shape[1]])
    assert np.all(dense[:, got.shape[1]:] == 0.0)


def test_csv_round_trip(tmp_path):
    A, b, _ = generate_synthetic(9, 14, seed=82)
    path = tmp_path / "data.csv"
    write_csv(A, b, path)
    A2, b2 = parse_csv_dense(path)
    npt.assert_array_equal(A2.toarray(), A.toarray())
    npt.assert_array_equal(b2, b)


def test_parse_csv_requires_two_columns(tmp_path):
    path = tmp_path / "thin.csv"
    path.write_text("1.0\n2.0\n")
    with pytest.raises(ValueError):
        parse_csv_dense(path)


def test_normalize_columns_unit_norms_and_idempotent():
    rng = np.random.default_rng(83)
    raw = rng.standard_normal((10, 6))
    raw[:, 2] = 0.0
    from fusedkite.linops import DesignMatrix
    A, scales = normalize_columns(DesignMatrix(raw))
    norms = A.col_norms()
    npt.assert_allclose(np.delete(norms, 2), 1.0, rtol=1e-12)
    assert norms[2] == 0.0
    assert scales[2] == 1.0
    A2, scales2 = normalize_columns(A)
    npt.assert_allclose(scales2, 1.0, rtol=1e-12)
    npt.assert_allclose(A2.toarray(), A.toarray(), rtol=1e-12)


def test_lambda_from_alphas_manual():
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    b = np.array([3.0, 4.0])
    lam1, lam2 = lambda_from_alphas(A, b, 0.1, 2.0)
    assert lam1 == pytest.approx(0.8)   # 0.1 * max(|A'b|) = 0.1 * 8
    assert lam2 == pytest.approx(1.6)
    z1, z2 = lambda_from_alphas(A, np.zeros(2), 0.1, 2.0)
    assert z1 == 0.0 and z2 == 0.0


@pytest.mark.parametrize("a1,a2", [(0.0, 1.0), (1.0, 1.0), (-0.1, 1.0),
                                   (1.5, 1.0), (0.1, 0.0), (0.1, -2.0)])
def test_lambda_from_alphas_validates(a1, a2):
    A = np.eye(3)
    b = np.ones(3)
    with pytest.raises(ValueError):
        lambda_from_alphas(A, b, a1, a2)


def test_generate_synthetic_deterministic_and_shaped():
    A1, b1, x1 = generate_synthetic(20, 40, seed=84)
    A2, b2, x2 = generate_synthetic(20, 40, seed=84)
    npt.assert_array_equal(A1.toarray(), A2.toarray())
    npt.assert_array_equal(b1, b2)
    npt.assert_array_equal(x1, x2)
    assert A1.shape == (20, 40)
    assert b1.shape == (20,)
    assert x1.shape == (40,)
    A3, _, _ = generate_synthetic(20, 40, seed=85)
    assert not np.array_equal(A1.toarray(), A3.toarray())


def test_generate_synthetic_signal_is_piecewise():
    _, _, x = generate_synthetic(10, 200, n_blocks=8, seed=86)
    jumps = np.count_nonzero(np.diff(x))
    assert 0 < jumps < 8
    assert np.count_nonzero(x) < 200   # some blocks sit at zero


def test_generate_synthetic_density_controls_sparsity():
    A, _, _ = generate_synthetic(15, 30, density=0.2, seed=87)
    assert A.is_sparse
    dense = A.toarray()
    frac = np.count_nonzero(dense) / dense.size
    assert frac < 0.4
    A_full, _, _ = generate_synthetic(15, 30, density=1.0, seed=87)
    assert not A_full.is_sparse


def test_solution_file_round_trip(tmp_path):
    x = np.array([1.0, -2.5, 0.0, 1e-17, 3.25])
    path = tmp_path / "x.txt"
    write_solution(x, path)
    npt.assert_array_equal(read_solution(path), x)


def test_emit_report_validates_and_drops_nan_fields(tmp_path):
    prob = make_problem(seed=88, m=15, n=35)
    _, _, rep_s = ssnal_solve(prob, AlmParams(kkt_tol=1e-7))
    _, rep_a = admm_solve(prob, BaselineParams(tol=1e-5))
    path = tmp_path / "report.json"
    doc = emit_report([rep_s, rep_a], {"data": "synthetic"}, path=path,
                      include_trace=True)
    jsonschema.validate(doc, _schema())
    on_disk = json.loads(path.read_text())
    assert on_disk == doc
    run_s, run_a = doc["runs"]
    assert run_s["solver"] == "ssnal"
    assert "dual_quad" in run_s and "sigma_final" in run_s
    assert "dual_quad" not in run_a and "sigma_final" not in run_a
    assert "trace" in run_s
    no_trace = emit_report([rep_s], {"data": "synthetic"})
    assert "trace" not in no_trace["runs"][0]
    jsonschema.validate(no_trace, _schema())


def test_cli_gen_solve_check_pipeline(tmp_path, capsys):
    data = tmp_path / "inst.libsvm"
    out = tmp_path / "report.json"
    sol = tmp_path / "x.txt"
    assert cli_main(["gen", "--m", "30", "--n", "60", "--seed", "3",
                     "--out", str(data)]) == 0
    assert cli_main(["solve", "--data", str(data), "--alpha1", "1e-2",
                     "--alpha2", "1.0", "--out", str(out),
                     "--sol", str(sol)]) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema())
    assert doc["runs"][0]["status"] == "Optimal"
    x = read_solution(sol)
    assert x.shape == (60,)
    assert cli_main(["check", "--data", str(data), "--alpha1", "1e-2",
                     "--alpha2", "1.0", "--sol", str(sol)]) == 0
    printed = capsys.readouterr().out
    assert "eta" in printed


def test_cli_solve_constrained(tmp_path):
    data = tmp_path / "inst.csv"
    out = tmp_path / "report.json"
    assert cli_main(["gen", "--m", "20", "--n", "40", "--seed", "4",
                     "--format", "csv", "--out", str(data)]) == 0
    assert cli_main(["solve-constrained", "--data", str(data),
                     "--lambda1", "1.0", "--lambda2", "1.0",
                     "--gamma", "0.4", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema())
    assert doc["runs"][0]["solver"] == "ssnal-lsm"
    assert doc["runs"][0]["mu"] > 0.0


def test_cli_bench_table(tmp_path, capsys):
    data = tmp_path / "inst.libsvm"
    out = tmp_path / "bench.json"
    assert cli_main(["gen", "--m", "15", "--n", "30", "--seed", "5",
                     "--out", str(data)]) == 0
    rc = cli_main(["bench", "--data", str(data), "--alpha1", "5e-2",
                   "--alpha2", "1.0", "--solvers", "ssnal,admm,apg",
                   "--tol", "1e-5", "--out", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    jsonschema.validate(doc, _schema())
    assert [r["solver"] for r in doc["runs"]] == ["ssnal", "admm", "apg"]
    table = capsys.readouterr().out
    for name in ("ssnal", "admm", "apg"):
        assert name in table


def test_cli_config_errors_exit_2(tmp_path):
    data = tmp_path / "inst.libsvm"
    cli_main(["gen", "--m", "8", "--n", "12", "--out", str(data)])
    # both weight conventions at once
    rc = cli_main(["solve", "--data", str(data), "--alpha1", "0.1",
                   "--alpha2", "1.0", "--lambda1", "0.5", "--lambda2", "0.5"])
    assert rc == 2
    # neither convention
    assert cli_main(["solve", "--data", str(data)]) == 2
    # missing input file
    assert cli_main(["solve", "--data", str(tmp_path / "nope.libsvm"),
                     "--alpha1", "0.1", "--alpha2", "1.0"]) == 2
    # malformed data
    bad = tmp_path / "bad.libsvm"
    bad.write_text("1.0 3:1 2:9\n")
    assert cli_main(["solve", "--data", str(bad), "--alpha1", "0.1",
                     "--alpha2", "1.0"]) == 2
    # solution length mismatch in check
    sol = tmp_path / "short.txt"
    write_solution(np.zeros(3), sol)
    assert cli_main(["check", "--data", str(data), "--alpha1", "0.1",
                     "--alpha2", "1.0", "--sol", str(sol)]) == 2


def test_cli_unreached_tolerance_exits_3(tmp_path):
    data = tmp_path / "inst.libsvm"
    cli_main(["gen", "--m", "25", "--n", "50", "--seed", "6",
              "--out", str(data)])
    rc = cli_main(["solve", "--data", str(data), "--alpha1", "1e-3",
                   "--alpha2", "1.0", "--solver", "apg", "--tol", "1e-10",
                   "--max-iter", "5"])
    assert rc == 3


def test_cli_bad_subcommand_exits_2():
    assert cli_main(["frobnicate"]) == 2
    assert cli_main([]) == 2


def test_thread_cap_env_var(tmp_path, monkeypatch, capsys):
    data = tmp_path / "inst.libsvm"
    cli_main(["gen", "--m", "10", "--n", "20", "--out", str(data)])
    monkeypatch.setenv("FUSED_KITE_THREADS", "1")
    assert cli_main(["solve", "--data", str(data), "--alpha1", "0.1",
                     "--alpha2", "1.0"]) == 0
    monkeypatch.setenv("FUSED_KITE_THREADS", "zero")
    assert cli_main(["solve", "--data", str(data), "--alpha1", "0.1",
                     "--alpha2", "1.0"]) == 0
    assert "FUSED_KITE_THREADS" in capsys.readouterr().err
