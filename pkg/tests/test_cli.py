import json
import math

import numpy as np
import pytest

from acvmlr.cli import EXIT_INPUT, EXIT_OK, EXIT_SOLVER, main
from acvmlr.io import load_dataset
from acvmlr.report import CvReport, parse_csv


def write_spec(tmp_path, **kw):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(kw))
    return path


def test_generate_default_shape(tmp_path):
    spec = write_spec(tmp_path, N=200, L=8, alpha=2, rho0=0.5, sigma_xi2=0.01, seed=0)
    out = tmp_path / "d.csv"
    assert main(["generate", str(spec), "--out", str(out)]) == EXIT_OK
    ds = load_dataset(out)
    assert ds.features.shape == (400, 200)
    assert np.loadtxt(tmp_path / "d.weights.csv", delimiter=",").shape == (8, 200)


def test_generate_seed_repeat_byte_identical(tmp_path):
    spec = write_spec(tmp_path, N=20, L=3, seed=4)
    a, b = tmp_path / "a.libsvm", tmp_path / "b.libsvm"
    assert main(["generate", str(spec), "--out", str(a)]) == EXIT_OK
    assert main(["generate", str(spec), "--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("body", ['{"N": 5, "L": 3, "colour": 1}', '{"N": 0, "L": 3}', "[1]", "{bad"])
def test_generate_malformed_spec(tmp_path, body):
    spec = tmp_path / "spec.json"
    spec.write_text(body)
    assert main(["generate", str(spec), "--out", str(tmp_path / "d.csv")]) == EXIT_INPUT


def test_binary_dataset_sweeps(tmp_path):
    spec = write_spec(tmp_path, N=10, L=2, alpha=4, sigma_xi2=0.1, seed=1)
    data = tmp_path / "d.csv"
    main(["generate", str(spec), "--out", str(data)])
    rep = tmp_path / "r.json"
    assert main(["sweep", str(data), "--out", str(rep), "--n-lambda", "4", "--decades", "1"]) == EXIT_OK
    assert CvReport.load(rep).provenance["n_classes"] == 2


def test_amplified_classes_are_one_based(tmp_path):
    spec = write_spec(tmp_path, N=10, L=3, variant="amplified", amp_classes=[3], omega=5.0, seed=2)
    data = tmp_path / "d.csv"
    main(["generate", str(spec), "--out", str(data)])
    ds = load_dataset(data)
    norms = np.linalg.norm(ds.features, axis=1)
    assert norms[ds.labels == 2].mean() > 3 * norms[ds.labels != 2].mean()


@pytest.fixture
def small_data(tmp_path):
    spec = write_spec(tmp_path, N=10, L=3, alpha=4, sigma_xi2=0.1, seed=0)
    data = tmp_path / "d.csv"
    main(["generate", str(spec), "--out", str(data)])
    return data


def test_huge_lambda_gives_log_L(tmp_path, small_data):
    rep = tmp_path / "r.json"
    assert main(["sweep", str(small_data), "--out", str(rep), "--lambdas", "1e6"]) == EXIT_OK
    r = CvReport.load(rep).records[0]
    assert r.training_error == r.eps_acv == r.eps_saacv == math.log(3)


def test_sweep_reproducible_without_timings(tmp_path, small_data):
    args = ["sweep", str(small_data), "--n-lambda", "5", "--decades", "2", "--kfold", "4",
            "--no-timings"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(args + ["--out", str(a)]) == EXIT_OK
    assert main(args + ["--out", str(b)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_sweep_bad_inputs(tmp_path, small_data):
    out = str(tmp_path / "r.json")
    bad = tmp_path / "bad.csv"
    bad.write_text("label,x1\n0,1\n")
    assert main(["sweep", str(bad), "--out", out]) == EXIT_INPUT
    assert main(["sweep", str(tmp_path / "missing.csv"), "--out", out]) == EXIT_INPUT
    assert main(["sweep", str(small_data), "--out", out, "--lambdas", ","]) == EXIT_INPUT
    assert main(["sweep", str(small_data), "--out", out, "--lambdas", "x"]) == EXIT_INPUT
    assert main(["sweep", str(small_data), "--out", out, "--estimators", "nope"]) == EXIT_INPUT
    assert main(["sweep", str(small_data), "--out", out, "--eta", "2"]) == EXIT_INPUT


def test_sweep_exit_3_when_every_point_fails(tmp_path, small_data, monkeypatch):
    import acvmlr.solver as solver

    real = solver.fit

    def stalled(dataset, hyper, tol_delta, max_iter, *a, **kw):
        return real(dataset, hyper, tol_delta, 1, *a, **kw)

    monkeypatch.setattr(solver, "fit", stalled)
    rep = tmp_path / "r.json"
    code = main(["sweep", str(small_data), "--out", str(rep), "--lambdas", "1e-3,1e-4"])
    assert code == EXIT_SOLVER
    assert all(r.status != "converged" for r in CvReport.load(rep).records)


def test_report_csv_round_trip(tmp_path, small_data):
    rep = tmp_path / "r.json"
    main(["sweep", str(small_data), "--out", str(rep), "--n-lambda", "6", "--decades", "2"])
    csv_path = tmp_path / "r.csv"
    assert main(["report", str(rep), "--format", "csv", "--out", str(csv_path)]) == EXIT_OK
    rows = parse_csv(csv_path.read_text())
    report = CvReport.load(rep)
    for row, rec in zip(rows, report.records):
        assert row["eps_acv"] == pytest.approx(rec.eps_acv, rel=1e-12)
        assert row["eps_saacv"] == pytest.approx(rec.eps_saacv, rel=1e-12)
    best = min((r for r in rows if r["status"] == "converged"), key=lambda r: r["eps_acv"])
    assert best["argmin_acv"] == 1 and sum(r["argmin_acv"] for r in rows) == 1


def test_report_table_to_stdout(tmp_path, small_data, capsys):
    rep = tmp_path / "r.json"
    main(["sweep", str(small_data), "--out", str(rep), "--n-lambda", "3", "--decades", "1"])
    capsys.readouterr()
    assert main(["report", str(rep)]) == EXIT_OK
    assert "argmin" in capsys.readouterr().out


@pytest.mark.parametrize("edit", ["version", "unknown", "empty"])
def test_report_rejects_bad_files(tmp_path, small_data, edit):
    rep = tmp_path / "r.json"
    main(["sweep", str(small_data), "--out", str(rep), "--n-lambda", "3", "--decades", "1"])
    d = json.loads(rep.read_text())
    if edit == "version":
        d["version"] = 99
    elif edit == "unknown":
        d["records"][0]["new_field"] = 1
    else:
        d["records"] = []
    rep.write_text(json.dumps(d))
    assert main(["report", str(rep)]) == EXIT_INPUT
