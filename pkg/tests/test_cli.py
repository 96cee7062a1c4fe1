import csv
import io
import json
import math

import numpy as np
import pytest
from conftest import simulate, uniform_design

from betaresid.cli import fmt, main, parse_dataset
from betaresid.errors import InputError
from betaresid.fit import fit_mle
from betaresid.residuals import compute_residuals


def _write_dataset(path, d, names=("x1", "x2")):
    lines = [",".join(("y",) + tuple(names))]
    for i in range(d.n):
        lines.append(",".join(fmt(v) for v in (d.y[i], *d.X[i, 1:])))
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def data_file(tmp_path_factory):
    X = uniform_design(40, seed=17)
    d = simulate(X, (-0.3, 0.3, 0.7), 10.0, seed=17)
    return _write_dataset(tmp_path_factory.mktemp("data") / "data.csv", d), d


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_parse_small_file():
    d = parse_dataset("y,x\n0.2,1\n0.5,2\n0.8,3\n")
    assert d.n == 3 and d.k == 2
    assert np.array_equal(d.X[:, 0], np.ones(3))
    assert np.array_equal(d.y, [0.2, 0.5, 0.8])


def test_parse_response_column_anywhere():
    d = parse_dataset("x,share\n1,0.2\n2,0.5\n4,0.6\n", response="share")
    assert np.array_equal(d.X[:, 1], [1, 2, 4])


def test_parse_boundary_response_cites_row():
    with pytest.raises(InputError, match="row 2"):
        parse_dataset("y,x\n0.2,1\n1.0,2\n0.8,3\n")


@pytest.mark.parametrize("text,pattern", [
    ("0.2,1\n0.5,2\n0.8,3\n", "header"),
    ("", "empty"),
    ("y,x\n0.2,a\n0.5,2\n0.8,3\n", "row 1"),
    ("y,x\n0.2,1\n0.5\n0.8,3\n", "row 2"),
    ("z,x\n0.2,1\n0.5,2\n0.8,3\n", "y"),
    ("y,x\n", "no data"),
    ("y,x\n0.2,1\n", "more observations"),
])
def test_parse_errors(text, pattern):
    with pytest.raises(InputError, match=pattern):
        parse_dataset(text)


def test_fit_report(tmp_path, data_file, capsys):
    path, d = data_file
    assert main(["fit", "--input", str(path), "--output", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "coefficients.csv")
    assert rows[0] == ["term", "estimate", "std_error", "exp_estimate"]
    assert len(rows) == 1 + 3
    est = np.array([float(r[1]) for r in rows[1:]])
    m = fit_mle(d)
    assert np.allclose(est, m.beta_hat, rtol=1e-12, atol=1e-12)
    summary = dict(_read_csv(tmp_path / "fit_summary.csv")[1:])
    assert summary["converged"] == "True"
    assert float(summary["phi"]) == pytest.approx(m.phi_hat, rel=1e-12)
    assert "loglik" in summary and "pseudo_r2" in summary
    assert "phi" in capsys.readouterr().out


def test_fit_intercept_only_exp_column(tmp_path):
    y = np.random.default_rng(3).uniform(0.05, 0.95, 30)
    p = tmp_path / "u.csv"
    p.write_text("y\n" + "\n".join(fmt(v) for v in y) + "\n")
    out = tmp_path / "out"
    assert main(["fit", "--input", str(p), "--output", str(out)]) == 0
    rows = _read_csv(out / "coefficients.csv")
    assert len(rows) == 2
    assert float(rows[1][3]) == pytest.approx(math.exp(float(rows[1][1])), rel=1e-14)


def test_fit_json(tmp_path, data_file):
    path, _ = data_file
    assert main(["fit", "--input", str(path), "--output", str(tmp_path), "--format", "json"]) == 0
    obj = json.loads((tmp_path / "fit.json").read_text())
    assert len(obj["coefficients"]) == 3 and obj["converged"] is True


def test_rank_deficient_exits_1(tmp_path, capsys):
    p = tmp_path / "rd.csv"
    p.write_text("y,a,b\n0.2,1,2\n0.4,2,4\n0.5,3,6\n0.7,4,8\n0.6,5,10\n")
    assert main(["fit", "--input", str(p), "--output", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and json.loads(err[0])["exit_code"] == 1


@pytest.mark.parametrize("argv,code", [
    (["fit"], 1),
    (["fit", "--input", "/nonexistent/file.csv"], 1),
    (["bogus"], 1),
    (["simulate", "--reps", "1"], 1),
    (["simulate", "--kinds", "pearson"], 1),
    (["simulate", "--threads", "0"], 1),
    (["simulate", "--phi", "-2", "--reps", "10"], 1),
])
def test_error_paths_single_json_line(tmp_path, capsys, argv, code):
    assert main(argv + ["--output", str(tmp_path)]) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    obj = json.loads(err[0])
    assert obj["exit_code"] == code and obj["message"]


def test_envelope_zero_sims_exits_1(tmp_path, data_file, capsys):
    path, _ = data_file
    assert main(["envelope", "--input", str(path), "--output", str(tmp_path), "--sims", "0"]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "input"


def test_residuals_round_trip(tmp_path, data_file):
    path, _ = data_file
    assert main(["residuals", "--input", str(path), "--output", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "residuals.csv")
    assert rows[0] == ["i", "y", "mu_hat", "eta_hat", "swr1", "swr2", "quantile"]
    table = np.array([[float(v) for v in r] for r in rows[1:]])
    # Re-parse the emitted responses with the original covariates and recompute.
    d = parse_dataset(path.read_text())
    d2 = parse_dataset("y,x1,x2\n" + "\n".join(
        ",".join(fmt(v) for v in (table[i, 1], *d.X[i, 1:])) for i in range(d.n)))
    m = fit_mle(d2)
    assert np.allclose(table[:, 2], m.mu_hat, rtol=0, atol=1e-12)
    assert np.allclose(table[:, 3], m.eta_hat, rtol=0, atol=1e-12)
    for j, kind in enumerate(("swr1", "swr2", "quantile")):
        assert np.allclose(table[:, 4 + j], compute_residuals(m, d2, kind).values,
                           rtol=0, atol=1e-12)


def test_residuals_subset_json(tmp_path, data_file):
    path, _ = data_file
    assert main(["residuals", "--input", str(path), "--output", str(tmp_path),
                 "--kinds", "quantile", "--format", "json"]) == 0
    obj = json.loads((tmp_path / "residuals.json").read_text())
    text = json.dumps(obj)
    assert "quantile" in text and "swr1" not in text


def test_envelope_outputs(tmp_path, data_file):
    path, d = data_file
    assert main(["envelope", "--input", str(path), "--output", str(tmp_path),
                 "--sims", "19", "--kinds", "swr1,quantile"]) == 0
    for kind in ("swr1", "quantile"):
        rows = _read_csv(tmp_path / f"envelope_{kind}.csv")
        assert len(rows) == d.n + 1
        svg = (tmp_path / f"envelope_{kind}.svg").read_text()
        assert svg.startswith("<svg") and svg.count("<polyline") >= 2
        assert len(_read_csv(tmp_path / f"predictor_{kind}.csv")) == d.n + 1
    assert not (tmp_path / "envelope_swr2.csv").exists()


def test_csv_dialect(tmp_path, data_file):
    path, _ = data_file
    main(["residuals", "--input", str(path), "--output", str(tmp_path)])
    raw = (tmp_path / "residuals.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    raw.decode("utf-8")


def test_fmt_round_trips():
    for v in (0.1, 1 / 3, 1e-300, -2.5e17, math.pi):
        assert float(fmt(v)) == v
    assert fmt(float("nan")) == "nan"


def test_simulate_outputs(tmp_path):
    assert main(["simulate", "--scenario", "II", "--reps", "60", "--output", str(tmp_path)]) == 0
    per_obs = _read_csv(tmp_path / "simulate_per_observation.csv")
    assert len(per_obs) == 1 + 16 + 2
    meta = json.loads((tmp_path / "simulate_metadata.json").read_text())
    assert meta["scenario"] == "II" and meta["reps"] == 60 and meta["seed"] == 271828


@pytest.mark.slow
def test_simulate_ad_summary_layout(tmp_path):
    assert main(["simulate", "--scenario", "I", "--phi", "10", "--n", "16",
                 "--reps", "5000", "--output", str(tmp_path)]) == 0
    rows = _read_csv(tmp_path / "simulate_ad_summary.csv")
    assert rows[0] == ["kind", "mean", "sd", "min", "q1", "q2", "q3", "max"]
    assert [r[0] for r in rows[1:]] == ["swr1", "swr2", "quantile"]
    for r in rows[1:]:
        v = [float(x) for x in r[1:]]
        assert v[2] <= v[3] <= v[4] <= v[5] <= v[6]


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_outputs_byte_identical(tmp_path, data_file):
    path, _ = data_file
    snaps = []
    for run, threads in enumerate(("1", "1", "3")):
        out = tmp_path / f"run{run}"
        assert main(["envelope", "--input", str(path), "--output", str(out),
                     "--sims", "40", "--threads", threads]) == 0
        assert main(["simulate", "--scenario", "IV", "--reps", "300", "--output", str(out),
                     "--threads", threads]) == 0
        snaps.append(_snapshot(out))
    assert snaps[0] == snaps[1] == snaps[2]
    assert len(snaps[0]) >= 10
