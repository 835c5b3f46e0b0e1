import json

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import DATA
from skewfa import io as skio
from skewfa.cli import main
from skewfa.ecm import FitConfig, e_step, fit
from skewfa.metrics import ari

SEPARATED = str(DATA / "separated.csv")


@pytest.fixture
def runner():
    return CliRunner()


def parse_metrics(text):
    return {k: float(v) for k, v in (line.split("=") for line in text.split())}


def run(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


@pytest.fixture(scope="module")
def fitted(tmp_path_factory):
    out = tmp_path_factory.mktemp("fit") / "model.json"
    res = CliRunner().invoke(main, ["fit", "--data", SEPARATED, "--g", "2", "--q", "1", "--r", "1",
                                    "--seed", "3", "--max-iter", "400", "--out", str(out)])
    return res, out


def test_fit_writes_model_and_summary(fitted):
    res, out = fitted
    assert res.exit_code in (0, 3), res.output
    model, meta = skio.load_model(out)
    assert model.g == 2 and model.dims == (4, 1, 1)
    assert meta["seed"] == 3 and meta["iterations"] >= 1
    assert "loglik=" in res.stdout and "bic=" in res.stdout and "icl=" in res.stdout
    assert "aitken_gap=" in res.stderr


def test_fit_exit_code_matches_convergence(fitted):
    res, out = fitted
    _, meta = skio.load_model(out)
    assert res.exit_code == (0 if meta["converged"] else 3)


def test_fit_is_byte_identical(runner, tmp_path):
    args = ["fit", "--data", SEPARATED, "--g", "2", "--q", "1", "--r", "1", "--seed", "1", "--max-iter", "25"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(runner, *args, "--out", a)
    run(runner, "--threads", "3", *args, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_max_iter_exit_code(runner, tmp_path):
    res = run(runner, "fit", "--data", SEPARATED, "--g", "2", "--q", "1", "--r", "1", "--max-iter", "2", "--out", tmp_path / "m.json")
    assert res.exit_code == 3


def test_usage_errors(runner, tmp_path):
    res = runner.invoke(main, ["fit", "--data", SEPARATED, "--g", "0", "--q", "1", "--out", str(tmp_path / "m.json")])
    assert res.exit_code == 2
    res = runner.invoke(main, ["sample", "--model", str(DATA / "separated_model.json"), "--n", "0", "--out", str(tmp_path / "s.csv")])
    assert res.exit_code == 2


def test_malformed_csv(runner, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2,3\n4,x,6\n7,8,9\n")
    res = runner.invoke(main, ["fit", "--data", str(bad), "--g", "1", "--q", "1", "--out", str(tmp_path / "m.json")])
    assert res.exit_code == 1
    assert "row 2, column 2" in res.stderr


def test_mfa_family_matches_library(runner, tmp_path):
    out = tmp_path / "mfa.json"
    res = run(runner, "fit", "--data", SEPARATED, "--g", "2", "--q", "1", "--family", "mfa", "--tol", "1e-9", "--max-iter", "5000", "--out", out)
    assert res.exit_code == 0
    Y = skio.read_data(SEPARATED)
    rep = fit(Y, FitConfig(g=2, q=1, family="mfa", tol=1e-9, max_iter=5000))
    assert skio.load_model(out)[1]["loglik"] == pytest.approx(rep.loglik, abs=1e-4)


def test_select_single_cell(runner, tmp_path):
    table = tmp_path / "table.csv"
    res = run(runner, "select", "--data", SEPARATED, "--g", "2", "--q", "1", "--r", "1", "--max-iter", "30",
              "--out", tmp_path / "best.json", "--table", table)
    assert res.exit_code in (0, 3)
    lines = table.read_text().splitlines()
    assert lines[0] == "g,q,r,m,loglik,bic,icl,converged"
    assert len(lines) == 2


def test_select_empty_grid(runner, tmp_path):
    res = runner.invoke(main, ["select", "--data", SEPARATED, "--g", "1", "--q", "1", "--r", "1", "--param-cap", "2",
                               "--out", str(tmp_path / "b.json"), "--table", str(tmp_path / "t.csv")])
    assert res.exit_code == 1
    assert "no admissible" in res.stderr


def test_score_training_data(runner, tmp_path, fitted):
    _, model_path = fitted
    out = tmp_path / "scores.csv"
    run(runner, "score", "--model", model_path, "--data", SEPARATED, "--out", out)
    data, header = skio.read_csv(out)
    assert header == ["label", "post_1", "post_2", "score_1"]
    model, meta = skio.load_model(model_path)
    Y = skio.read_data(SEPARATED)
    stats = e_step(model, Y, meta["seed"])
    np.testing.assert_array_equal(data[:, 0], np.argmax(stats.z, axis=0) + 1)
    np.testing.assert_allclose(data[:, 1:3].sum(axis=1), 1.0, atol=1e-12)


def test_score_single_component(runner, tmp_path):
    m = tmp_path / "g1.json"
    run(runner, "fit", "--data", SEPARATED, "--g", "1", "--q", "1", "--family", "mfa", "--max-iter", "50", "--out", m)
    out = tmp_path / "s.csv"
    run(runner, "score", "--model", m, "--data", SEPARATED, "--out", out)
    data, _ = skio.read_csv(out)
    assert np.all(data[:, 1] == 1.0)


def test_score_dimension_mismatch(runner, tmp_path, fitted):
    _, model_path = fitted
    f = tmp_path / "d.csv"
    f.write_text("1,2\n3,4\n5,6\n")
    res = runner.invoke(main, ["score", "--model", str(model_path), "--data", str(f), "--out", str(tmp_path / "o.csv")])
    assert res.exit_code == 1


def test_sample_is_deterministic(runner, tmp_path):
    model = DATA / "separated_model.json"
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(runner, "sample", "--model", model, "--n", "50", "--seed", "4", "--out", a)
    run(runner, "sample", "--model", model, "--n", "50", "--seed", "4", "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_sample_then_fit_round_trip(runner, tmp_path):
    sample = tmp_path / "s.csv"
    run(runner, "sample", "--model", DATA / "separated_model.json", "--n", "400", "--seed", "9", "--labels", "--out", sample)
    m = tmp_path / "m.json"
    run(runner, "fit", "--data", sample, "--g", "2", "--q", "1", "--r", "1", "--max-iter", "100", "--out", m)
    scores = tmp_path / "sc.csv"
    run(runner, "score", "--model", m, "--data", sample, "--out", scores)
    res = run(runner, "metrics", "--pred", scores, "--truth", sample)
    values = parse_metrics(res.stdout)
    assert values["ari"] >= 0.9
    assert ari(skio.read_labels(scores), skio.read_labels(sample)) == pytest.approx(values["ari"])


def test_metrics_hand_fixture(runner, tmp_path):
    p, t = tmp_path / "p.csv", tmp_path / "t.csv"
    p.write_text("1\n1\n2\n2\n")
    t.write_text("1\n2\n1\n2\n")
    res = run(runner, "metrics", "--pred", p, "--truth", t)
    assert parse_metrics(res.stdout) == pytest.approx({"ccr": 0.5, "ari": -0.5, "ami": -0.5}, abs=1e-12)
    res = run(runner, "metrics", "--pred", p, "--truth", p)
    assert parse_metrics(res.stdout) == {"ccr": 1.0, "ari": 1.0, "ami": 1.0}


def test_metrics_errors(runner, tmp_path):
    p, t, e = tmp_path / "p.csv", tmp_path / "t.csv", tmp_path / "e.csv"
    p.write_text("1\n1\n2\n")
    t.write_text("1\n2\n")
    e.write_text("")
    assert runner.invoke(main, ["metrics", "--pred", str(p), "--truth", str(t)]).exit_code == 1
    assert runner.invoke(main, ["metrics", "--pred", str(e), "--truth", str(e)]).exit_code == 1


def test_model_file_schema(fitted):
    _, out = fitted
    doc = json.loads(out.read_text())
    assert doc["version"] == "skewfa-v1"
    assert set(doc["fit"]) == {"loglik", "iterations", "converged", "bic", "icl", "seed"}
    assert set(doc["components"][0]) == {"pi", "mu", "B", "Delta", "d", "nu"}
