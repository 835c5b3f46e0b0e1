import json

import numpy as np
import pytest

from conftest import recovery_truth, toy_model
from skewfa import io as skio
from skewfa.exceptions import DomainError
from skewfa.model import model_logpdf, sample_mixture


def test_header_detection(tmp_path):
    a = tmp_path / "a.csv"
    a.write_text("1,2\n3,4\n")
    data, header = skio.read_csv(a)
    assert header is None and data.shape == (2, 2)
    b = tmp_path / "b.csv"
    b.write_text("x,2\n3,4\n")
    data, header = skio.read_csv(b)
    assert header == ["x", "2"] and data.tolist() == [[3.0, 4.0]]


def test_non_numeric_cell_reports_coordinates(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("x,y\n1,2\n3,oops\n")
    with pytest.raises(skio.CSVFormatError, match="row 3, column 2"):
        skio.read_csv(f)


def test_ragged_rows(tmp_path):
    f = tmp_path / "ragged.csv"
    f.write_text("1,2,3\n4,5\n")
    with pytest.raises(skio.CSVFormatError, match="row 2"):
        skio.read_csv(f)


def test_empty_file(tmp_path):
    f = tmp_path / "empty.csv"
    f.write_text("")
    with pytest.raises(skio.CSVFormatError, match="empty"):
        skio.read_csv(f)


def test_missing_values_rejected(tmp_path):
    f = tmp_path / "nan.csv"
    f.write_text("1,nan\n2,3\n")
    with pytest.raises(skio.CSVFormatError, match="non-finite"):
        skio.read_data(f)


def test_csv_round_trip_is_idempotent(tmp_path):
    Y, lab = sample_mixture(toy_model(), 200, 1)
    f = tmp_path / "s.csv"
    skio.write_csv(f, ([*y, int(l)] for y, l in zip(Y, lab)), header=["y1", "y2", "label"])
    back = skio.read_data(f)
    np.testing.assert_array_equal(back, Y)
    np.testing.assert_array_equal(skio.read_labels(f), lab)
    g = tmp_path / "s2.csv"
    skio.write_csv(g, back, header=["y1", "y2"])
    assert np.array_equal(skio.read_data(g), Y)


def test_model_round_trip_is_lossless(tmp_path):
    m = recovery_truth()
    f = tmp_path / "m.json"
    skio.save_model(f, m, seed=7)
    back, meta = skio.load_model(f)
    assert meta == {"seed": 7}
    for a, b in zip(m.components, back.components):
        assert a.pi == b.pi and a.nu == b.nu
        for name in ("mu", "B", "Delta", "d"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    Y, _ = sample_mixture(m, 50, 2)
    np.testing.assert_array_equal(model_logpdf(back, Y), model_logpdf(m, Y))
    assert skio.dumps_model(back, seed=7) == f.read_text()


def test_infinite_nu_is_null(tmp_path):
    from dataclasses import replace

    m = toy_model()
    comps = tuple(replace(c, nu=np.inf) for c in m.components)
    from skewfa.model import MixtureModel

    mn = MixtureModel(comps, "cfusnfa")
    doc = json.loads(skio.dumps_model(mn))
    assert doc["components"][0]["nu"] is None
    assert np.isinf(skio.model_from_dict(doc)[0].components[0].nu)


def test_unknown_version_rejected():
    doc = skio.model_to_dict(toy_model())
    doc["version"] = "skewfa-v0"
    with pytest.raises(DomainError, match="version"):
        skio.model_from_dict(doc)


def test_malformed_model_file(tmp_path):
    f = tmp_path / "m.json"
    f.write_text("{not json")
    with pytest.raises(DomainError):
        skio.load_model(f)
    doc = skio.model_to_dict(toy_model())
    del doc["components"][0]["B"]
    with pytest.raises(DomainError, match="malformed"):
        skio.model_from_dict(doc)
