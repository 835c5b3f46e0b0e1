"""CSV ingestion/emission and the versioned JSON model file."""

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from skewfa.exceptions import DomainError
from skewfa.model import ComponentParams, Family, MixtureModel

MODEL_VERSION = "skewfa-v1"


class CSVFormatError(DomainError):
    """Malformed CSV input; the message carries 1-based row/column coordinates."""


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv(path):
    """Read a numeric CSV.

    The first row is a header iff any of its cells is non-numeric.

    Returns
    -------
    data : ndarray, shape (n, k)
    header : list of str or None
    """
    text = Path(path).read_text(encoding="utf-8-sig")
    rows = [row for row in csv.reader(io.StringIO(text)) if row and any(c.strip() for c in row)]
    if not rows:
        raise CSVFormatError(f"{path}: file is empty")
    header = None
    start = 0
    if not all(_is_number(c.strip()) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        start = 1
    if start >= len(rows):
        raise CSVFormatError(f"{path}: no data rows after the header")
    width = len(rows[0])
    out = np.empty((len(rows) - start, width))
    for i in range(start, len(rows)):
        row = rows[i]
        if len(row) != width:
            raise CSVFormatError(f"{path}: row {i + 1} has {len(row)} columns, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i - start, j] = float(cell.strip())
            except ValueError:
                raise CSVFormatError(f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {j + 1}") from None
    return out, header


def read_data(path):
    """Read a data matrix; missing or non-finite values are rejected.

    A header column named ``label`` (as written by ``skewfa sample --labels``)
    is dropped.
    """
    Y, header = read_csv(path)
    if header is not None and "label" in header:
        Y = np.delete(Y, header.index("label"), axis=1)
    bad = np.argwhere(~np.isfinite(Y))
    if bad.size:
        i, j = bad[0]
        raise CSVFormatError(f"{path}: non-finite value at data row {i + 1}, column {j + 1}")
    return Y


def read_labels(path):
    """Read a label vector: the ``label`` column if named, else the first column."""
    data, header = read_csv(path)
    col = 0
    if header is not None and "label" in header:
        col = header.index("label")
    return data[:, col]


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if x.is_integer() and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def write_csv(path, rows, header=None):
    """Write rows of numbers (or booleans) with shortest round-trip formatting."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header is not None:
            w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _encode_float(x):
    x = float(x)
    return None if math.isinf(x) else x


def model_to_dict(model, report=None, seed=None):
    """JSON-ready dict of a model plus optional fit metadata."""
    comps = []
    for c in model.components:
        comps.append(
            {
                "pi": c.pi,
                "mu": c.mu.tolist(),
                "B": c.B.reshape(-1).tolist(),
                "Delta": c.Delta.reshape(-1).tolist(),
                "d": c.d.tolist(),
                "nu": _encode_float(c.nu),
            }
        )
    meta = None
    if report is not None:
        meta = {
            "loglik": report.loglik,
            "iterations": int(report.iterations),
            "converged": bool(report.converged),
            "bic": float(report.bic),
            "icl": float(report.icl),
            "seed": int(report.seed if seed is None else seed),
        }
    elif seed is not None:
        meta = {"seed": int(seed)}
    p, q, r = model.dims
    return {
        "version": MODEL_VERSION,
        "dims": {"p": p, "q": q, "r": r, "g": model.g},
        "family": model.family.value,
        "components": comps,
        "fit": meta,
    }


def model_from_dict(doc):
    """Inverse of :func:`model_to_dict`; returns ``(model, fit_metadata)``."""
    if not isinstance(doc, dict):
        raise DomainError("model file must hold a JSON object")
    version = doc.get("version")
    if version != MODEL_VERSION:
        raise DomainError(f"unsupported model file version {version!r}; expected {MODEL_VERSION!r}")
    try:
        dims = doc["dims"]
        p, q, r, g = (int(dims[k]) for k in ("p", "q", "r", "g"))
        family = Family.parse(doc["family"])
        comps = []
        for rec in doc["components"]:
            nu = rec.get("nu")
            comps.append(
                ComponentParams(
                    pi=float(rec["pi"]),
                    mu=np.array(rec["mu"], dtype=float),
                    B=np.array(rec["B"], dtype=float).reshape(p, q),
                    Delta=np.array(rec["Delta"], dtype=float).reshape(q, r),
                    d=np.array(rec["d"], dtype=float),
                    nu=np.inf if nu is None else float(nu),
                )
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise DomainError(f"malformed model file: {exc}") from None
    if len(comps) != g:
        raise DomainError(f"model file declares g={g} but has {len(comps)} components")
    model = MixtureModel(tuple(comps), family, (p, q, r))
    return model, doc.get("fit")


def dumps_model(model, report=None, seed=None):
    # json writes floats with repr, the shortest string that round-trips
    return json.dumps(model_to_dict(model, report, seed), indent=2, allow_nan=False) + "\n"


def save_model(path, model, report=None, seed=None):
    """Write a model file; identical inputs give byte-identical output."""
    Path(path).write_text(dumps_model(model, report, seed), encoding="utf-8")


def load_model(path):
    """Read a model file; returns ``(model, fit_metadata)``."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: not valid JSON ({exc})") from None
    return model_from_dict(doc)
