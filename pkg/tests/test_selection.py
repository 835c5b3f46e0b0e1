import numpy as np
import pytest

from conftest import small_skew_model
from skewfa.criteria import bic, entropy, icl
from skewfa.ecm import FitConfig
from skewfa.exceptions import DomainError
from skewfa.model import count_params, sample_mixture
from skewfa.selection import SelectionGrid, full_mixture_params, grid_cells, grid_search, parse_range


def test_bic_formula():
    assert bic(-500.0, 10, 100) == pytest.approx(1046.0517, abs=1e-4)
    assert bic(-3.0, 8, np.e) - bic(-3.0, 4, np.e) == pytest.approx(4.0)
    assert bic(-10.0, 5, 50) < bic(-11.0, 5, 50)
    with pytest.raises(ValueError):
        bic(0.0, 1, 0)


def test_icl_entropy_cases():
    hard = np.zeros((2, 10))
    hard[0, :6] = hard[1, 6:] = 1.0
    assert icl(123.0, hard) == 123.0
    uniform = np.full((2, 10), 0.5)
    assert icl(0.0, uniform) == pytest.approx(20 * np.log(2))
    assert icl(0.0, uniform) == pytest.approx(13.8629, abs=1e-4)
    rng = np.random.default_rng(0)
    z = rng.dirichlet(np.ones(3), 20).T
    assert entropy(z) >= 0 and icl(5.0, z) >= 5.0


def test_parse_range():
    assert parse_range("1:3") == (1, 2, 3)
    assert parse_range("2") == (2,)
    with pytest.raises(DomainError):
        parse_range("3:1")
    with pytest.raises(DomainError):
        parse_range("a:b")


def test_grid_respects_r_le_q_and_sorting():
    grid = SelectionGrid((3, 1, 2), (1, 2, 3), (1, 2), param_cap=None)
    cells = grid_cells(grid, 6, "cfustfa")
    keys = [c[:3] for c in cells]
    assert keys == sorted(keys)
    assert all(r <= q for _, q, r, _ in cells)
    assert len(cells) == 3 * 5


def test_auto_cap_matches_full_mixture_rule():
    grid = SelectionGrid((1, 2), (1, 2, 3), (1, 2))
    for g, q, r, m in grid_cells(grid, 6, "cfustfa"):
        assert m < full_mixture_params(6, r, "cfustfa", g)
    # q=3, r=1 ties the full-mixture count at p=6 and is dropped
    assert count_params((6, 3, 1), "cfustfa", 1) == full_mixture_params(6, 1, "cfustfa", 1)
    assert (1, 3, 1) not in [c[:3] for c in grid_cells(grid, 6, "cfustfa")]


def test_symmetric_family_ignores_r():
    cells = grid_cells(SelectionGrid((1,), (1, 2), (1, 2)), 5, "mfa")
    assert [c[:3] for c in cells] == [(1, 1, 0), (1, 2, 0)]


def test_empty_admissible_set():
    Y = np.random.default_rng(0).normal(size=(50, 4))
    with pytest.raises(DomainError, match="no admissible"):
        grid_search(Y, SelectionGrid((1,), (1,), (1,), param_cap=3), FitConfig(g=1, q=1))


def test_criterion_validation():
    with pytest.raises(DomainError):
        SelectionGrid((1,), (1,), criterion="aic")


@pytest.fixture(scope="module")
def small_data():
    return sample_mixture(small_skew_model(), 300, 3)


def test_single_cell_grid(small_data):
    Y, _ = small_data
    cfg = FitConfig(g=1, q=1, r=1, max_iter=60)
    best, table = grid_search(Y, SelectionGrid((2,), (1,), (1,)), cfg)
    assert len(table) == 1
    row = table[0]
    assert (row["g"], row["q"], row["r"]) == (2, 1, 1)
    assert row["bic"] == best.bic and row["loglik"] == best.loglik


def test_grid_is_reproducible(small_data):
    Y, _ = small_data
    cfg = FitConfig(g=1, q=1, r=1, max_iter=40, seed=2)
    grid = SelectionGrid((1, 2), (1,), (1,))
    _, t1 = grid_search(Y, grid, cfg)
    _, t2 = grid_search(Y, grid, cfg)
    assert t1 == t2
    assert [(r["g"], r["q"], r["r"]) for r in t1] == [(1, 1, 1), (2, 1, 1)]
