"""Grid search over (g, q, r) scored by BIC or ICL."""

import logging
from dataclasses import dataclass, replace

import numpy as np

from skewfa.criteria import bic, icl
from skewfa.exceptions import DomainError, FitAbortedError, SkewFAError
from skewfa.initialization import best_of_restarts
from skewfa.model import Family, count_params

log = logging.getLogger(__name__)

TABLE_COLUMNS = ("g", "q", "r", "m", "loglik", "bic", "icl", "converged")

__all__ = ["SelectionGrid", "grid_search", "grid_cells", "full_mixture_params", "parse_range", "bic", "icl"]


def parse_range(text):
    """Parse ``"a:b"`` (inclusive) or ``"a"`` into a tuple of ints."""
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi = (int(t) for t in text.split(":", 1))
        else:
            lo = hi = int(text)
    except ValueError:
        raise DomainError(f"cannot parse range {text!r}; expected 'a:b' or 'a'") from None
    if hi < lo:
        raise DomainError(f"empty range {text!r}")
    return tuple(range(lo, hi + 1))


@dataclass(frozen=True)
class SelectionGrid:
    """Candidate dimensions and the selection rule.

    ``param_cap="auto"`` keeps cells with fewer free parameters than the
    unconstrained g-component mixture of the same family and ``r``; an
    integer keeps cells with ``m <= param_cap``; ``None`` disables the cap.
    """

    g_range: tuple
    q_range: tuple
    r_range: tuple = (1,)
    criterion: str = "bic"
    param_cap: object = "auto"
    r_le_q: bool = True

    def __post_init__(self):
        for name in ("g_range", "q_range", "r_range"):
            val = tuple(int(v) for v in getattr(self, name))
            if not val:
                raise DomainError(f"{name} is empty")
            object.__setattr__(self, name, val)
        if self.criterion not in ("bic", "icl"):
            raise DomainError(f"criterion must be 'bic' or 'icl', got {self.criterion!r}")


def full_mixture_params(p, r, family, g):
    """Free parameters of the unconstrained g-component mixture (no factor structure)."""
    family = Family.parse(family)
    per = p + p * (p + 1) // 2
    if family.skewed:
        per += p * r
    if family.has_nu:
        per += 1
    return (g - 1) + g * per


def grid_cells(grid, p, family):
    """Admissible ``(g, q, r, m)`` cells sorted by ``(g, q, r)``."""
    family = Family.parse(family)
    r_values = grid.r_range if family.skewed else (0,)
    cells = []
    for g in sorted(set(grid.g_range)):
        for q in sorted(set(grid.q_range)):
            if q > p:
                continue
            for r in sorted(set(r_values)):
                if family.skewed and grid.r_le_q and r > q:
                    continue
                m = count_params((p, q, r), family, g)
                if grid.param_cap == "auto":
                    if m >= full_mixture_params(p, r, family, g):
                        continue
                elif grid.param_cap is not None and m > int(grid.param_cap):
                    continue
                cells.append((g, q, r, m))
    return cells


def grid_search(data, grid, base_config, on_cell=None):
    """Fit every admissible cell and pick the criterion minimiser.

    Returns
    -------
    best : FitReport
    table : list of dict
        One row per cell with keys :data:`TABLE_COLUMNS`; failed cells carry
        ``nan`` scores.
    """
    Y = np.asarray(getattr(data, "Y", data), dtype=float)
    n, p = Y.shape
    cells = grid_cells(grid, p, base_config.family)
    if not cells:
        raise DomainError("no admissible (g, q, r) cell: the grid is empty after the parameter cap")
    table, reports, causes = [], [], []
    for g, q, r, m in cells:
        cfg = replace(base_config, g=g, q=q, r=r, delta_mask=None)
        try:
            rep = best_of_restarts(Y, cfg)
        except (SkewFAError, np.linalg.LinAlgError) as exc:
            log.warning("cell g=%d q=%d r=%d failed: %s", g, q, r, exc)
            causes.append(f"g={g} q={q} r={r}: {exc}")
            table.append(dict(g=g, q=q, r=r, m=m, loglik=np.nan, bic=np.nan, icl=np.nan, converged=False))
            reports.append(None)
            continue
        row = dict(g=g, q=q, r=r, m=rep.n_params, loglik=rep.loglik, bic=rep.bic, icl=rep.icl, converged=rep.converged)
        table.append(row)
        reports.append(rep)
        if on_cell is not None:
            on_cell(row)
    scores = [row[grid.criterion] if rep is not None else np.inf for row, rep in zip(table, reports)]
    if not np.isfinite(scores).any():
        raise FitAbortedError("every grid cell failed: " + "; ".join(causes), causes)
    best = reports[int(np.argmin(scores))]
    return best, table
