"""Orthant probabilities and truncated moments of the multivariate t.

Everything here is vectorised over a batch of points that share one scale
matrix, which is the shape the E-step needs.  ``df = inf`` selects the
normal limit throughout.

Notation: ``Z ~ t_r(0, S, df)`` and the region is ``Z >= L`` (componentwise
lower bounds, one row of ``L`` per point).  Unnormalised moments
``E[Z 1{Z >= L}]`` and ``E[Z Z^T 1{Z >= L}]`` are returned; divide by the
probability to condition.
"""

from functools import lru_cache

import numpy as np
from scipy import stats
from scipy.special import gammaln, log_ndtr, ndtr, ndtri, ndtri_exp, stdtr
from scipy.stats import qmc

from skewfa import _backend

DEFAULT_DENSITY = 3.5
_LOG_CUT = 36.0
# beyond this the t and normal orthant probabilities differ by O(1/df)
_DF_NORMAL = 1e8
_QMC_SEED = 20240531
_QMC_SHIFTS = 8


def _quantise(h_min):
    # round downwards onto a coarse log grid so the rule cache gets hits
    if h_min >= -0.1:
        return 0.0
    return -float(np.exp(np.ceil(np.log(-h_min) * 8.0) / 8.0))


@lru_cache(maxsize=64)
def _legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _chi_logpdf_log(y, df):
    # log density of log S for S ~ chi(df)
    return df * y - 0.5 * np.exp(2.0 * y) - (0.5 * df - 1.0) * np.log(2.0) - gammaln(0.5 * df)


@lru_cache(maxsize=512)
def _chi_rule_cached(df, h_q, density):
    top = np.log(stats.chi.isf(1e-20, df + 2.0))
    # the chi peak narrows like 1/sqrt(df) in log s, so resolve it separately
    peak = np.linspace(np.log(max(stats.chi.ppf(1e-20, df), 1e-300)), top, 600)
    y = np.union1d(np.linspace(-20.0, top, 1200), peak)
    base = _chi_logpdf_log(y, df)
    lo, hi = np.inf, -np.inf
    for g in (base, base + 2.0 * y, base + log_ndtr(np.exp(y) * h_q)):
        keep = y[g > g.max() - _LOG_CUT]
        lo, hi = min(lo, keep[0]), max(hi, keep[-1])
    n = int(np.clip(np.ceil((hi - lo) * density * np.sqrt(df + 2.0)), 32, 1024))
    x, gw = _legendre(n)
    half = 0.5 * (hi - lo)
    y = lo + half * (x + 1.0)
    s = np.exp(y)
    logw = _chi_logpdf_log(y, df)
    w = gw * np.exp(logw - logw.max())
    w /= w.sum()
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def chi_rule(df, h_min=0.0, density=DEFAULT_DENSITY):
    """Quadrature rule ``(s, w)`` for expectations over ``S ~ chi_df``.

    Gauss-Legendre in ``log s`` over the range where either ``chi_df``, its
    ``s**2``-tilted version, or ``chi_df(s) Phi(s h_min)`` is non-negligible.
    ``h_min`` is the most negative argument the rule will multiply; the node
    count grows with the range and with ``sqrt(df)``.  Weights are normalised
    so constants integrate exactly.
    """
    return _chi_rule_cached(float(df), _quantise(float(h_min)), float(density))


def _standardise(S):
    sd = np.sqrt(np.diag(S))
    return sd, S / np.outer(sd, sd)


def tcdf(U, S, df, density=DEFAULT_DENSITY):
    """``P(T <= U_j)`` for ``T ~ t_r(0, S, df)``, one value per row of ``U``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n, r = U.shape
    if r == 0:
        return np.ones(n)
    if df >= _DF_NORMAL:
        df = np.inf
    sd, R = _standardise(S)
    H = U / sd
    if r == 1:
        return ndtr(H[:, 0]) if np.isinf(df) else stdtr(df, H[:, 0])
    if r <= 3:
        if np.isinf(df):
            return _backend.mixture_sums(H, np.ones(1), np.ones((1, 1)), R)[:, 0]
        Hs = H / np.sqrt(df)
        h_min = float(np.min(np.where(np.isfinite(Hs), Hs, 0.0), initial=0.0))
        s, w = chi_rule(df, h_min, density)
        return _backend.mixture_sums(Hs, s, w[:, None], R)[:, 0]
    return qmc_cdf(H, R, df)


def tcdf_adaptive(u, S, df, rel_tol=1e-6, max_density=32.0):
    """CDF with node doubling until successive rules agree (``r`` in {2, 3})."""
    u = np.atleast_2d(u)
    density = 1.0
    prev = tcdf(u, S, df, density)
    cur = prev
    while density < max_density:
        density *= 2.0
        cur = tcdf(u, S, df, density)
        if np.all(np.abs(cur - prev) <= rel_tol * np.abs(cur)):
            return cur
        prev = cur
    return cur


def _sov_estimate(H, C, df, pts):
    # separation-of-variables integrand for P(X <= h), X ~ N(0, C C^T) or t
    m, r = H.shape
    N = pts.shape[0]
    if np.isinf(df):
        scale = np.ones(N)
        u = pts
    else:
        scale = stats.chi.ppf(pts[:, 0], df) / np.sqrt(df)
        u = pts[:, 1:]
    out = np.empty(m)
    for j in range(m):
        b = H[j][None, :] * scale[:, None]
        y = np.zeros((N, r))
        e = ndtr(b[:, 0] / C[0, 0])
        f = e.copy()
        for i in range(1, r):
            y[:, i - 1] = ndtri(np.clip(u[:, i - 1] * e, 1e-300, 1.0 - 1e-16))
            e = ndtr((b[:, i] - y[:, :i] @ C[i, :i]) / C[i, i])
            f *= e
        out[j] = f.mean()
    return out


def qmc_cdf(H, R, df, rel_tol=1e-6, min_log2=10, max_log2=16):
    """Randomised Sobol estimate of ``P(X <= H_j)`` with correlation ``R``.

    Fixed internal seed, so results are reproducible.
    """
    H = np.atleast_2d(H)
    r = H.shape[1]
    C = np.linalg.cholesky(R)
    dim = r - 1 + (0 if np.isinf(df) else 1)
    dim = max(dim, 1)
    m = min_log2
    while True:
        est = []
        for k in range(_QMC_SHIFTS):
            pts = qmc.Sobol(dim, scramble=True, seed=_QMC_SEED + k).random_base2(m)
            est.append(_sov_estimate(H, C, df, pts))
        est = np.array(est)
        mean = est.mean(axis=0)
        se = est.std(axis=0, ddof=1) / np.sqrt(_QMC_SHIFTS)
        if m >= max_log2 or np.all(se <= rel_tol * np.maximum(mean, 1e-300)):
            return np.clip(mean, 0.0, 1.0)
        m += 1


def _t1_pdf(x, s2, df):
    z2 = x * x / s2
    if np.isinf(df):
        return np.exp(-0.5 * z2 - 0.5 * np.log(2.0 * np.pi * s2))
    logc = gammaln(0.5 * (df + 1.0)) - gammaln(0.5 * df) - 0.5 * np.log(df * np.pi * s2)
    return np.exp(logc - 0.5 * (df + 1.0) * np.log1p(z2 / df))


def _conditional_pieces(L, S, df, k):
    """Quantities for conditioning the k-th coordinate at its lower bound."""
    r = S.shape[0]
    lk = L[:, k]
    skk = S[k, k]
    pdf = _t1_pdf(lk, skk, df)
    fac = np.ones_like(lk) if np.isinf(df) else (df + lk * lk / skk) / (df - 1.0)
    idx = [j for j in range(r) if j != k]
    if not idx:
        return pdf, fac, None, None, None, np.ones_like(lk)
    s_ok = S[idx, k]
    Sc = S[np.ix_(idx, idx)] - np.outer(s_ok, s_ok) / skk
    mk = np.outer(lk / skk, s_ok)
    Lt = (L[:, idx] - mk) / np.sqrt(fac)[:, None]
    Pk = tcdf(-Lt, Sc, df - 1.0)
    return pdf, fac, idx, Sc, mk, Pk


def orthant_first(L, S, df, P=None):
    """``(P(Z >= L), E[Z 1{Z >= L}])`` for ``Z ~ t_r(0, S, df)``."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n, r = L.shape
    if P is None:
        P = tcdf(-L, S, df)
    xi = np.empty((n, r))
    for k in range(r):
        pdf, fac, _, _, _, Pk = _conditional_pieces(L, S, df, k)
        xi[:, k] = pdf * fac * Pk
    return P, xi @ S


def orthant_second(L, S, df, P=None, P_star=None):
    """First and second unnormalised moments of ``Z`` on ``{Z >= L}``.

    Returns ``(P, m1, M)`` with ``P = P(Z >= L)``, ``m1 = E[Z 1]`` and
    ``M = E[Z Z^T 1]``.  ``P_star`` is the orthant probability under
    ``t_r(0, df S / (df - 2), df - 2)``; both may be supplied when the caller
    already has them.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n, r = L.shape
    if not np.isinf(df) and df <= 2.0:
        raise ValueError(f"second moment requires df > 2, got {df}")
    if P is None:
        P = tcdf(-L, S, df)
    if P_star is None:
        if np.isinf(df):
            P_star = P
        else:
            P_star = tcdf(-L * np.sqrt((df - 2.0) / df), S, df - 2.0)
    coef = 1.0 if np.isinf(df) else df / (df - 2.0)
    xi = np.empty((n, r))
    Ht = np.zeros((n, r, r))
    for k in range(r):
        pdf, fac, idx, Sc, mk, Pk = _conditional_pieces(L, S, df, k)
        xi[:, k] = pdf * fac * Pk
        Ht[:, k, k] = L[:, k] * xi[:, k]
        if idx:
            Lt = (L[:, idx] - mk) / np.sqrt(fac)[:, None]
            _, m1p = orthant_first(Lt, Sc, df - 1.0, P=Pk)
            Ht[:, k, idx] = (pdf * fac)[:, None] * (mk * Pk[:, None] + np.sqrt(fac)[:, None] * m1p)
    m1 = xi @ S
    M = coef * P_star[:, None, None] * S[None, :, :] + np.einsum("ij,njk->nik", S, Ht)
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    return P, m1, M


@lru_cache(maxsize=16)
def _sobol_points(dim, seed, n_draws):
    pts = np.clip(qmc.Sobol(dim, scramble=True, seed=seed).random(n_draws), 1e-12, 1.0 - 1e-12)
    pts.setflags(write=False)
    return pts


def truncated_conditional_mc(c, Lam, nu, p, d, seed, n_draws=4096, moments=True):
    """Self-normalised QMC estimates for one point whose CDF factor underflows.

    Latent model: ``tau | y ~ Gamma((nu + p)/2, rate=(nu + d)/2)`` and
    ``u | y, tau ~ N(c, Lam / tau)`` restricted to ``u >= 0``.  Each draw is
    weighted by its sequential truncation probability, accumulated in log
    space.  Returns ``(log_prob, w, elog_tau, E[tau u], E[tau u u^T])``;
    ``log_prob`` estimates the log of ``P(u >= 0 | y)``.  With
    ``moments=False`` only ``log_prob`` is computed and the rest are ``None``.
    """
    r = c.size
    C = np.linalg.cholesky(Lam)
    pts = _sobol_points(r + 1, seed, n_draws)
    if np.isinf(nu):
        tau = np.ones(n_draws)
    else:
        tau = stats.gamma.ppf(pts[:, 0], 0.5 * (nu + p), scale=2.0 / (nu + d))
    sig = 1.0 / np.sqrt(tau)
    # u = c + sig * C x with x standard normal; truncation u >= 0 handled row by row
    x = np.zeros((n_draws, r))
    logw = np.zeros(n_draws)
    for i in range(r):
        mean_i = c[i] + sig * (x[:, :i] @ C[i, :i])
        lower = -mean_i / (sig * C[i, i])
        tail = log_ndtr(-lower)
        logw += tail
        # upper-tail inversion stays accurate far beyond the bound
        x[:, i] = -ndtri_exp(np.log1p(-pts[:, i + 1]) + tail)
    lmax = logw.max()
    wt = np.exp(logw - lmax)
    tot = wt.sum()
    log_prob = lmax + np.log(tot / n_draws)
    if not moments:
        return log_prob, None, None, None, None
    wt /= tot
    u = c[None, :] + sig[:, None] * (x @ C.T)
    w = wt @ tau
    elog = wt @ np.log(tau)
    e1 = (wt * tau) @ u
    e2 = np.einsum("m,mi,mj->ij", wt * tau, u, u)
    return log_prob, w, elog, e1, e2
