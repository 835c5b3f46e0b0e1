"""Normal, t, CFUSN and CFUST densities, CDFs, truncated moments and samplers.

The canonical fundamental skew-t (CFUST) distribution with location ``mu``,
scale ``Sigma``, p-by-r skewness matrix ``Delta`` and degrees of freedom
``nu`` has density::

    2**r * t_p(y; mu, Omega, nu) * T_r(c * sqrt((nu + p) / (nu + d)); 0, Lambda, nu + p)

with ``Omega = Sigma + Delta Delta^T``, ``Lambda = I - Delta^T Omega^-1 Delta``,
``c = Delta^T Omega^-1 (y - mu)`` and ``d`` the Mahalanobis form of ``y - mu``
under ``Omega``.  ``nu = inf`` gives the skew-normal (CFUSN) member.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats
from scipy.special import gammaln, log_ndtr

from skewfa import _orthant
from skewfa.exceptions import DomainError, FactorizationError, UnderflowError

LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class CFUSTParams:
    """Parameters of a CFUST distribution.

    Attributes
    ----------
    mu : ndarray, shape (p,)
    Sigma : ndarray, shape (p, p)
        Symmetric positive definite scale matrix.
    Delta : ndarray, shape (p, r)
        Skewness matrix; ``r = 0`` gives the symmetric t.
    nu : float
        Degrees of freedom, ``inf`` for the skew-normal member.
    """

    mu: np.ndarray
    Sigma: np.ndarray
    Delta: np.ndarray
    nu: float = np.inf

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        p = mu.size
        Sigma = np.asarray(self.Sigma, dtype=float).reshape(p, p)
        Delta = np.asarray(self.Delta, dtype=float).reshape(p, -1)
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "Delta", Delta)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def p(self):
        return self.mu.size

    @property
    def r(self):
        return self.Delta.shape[1]

    @property
    def Omega(self):
        return self.Sigma + self.Delta @ self.Delta.T

    @property
    def Lambda(self):
        return skew_geometry(self.Sigma, self.Delta)[1]


@dataclass(frozen=True)
class TruncTMoments:
    """First and second moments of a truncated multivariate t vector."""

    first: np.ndarray
    second: np.ndarray
    prob: float

    @property
    def cov(self):
        return self.second - np.outer(self.first, self.first)


def cholesky(A, name="matrix"):
    """Lower Cholesky factor, raising :class:`FactorizationError` on failure."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or not np.all(np.isfinite(A)):
        raise FactorizationError(f"{name} is not a finite square matrix")
    try:
        return linalg.cholesky(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise FactorizationError(f"{name} is not symmetric positive definite") from exc


def _as_rows(x, p):
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != p:
        raise DomainError(f"expected {p} columns, got {X.shape[1]}")
    return X, single


def _maha(X, mu, L):
    Z = linalg.solve_triangular(L, (X - mu).T, lower=True, check_finite=False)
    return np.sum(Z * Z, axis=0)


def _logdet(L):
    return 2.0 * np.sum(np.log(np.diag(L)))


def _t_log_kernel(d, logdet, p, nu):
    if np.isinf(nu):
        return -0.5 * (p * LOG2PI + logdet + d)
    return (
        gammaln(0.5 * (nu + p))
        - gammaln(0.5 * nu)
        - 0.5 * p * np.log(nu * np.pi)
        - 0.5 * logdet
        - 0.5 * (nu + p) * np.log1p(d / nu)
    )


def mvn_logpdf(x, mu, Sigma):
    """Log density of the multivariate normal.

    Parameters
    ----------
    x : array_like, shape (p,) or (n, p)
    mu : array_like, shape (p,)
    Sigma : array_like, shape (p, p)

    Returns
    -------
    float or ndarray of shape (n,)
    """
    mu = np.asarray(mu, dtype=float)
    X, single = _as_rows(x, mu.size)
    L = cholesky(Sigma, "Sigma")
    out = _t_log_kernel(_maha(X, mu, L), _logdet(L), mu.size, np.inf)
    return out[0] if single else out


def mvt_logpdf(x, mu, Sigma, nu):
    """Log density of the multivariate t with ``nu`` degrees of freedom."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    mu = np.asarray(mu, dtype=float)
    X, single = _as_rows(x, mu.size)
    L = cholesky(Sigma, "Sigma")
    out = _t_log_kernel(_maha(X, mu, L), _logdet(L), mu.size, float(nu))
    return out[0] if single else out


def mvt_cdf(upper, Sigma, nu, rel_tol=1e-6):
    """``P(T <= upper)`` for ``T ~ t_r(0, Sigma, nu)``.

    ``r = 1`` is exact; ``r`` in {2, 3} uses a chi-mixture of normal orthant
    probabilities with node doubling; ``r >= 4`` uses randomised quasi-Monte
    Carlo with a fixed seed.  ``nu = inf`` gives the normal CDF.
    """
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    if not 0 < rel_tol < 1:
        raise DomainError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    u = np.asarray(upper, dtype=float).reshape(-1)
    if u.size == 0:
        raise DomainError("upper must be non-empty")
    S = np.asarray(Sigma, dtype=float).reshape(u.size, u.size)
    cholesky(S, "Sigma")
    r = u.size
    if r == 1:
        return float(_orthant.tcdf(u[None], S, nu)[0])
    if r <= 3:
        return float(_orthant.tcdf_adaptive(u[None], S, nu, rel_tol)[0])
    sd = np.sqrt(np.diag(S))
    return float(_orthant.qmc_cdf((u / sd)[None], S / np.outer(sd, sd), nu, rel_tol)[0])


def trunc_mvt_moments(center, Scale, nu, rel_tol=1e-6):
    """Moments of ``t_r(center, Scale, nu)`` truncated to the positive orthant.

    Returns
    -------
    TruncTMoments
        ``first = E[a]``, ``second = E[a a^T]`` and the truncation probability.
    """
    if not nu > 2:
        raise DomainError(f"second moment requires nu > 2, got {nu}")
    c = np.asarray(center, dtype=float).reshape(-1)
    S = np.asarray(Scale, dtype=float).reshape(c.size, c.size)
    cholesky(S, "Scale")
    density = max(_orthant.DEFAULT_DENSITY, 3.5 * np.log10(1.0 / rel_tol) / 6.0)
    L = -c[None, :]
    P = _orthant.tcdf(-L, S, nu, density)
    P, m1, M = _orthant.orthant_second(L, S, nu, P=P)
    P, m1, M = float(P[0]), m1[0], M[0]
    if not P > 1e-300:
        raise UnderflowError(f"truncation probability {P:.3g} underflows")
    first = c + m1 / P
    second = np.outer(c, c) + (np.outer(c, m1) + np.outer(m1, c)) / P + M / P
    return TruncTMoments(first, 0.5 * (second + second.T), P)


def skew_geometry(Sigma, Delta):
    """Cholesky factor of ``Sigma``, ``Lambda`` and related pieces.

    Uses ``Lambda = (I + Delta^T Sigma^-1 Delta)^-1``, which equals
    ``I - Delta^T Omega^-1 Delta`` but stays positive definite numerically.
    Returns ``(L_sigma, Lambda, A, logdet_Lambda)`` with ``A = Sigma^-1 Delta``.
    """
    Ls = cholesky(Sigma, "Sigma")
    A = linalg.cho_solve((Ls, True), Delta, check_finite=False)
    r = Delta.shape[1]
    Lam = np.linalg.inv(np.eye(r) + Delta.T @ A) if r else np.zeros((0, 0))
    Lam = 0.5 * (Lam + Lam.T)
    logdet_lam = np.linalg.slogdet(Lam)[1] if r else 0.0
    return Ls, Lam, A, logdet_lam


def skew_statistics(X, mu, Sigma, Delta):
    """Per-row ``(d, c)`` together with ``Lambda`` and ``log|Omega|``."""
    Ls, Lam, A, logdet_lam = skew_geometry(Sigma, Delta)
    R = X - mu
    d_sigma = _maha(X, mu, Ls)
    if Delta.shape[1]:
        g = R @ A
        c = g @ Lam
        d = d_sigma - np.sum(c * g, axis=1)
    else:
        c = np.zeros((X.shape[0], 0))
        d = d_sigma
    d = np.maximum(d, 0.0)
    logdet_omega = _logdet(Ls) - logdet_lam
    return d, c, Lam, logdet_omega


def log_orthant_factor(c, Lam, nu, p, d, density=_orthant.DEFAULT_DENSITY):
    """``log T_r(c sqrt((nu+p)/(nu+d)); 0, Lambda, nu + p)`` per row.

    Returns ``-inf`` where the probability underflows; callers decide on a
    fallback.
    """
    n, r = c.shape
    if r == 0:
        return np.zeros(n)
    if np.isinf(nu):
        U = c
        df = np.inf
    else:
        U = c * np.sqrt((nu + p) / (nu + d))[:, None]
        df = nu + p
    if r == 1:
        z = U[:, 0] / np.sqrt(Lam[0, 0])
        if np.isinf(df):
            return log_ndtr(z)
        return stats.t.logcdf(z, df)
    with np.errstate(divide="ignore"):
        return np.log(_orthant.tcdf(U, Lam, df, density))


def _cfust_logpdf(x, params, nu):
    X, single = _as_rows(x, params.p)
    d, c, Lam, logdet = skew_statistics(X, params.mu, params.Sigma, params.Delta)
    p = params.p
    out = params.r * np.log(2.0) + _t_log_kernel(d, logdet, p, nu)
    lf = log_orthant_factor(c, Lam, nu, p, d)
    bad = ~np.isfinite(lf) | (lf < np.log(1e-300))
    for j in np.flatnonzero(bad):
        lf[j] = _orthant.truncated_conditional_mc(c[j], Lam, nu, p, d[j], seed=0, moments=False)[0]
    out = out + lf
    return out[0] if single else out


def cfusn_logpdf(x, params):
    """Log density of the CFUSN distribution; ``params.nu`` is ignored."""
    return _cfust_logpdf(x, params, np.inf)


def cfust_logpdf(x, params):
    """Log density of the CFUST distribution."""
    return _cfust_logpdf(x, params, params.nu)


def half_t_mean(nu):
    """``E|T|`` for a standard univariate t (``sqrt(2/pi)`` when ``nu = inf``)."""
    if np.isinf(nu):
        return np.sqrt(2.0 / np.pi)
    return np.sqrt(nu / np.pi) * np.exp(gammaln(0.5 * (nu - 1.0)) - gammaln(0.5 * nu))


def cfust_moments(params):
    """Mean vector and covariance matrix of a CFUST distribution.

    ``mean = mu + a(nu) Delta 1`` with ``a(nu)`` the half-t mean, and
    ``cov = k [Sigma + (1 - 2/pi) Delta Delta^T] + (2k/pi - a^2) Delta J Delta^T``
    with ``k = nu / (nu - 2)`` and ``J`` the all-ones matrix.
    """
    nu = params.nu
    if not nu > 2:
        raise DomainError(f"moments require nu > 2, got {nu}")
    k = 1.0 if np.isinf(nu) else nu / (nu - 2.0)
    a = half_t_mean(nu)
    D = params.Delta
    s = D.sum(axis=1)
    mean = params.mu + a * s
    cov = k * (params.Sigma + (1.0 - 2.0 / np.pi) * D @ D.T) + (2.0 * k / np.pi - a * a) * np.outer(s, s)
    return mean, cov


def sample_cfust(params, n, seed):
    """Draw ``n`` rows from a CFUST distribution.

    Uses the convolution form ``Y = mu + Delta |U0| / sqrt(tau) + e0 / sqrt(tau)``
    with ``U0 ~ N(0, I_r)``, ``e0 ~ N(0, Sigma)`` and
    ``tau ~ Gamma(nu/2, rate nu/2)``.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    return _draw(params, int(n), rng)


def _draw(params, n, rng):
    p, r = params.p, params.r
    L = cholesky(params.Sigma, "Sigma")
    tau = np.ones(n) if np.isinf(params.nu) else rng.gamma(0.5 * params.nu, 2.0 / params.nu, n)
    u = np.abs(rng.standard_normal((n, r)))
    e = rng.standard_normal((n, p)) @ L.T
    return params.mu + (u @ params.Delta.T + e) / np.sqrt(tau)[:, None]
