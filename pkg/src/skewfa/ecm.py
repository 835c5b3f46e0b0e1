"""ECM fitting of CFUST factor-analyzer mixtures and their nested families.

One iteration is a block of conditional maximisations (mixing weights,
skewness, location, loadings, uniquenesses, degrees of freedom) followed by
an E-step at the new parameters.  The loop stops when the Aitken-extrapolated
log-likelihood is within ``tol`` of the current value.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np
from scipy import optimize, stats as sps
from scipy.special import digamma, gammaln, log_ndtr, logsumexp, ndtr, stdtr

from skewfa import _backend, _orthant
from skewfa.criteria import bic as _bic, icl as _icl
from skewfa.distributions import _t_log_kernel, skew_statistics
from skewfa.exceptions import DegenerateComponentError, DomainError
from skewfa.model import ComponentParams, Family, MixtureModel, count_params, observed_scale

log = logging.getLogger(__name__)

# rows per E-step work unit; fixed so results do not depend on the thread count
CHUNK_ROWS = 256
TINY_PROB = 1e-300
FALLBACK_DRAWS = 4096


@dataclass
class SuffStats:
    """Conditional expectations from one E-step.

    Arrays are indexed ``[component, observation, ...]``.  ``w`` is the
    expected precision ``E[1/W]`` and ``elog`` is ``E[log(1/W)]``, which the
    degrees-of-freedom step needs.
    """

    z: np.ndarray
    w: np.ndarray
    elog: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    e4: np.ndarray
    e5: np.ndarray
    logf: np.ndarray
    loglik: float
    n_fallback: int = 0


@dataclass
class FitConfig:
    """Settings for :func:`fit`.

    ``nu_method="exact"`` maximises the expected complete-data
    log-likelihood in ``nu``; ``"approximate"`` solves the symmetric-t style
    approximation that plugs in the new Mahalanobis distances and the old
    ``nu``.  ``delta_mask`` (``q x r`` booleans) pins masked skewness entries
    at zero.
    """

    g: int
    q: int
    r: int = 1
    family: Family = Family.CFUSTFA
    tol: float = 1e-6
    max_iter: int = 2000
    init: str = "kmeans"
    seed: int = 0
    nu_bounds: tuple = (2.0001, 200.0)
    nu0: float = 40.0
    restarts: int = 1
    threads: int = None
    nu_method: str = "exact"
    delta_mask: np.ndarray = None
    mu_b_update: str = "joint"

    def __post_init__(self):
        self.family = Family.parse(self.family)
        if not self.family.skewed:
            self.r = 0
        if self.g < 1 or self.q < 1 or self.r < 0:
            raise DomainError(f"need g >= 1, q >= 1, r >= 0; got g={self.g}, q={self.q}, r={self.r}")
        if not self.tol > 0:
            raise DomainError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise DomainError(f"max_iter must be at least 1, got {self.max_iter}")
        lo, hi = self.nu_bounds
        if not 0 < lo < hi:
            raise DomainError(f"invalid nu_bounds {self.nu_bounds}")
        if self.nu_method not in ("exact", "approximate"):
            raise DomainError(f"nu_method must be 'exact' or 'approximate', got {self.nu_method!r}")
        if self.restarts < 1:
            raise DomainError(f"restarts must be at least 1, got {self.restarts}")
        if self.mu_b_update not in ("joint", "sequential"):
            raise DomainError(f"mu_b_update must be 'joint' or 'sequential', got {self.mu_b_update!r}")
        if self.delta_mask is not None:
            self.delta_mask = np.asarray(self.delta_mask, dtype=bool).reshape(self.q, self.r)


@dataclass
class FitReport:
    """Result of a fit."""

    model: MixtureModel
    loglik_trace: np.ndarray
    iterations: int
    converged: bool
    posteriors: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    bic: float
    icl: float
    n_params: int
    seed: int = 0
    n_fallback: int = 0
    notes: list = field(default_factory=list)

    @property
    def loglik(self):
        return float(self.loglik_trace[-1])


def resolve_threads(threads=None):
    """Worker count from the argument, then ``SKEWFA_THREADS``, else 1."""
    if threads is None:
        threads = os.environ.get("SKEWFA_THREADS", "1")
    try:
        threads = int(threads)
    except ValueError:
        raise DomainError(f"thread count must be an integer, got {threads!r}") from None
    return max(1, threads)


# ---------------------------------------------------------------- E-step


def _skew_moments(c, Lam, d, nu, p):
    """Log orthant factor and ``w, E log tau, e1, e2`` for one component."""
    n, r = c.shape
    sd = np.sqrt(np.diag(Lam))
    R = Lam / np.outer(sd, sd)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if np.isinf(nu):
            if r == 1:
                a_star = ndtr(c[:, 0] / sd[0])
                log_a = log_ndtr(c[:, 0] / sd[0])
            else:
                a_star = _orthant.tcdf(c, Lam, np.inf)
                log_a = np.log(a_star)
            alpha = a_star
            w = np.ones(n)
            elog = np.zeros(n)
            root_f = np.ones(n)
            df_a = np.inf
        else:
            df = nu + p
            H = c / (np.sqrt(nu + d)[:, None] * sd)
            finite_h = np.where(np.isfinite(H), H, 0.0)
            s, wq = _orthant.chi_rule(df, float(finite_h.min(initial=0.0)))
            w2 = wq * s * s
            w2 = w2 / w2.sum()
            W = np.column_stack([wq, w2, wq * np.log(s)])
            sums = _backend.mixture_sums(H, s, W, R)
            a_q, alpha_q, lsum = sums[:, 0], sums[:, 1], sums[:, 2]
            if r == 1:
                zz = H[:, 0]
                a_star = stdtr(df, zz * np.sqrt(df))
                alpha = stdtr(df + 2.0, zz * np.sqrt(df + 2.0))
                log_a = sps.t.logcdf(zz * np.sqrt(df), df)
            else:
                a_star, alpha = a_q, alpha_q
                log_a = np.log(a_star)
            w = (df / (nu + d)) * alpha / a_star
            elog = 2.0 * lsum / a_q - np.log(nu + d)
            root_f = np.sqrt((nu + d) / (df + 2.0))
            df_a = df + 2.0
        bad = ~((a_star > TINY_PROB) & (alpha > TINY_PROB) & np.isfinite(log_a))
        safe_alpha = np.where(bad, 1.0, alpha)
        safe_astar = np.where(bad, 1.0, a_star)
        L = -c / root_f[:, None]
        _, m1, M = _orthant.orthant_second(L, Lam, df_a, P=safe_alpha, P_star=safe_astar)
        Ez = root_f[:, None] * m1 / safe_alpha[:, None]
        EZZ = (root_f**2)[:, None, None] * M / safe_alpha[:, None, None]
        Ea = c + Ez
        Eaa = c[:, :, None] * c[:, None, :] + c[:, :, None] * Ez[:, None, :] + Ez[:, :, None] * c[:, None, :] + EZZ
    e1 = w[:, None] * Ea
    e2 = w[:, None, None] * Eaa
    e2 = 0.5 * (e2 + np.swapaxes(e2, 1, 2))
    return log_a, w, elog, e1, e2, bad


def _component_chunk(Y, comp, family, seed_key):
    n, p = Y.shape
    q, r = comp.q, comp.r
    Sigma, Dstar = observed_scale(comp)
    d, c, Lam, logdet = skew_statistics(Y, comp.mu, Sigma, Dstar)
    nu = comp.nu if family.has_nu else np.inf
    logf = r * np.log(2.0) + _t_log_kernel(d, logdet, p, nu)
    n_fb = 0
    if r == 0:
        e1 = np.zeros((n, 0))
        e2 = np.zeros((n, 0, 0))
        if np.isinf(nu):
            w, elog = np.ones(n), np.zeros(n)
        else:
            w = (nu + p) / (nu + d)
            elog = digamma(0.5 * (nu + p)) - np.log(0.5 * (nu + d))
    else:
        log_a, w, elog, e1, e2, bad = _skew_moments(c, Lam, d, nu, p)
        for j in np.flatnonzero(bad):
            seq = np.random.SeedSequence([seed_key[0], seed_key[1], seed_key[2] + int(j)])
            seed = int(seq.generate_state(1)[0])
            log_a[j], w[j], elog[j], e1[j], e2[j] = _orthant.truncated_conditional_mc(
                c[j], Lam, nu, p, d[j], seed, FALLBACK_DRAWS
            )
            n_fb += 1
        logf = logf + log_a
    # factor-space expectations
    BtDinv = comp.B.T / comp.d
    C = np.linalg.inv(BtDinv @ comp.B + np.eye(q))
    C = 0.5 * (C + C.T)
    h = (Y - comp.mu) @ (C @ BtDinv).T
    CD = C @ comp.Delta
    e3 = w[:, None] * h + e1 @ CD.T
    e5 = h[:, :, None] * e1[:, None, :] + np.einsum("kr,nrs->nks", CD, e2)
    e4 = e3[:, :, None] * h[:, None, :] + np.einsum("nkr,lr->nkl", e5, CD) + C
    e4 = 0.5 * (e4 + np.swapaxes(e4, 1, 2))
    return logf, w, elog, e1, e2, e3, e4, e5, n_fb


def e_step(model, Y, seed=0, threads=None):
    """Compute :class:`SuffStats` and the observed log-likelihood."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    g = model.g
    starts = list(range(0, n, CHUNK_ROWS))
    jobs = [(i, s0) for i in range(g) for s0 in starts]

    def run(job):
        i, s0 = job
        return _component_chunk(Y[s0 : s0 + CHUNK_ROWS], model.components[i], model.family, (seed, i, s0))

    nthreads = resolve_threads(threads)
    if nthreads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=nthreads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    per = {}
    for (i, s0), res in zip(jobs, results):
        per.setdefault(i, []).append(res)
    fields = []
    for k in range(8):
        fields.append(np.stack([np.concatenate([res[k] for res in per[i]]) for i in range(g)]))
    logf, w, elog, e1, e2, e3, e4, e5 = fields
    n_fb = sum(res[8] for res in results)
    if n_fb:
        log.info("CDF underflow: %d point(s) used the Monte Carlo fallback", n_fb)
    joint = logf + np.log(model.pi)[:, None]
    norm = logsumexp(joint, axis=0)
    z = np.exp(joint - norm)
    z /= z.sum(axis=0)
    return SuffStats(z, w, elog, e1, e2, e3, e4, e5, logf, float(np.sum(norm)), n_fb)


# ---------------------------------------------------------------- CM-steps


def _ridge_solve(A, Bm, what):
    """Solve ``A X = Bm`` for symmetric ``A``, adding a small ridge if singular."""
    A = 0.5 * (A + A.T)
    try:
        if np.linalg.cond(A) < 1e12:
            return np.linalg.solve(A, Bm)
    except np.linalg.LinAlgError:
        pass
    eps = 1e-10 * max(np.trace(A), 1e-300)
    log.warning("singular %s accumulation; adding ridge %.3g", what, eps)
    return np.linalg.solve(A + eps * np.eye(A.shape[0]), Bm)


def _as_work(model):
    return [
        SimpleNamespace(pi=c.pi, mu=np.array(c.mu), B=np.array(c.B), Delta=np.array(c.Delta), d=np.array(c.d), nu=c.nu)
        for c in model.components
    ]


@dataclass
class NuSolution:
    nu: float
    clamped: bool
    residual: float


def nu_residual(stats, i, nu, method="exact", Y=None, work=None, nu_old=None):
    """Score equation for ``nu`` of component ``i``, per unit responsibility."""
    z = stats.z[i]
    sz = z.sum()
    base = np.log(0.5 * nu) + 1.0 - digamma(0.5 * nu)
    if method == "exact":
        return base + np.dot(z, stats.elog[i] - stats.w[i]) / sz
    p = Y.shape[1]
    comp = work[i]
    Sigma = comp.B @ comp.B.T + np.diag(comp.d)
    Dstar = comp.B @ comp.Delta
    d, _, _, _ = skew_statistics(Y, comp.mu, Sigma, Dstar)
    v = nu_old
    extra = digamma(0.5 * (v + p)) - np.log(0.5 * (v + d)) - (v + p) / (v + d)
    return base + np.dot(z, extra) / sz


def solve_nu(stats, Y, work, i, bounds=(2.0001, 200.0), method="exact", nu_old=None):
    """Root of the ``nu`` score equation, clamped to ``bounds`` without a sign change."""
    lo, hi = bounds
    if nu_old is None:
        nu_old = work[i].nu
    fn = lambda v: nu_residual(stats, i, v, method, Y, work, nu_old)  # noqa: E731
    flo, fhi = fn(lo), fn(hi)
    if flo <= 0:
        if flo < 0:
            log.info("nu for component %d clamped at the lower bound %.4g", i + 1, lo)
        return NuSolution(lo, flo < 0, flo)
    if fhi >= 0:
        if fhi > 0:
            log.info("nu for component %d clamped at the upper bound %.4g", i + 1, hi)
        return NuSolution(hi, fhi > 0, fhi)
    root = optimize.brentq(fn, lo, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
    return NuSolution(root, False, fn(root))


def cm_steps(stats, Y, prev, nu_bounds=(2.0001, 200.0), nu_method="exact", delta_mask=None, d_floor=None,
             on_substep=None, mu_b="joint"):
    """One block of conditional maximisations.

    Parameters are updated in the order mixing weights, ``Delta``, ``mu``,
    ``B``, ``d``, ``nu``.  ``on_substep(name, work)`` is called after each
    group with the current (mutable) parameter state, which
    :func:`q_function` accepts.

    Returns
    -------
    MixtureModel
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    family = prev.family
    work = _as_work(prev)
    if d_floor is None:
        d_floor = 1e-8 * Y.var(axis=0)
    z = stats.z
    sz = z.sum(axis=1)

    def notify(name):
        if on_substep is not None:
            on_substep(name, work)

    for i, comp in enumerate(work):
        comp.pi = sz[i] / n
    notify("pi")

    if family.skewed and prev.r:
        for i, comp in enumerate(work):
            S2 = np.einsum("n,nrs->rs", z[i], stats.e2[i])
            S5 = np.einsum("n,nqr->qr", z[i], stats.e5[i])
            if delta_mask is None:
                comp.Delta = _ridge_solve(S2, S5.T, "e2").T
            else:
                Dn = np.zeros_like(comp.Delta)
                for k in range(Dn.shape[0]):
                    F = np.flatnonzero(delta_mask[k])
                    if F.size:
                        Dn[k, F] = _ridge_solve(S2[np.ix_(F, F)], S5[k, F], "e2")
                comp.Delta = Dn
        notify("Delta")

    if mu_b == "joint":
        # regression of y on the augmented factor (x, 1): one block for (B, mu)
        for i, comp in enumerate(work):
            q = comp.B.shape[1]
            zw = z[i] * stats.w[i]
            S3 = z[i] @ stats.e3[i]
            A = np.empty((q + 1, q + 1))
            A[:q, :q] = np.einsum("n,nkl->kl", z[i], stats.e4[i])
            A[:q, q] = A[q, :q] = S3
            A[q, q] = zw.sum()
            R = np.empty((p, q + 1))
            R[:, :q] = (z[i][:, None] * Y).T @ stats.e3[i]
            R[:, q] = zw @ Y
            sol = _ridge_solve(A, R.T, "e4").T
            comp.B, comp.mu = sol[:, :q], sol[:, q]
        notify("mu")
        notify("B")
    else:
        for i, comp in enumerate(work):
            zw = z[i] * stats.w[i]
            S3 = z[i] @ stats.e3[i]
            comp.mu = (zw @ Y - comp.B @ S3) / zw.sum()
        notify("mu")

        for i, comp in enumerate(work):
            Rm = Y - comp.mu
            S4 = np.einsum("n,nkl->kl", z[i], stats.e4[i])
            Sre = (z[i][:, None] * Rm).T @ stats.e3[i]
            comp.B = _ridge_solve(S4, Sre.T, "e4").T
        notify("B")

    for i, comp in enumerate(work):
        Rm = Y - comp.mu
        S4 = np.einsum("n,nkl->kl", z[i], stats.e4[i])
        t1 = np.einsum("kq,ql,kl->k", comp.B, S4, comp.B)
        t2 = (z[i] * stats.w[i]) @ (Rm * Rm)
        t3 = z[i] @ (Rm * (stats.e3[i] @ comp.B.T))
        comp.d = np.maximum((t1 + t2 - 2.0 * t3) / sz[i], d_floor)
    notify("d")

    if family.has_nu:
        for i, comp in enumerate(work):
            comp.nu = solve_nu(stats, Y, work, i, nu_bounds, nu_method, nu_old=prev.components[i].nu).nu
        notify("nu")

    comps = [ComponentParams(c.pi, c.mu, c.B, c.Delta, c.d, c.nu) for c in work]
    return MixtureModel.from_components(comps, family)


def q_function(stats, Y, params, family=None):
    """Expected complete-data log-likelihood (parameter-free terms dropped).

    ``params`` is a :class:`MixtureModel` or the mutable state passed to
    ``on_substep``.
    """
    Y = np.asarray(Y, dtype=float)
    if isinstance(params, MixtureModel):
        family = params.family
        params = params.components
    family = Family.parse(family) if family is not None else Family.CFUSTFA
    total = 0.0
    for i, c in enumerate(params):
        z = stats.z[i]
        Rm = Y - c.mu
        Dinv = 1.0 / c.d
        e2, e4, e5, e3, w = stats.e2[i], stats.e4[i], stats.e5[i], stats.e3[i], stats.w[i]
        qx = -0.5 * np.trace(e4, axis1=1, axis2=2)
        if c.Delta.size:
            qx = qx + np.einsum("kr,nkr->n", c.Delta, e5)
            qx = qx - 0.5 * np.einsum("kr,nrs,ks->n", c.Delta, e2, c.Delta)
        BtDB = (c.B.T * Dinv) @ c.B
        qy = (
            -0.5 * w * np.sum(Rm * Rm * Dinv, axis=1)
            + np.sum((Rm * Dinv) * (e3 @ c.B.T), axis=1)
            - 0.5 * np.einsum("nkl,kl->n", e4, BtDB)
            - 0.5 * np.sum(np.log(c.d))
        )
        qw = 0.0
        if family.has_nu:
            v = c.nu
            qw = 0.5 * v * np.log(0.5 * v) - gammaln(0.5 * v) + 0.5 * v * (stats.elog[i] - w)
        total += float(np.dot(z, np.log(c.pi) + qx + qy + qw))
    return total


# ---------------------------------------------------------------- driver


def aitken_gap(trace):
    """Aitken-extrapolated gap ``|l_inf - l_k|`` from the last three values.

    Returns ``None`` when fewer than three values exist or the acceleration
    ``a`` makes the extrapolation ill-defined (``|1 - a| < 1e-8``).
    """
    if len(trace) < 3:
        return None
    l0, l1, l2 = trace[-3:]
    step0 = l1 - l0
    if step0 == 0.0:
        return 0.0 if l2 == l1 else None
    a = (l2 - l1) / step0
    if abs(1.0 - a) < 1e-8:
        return None
    linf = l1 + (l2 - l1) / (1.0 - a)
    return abs(linf - l1)


def map_labels(posteriors):
    """1-based MAP labels; ties go to the lowest component index."""
    return np.argmax(np.asarray(posteriors), axis=0) + 1


def factor_scores(model, Y, stats):
    """Factor scores ``sum_i z_ij e3_ij`` with shape ``(n, q)``."""
    return np.einsum("in,inq->nq", stats.z, stats.e3)


def _apply_mask(model, mask):
    if mask is None:
        return model
    comps = [ComponentParams(c.pi, c.mu, c.B, np.where(mask, c.Delta, 0.0), c.d, c.nu) for c in model.components]
    return MixtureModel(tuple(comps), model.family)


def fit(data, config, init_model=None, on_iteration=None):
    """Fit a mixture by ECM.

    Parameters
    ----------
    data : Dataset or array_like of shape (n, p)
    config : FitConfig
    init_model : MixtureModel, optional
        Starting values; by default built from ``config.init``.
    on_iteration : callable, optional
        Called as ``on_iteration(iteration, loglik, gap)`` after each E-step.

    Returns
    -------
    FitReport
    """
    Y = np.asarray(getattr(data, "Y", data), dtype=float)
    n, p = Y.shape
    if n < config.g:
        raise DomainError(f"n={n} is smaller than g={config.g}")
    if init_model is None:
        from skewfa.initialization import initialize

        init_model = initialize(Y, config)
    model = _apply_mask(init_model, config.delta_mask)
    threads = resolve_threads(config.threads)
    d_floor = 1e-8 * Y.var(axis=0)
    stats = e_step(model, Y, config.seed, threads)
    trace = [stats.loglik]
    converged = False
    it = 0
    n_fb = stats.n_fallback
    for it in range(1, config.max_iter + 1):
        model = cm_steps(stats, Y, model, config.nu_bounds, config.nu_method, config.delta_mask, d_floor,
                         mu_b=config.mu_b_update)
        small = np.flatnonzero(model.pi < 1.0 / (10.0 * n))
        if small.size:
            raise DegenerateComponentError(
                f"component {int(small[0]) + 1} has mixing proportion {model.pi[small[0]]:.3g} "
                f"below 1/(10n) at iteration {it}"
            )
        stats = e_step(model, Y, config.seed, threads)
        n_fb += stats.n_fallback
        trace.append(stats.loglik)
        gap = aitken_gap(trace)
        if on_iteration is not None:
            on_iteration(it, stats.loglik, gap)
        if gap is not None and gap < config.tol:
            converged = True
            break
    m = count_params(model.dims, model.family, model.g)
    if config.delta_mask is not None:
        m -= model.g * int(np.sum(~config.delta_mask))
    b = _bic(stats.loglik, m, n)
    return FitReport(
        model=model,
        loglik_trace=np.array(trace),
        iterations=it,
        converged=converged,
        posteriors=stats.z,
        labels=map_labels(stats.z),
        scores=factor_scores(model, Y, stats),
        bic=b,
        icl=_icl(b, stats.z),
        n_params=m,
        seed=config.seed,
        n_fallback=n_fb,
    )
