"""Starting values: partition the data, fit a factor analyzer per cluster.

Skewness starts from the sign and size of the sample skewness of the
per-cluster factor scores; ``nested`` instead fits the skew-normal family
first and lifts its estimates.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats
from sklearn.cluster import KMeans

from skewfa.exceptions import FitAbortedError, InitializationError, SkewFAError
from skewfa.model import ComponentParams, Family, MixtureModel

log = logging.getLogger(__name__)

KINDS = {"kmeans": "kmeans", "random": "random_partition", "random_partition": "random_partition",
         "nested": "nested_model", "nested_model": "nested_model"}
MAX_ATTEMPTS = 20


@dataclass(frozen=True)
class InitStrategy:
    """How starting values are produced.

    ``kind`` is ``kmeans``, ``random_partition`` or ``nested_model``
    (``random`` and ``nested`` are accepted as aliases).
    """

    kind: str = "kmeans"
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown init strategy {self.kind!r}")
        if self.restarts < 1:
            raise ValueError(f"restarts must be at least 1, got {self.restarts}")
        object.__setattr__(self, "kind", KINDS[self.kind])


def fa_em(Y, q, max_iter=200, tol=1e-8):
    """Maximum-likelihood factor analysis by EM.

    Starts from the principal axes of the sample covariance.

    Returns
    -------
    mu, B, d : ndarray
        Mean, ``p x q`` loadings and uniquenesses.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    mu = Y.mean(axis=0)
    S = np.cov(Y, rowvar=False, bias=True).reshape(p, p)
    floor = 1e-6 * max(np.mean(np.diag(S)), 1e-12)
    evals, evecs = np.linalg.eigh(S)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    noise = evals[q:].mean() if q < p else 0.0
    B = evecs[:, :q] * np.sqrt(np.maximum(evals[:q] - noise, floor))
    d = np.maximum(np.diag(S) - np.sum(B * B, axis=1), floor)
    prev = -np.inf
    for _ in range(max_iter):
        Sig = B @ B.T + np.diag(d)
        Si = np.linalg.inv(Sig)
        beta = B.T @ Si
        Ezz = np.eye(q) - beta @ B + beta @ S @ beta.T
        B = S @ beta.T @ np.linalg.inv(Ezz)
        d = np.maximum(np.diag(S - B @ beta @ S), floor)
        Sig = B @ B.T + np.diag(d)
        ll = -0.5 * n * (np.linalg.slogdet(Sig)[1] + np.trace(np.linalg.solve(Sig, S)))
        if abs(ll - prev) <= tol * abs(ll):
            break
        prev = ll
    return mu, B, d


def fa_scores(Y, mu, B, d):
    """Regression-method factor scores ``C B^T D^-1 (y - mu)``."""
    BtDinv = B.T / d
    C = np.linalg.inv(BtDinv @ B + np.eye(B.shape[1]))
    return (Y - mu) @ (C @ BtDinv).T


def _partition(Y, g, kind, seed, min_size):
    n = Y.shape[0]
    for attempt in range(MAX_ATTEMPTS):
        s = seed + 7919 * attempt
        if g == 1:
            labels = np.zeros(n, dtype=int)
        elif kind == "kmeans":
            labels = KMeans(n_clusters=g, n_init=10, random_state=s).fit(Y).labels_
        else:
            labels = np.random.default_rng(s).integers(0, g, n)
        if np.min(np.bincount(labels, minlength=g)) >= min_size:
            return labels
        log.info("partition attempt %d left a cluster below %d points", attempt + 1, min_size)
    raise InitializationError(f"no partition of n={n} points into g={g} clusters with at least {min_size} each")


SKEW_CAP = 0.99  # skew-normal skewness tops out near 0.9953
HALF_NORMAL_MEAN = np.sqrt(2.0 / np.pi)
# keeps the start off the Delta = 0 saddle
DELTA_FLOOR = 0.1
# sample skewness is shrunk toward zero by this many standard errors
SKEW_SHRINK = 2.0


def skew_normal_delta(gamma):
    """Moment estimate of ``Delta`` in ``X = Delta |U| + e`` from the skewness of ``X``.

    ``X / sqrt(1 + Delta^2)`` is standard skew-normal with shape
    ``delta = Delta / sqrt(1 + Delta^2)``, whose skewness is
    ``(4 - pi)/2 * (delta b)^3 / (1 - (delta b)^2)^1.5`` with ``b = sqrt(2/pi)``.
    """
    g = np.clip(np.abs(gamma), 0.0, SKEW_CAP)
    c = (2.0 * g / (4.0 - np.pi)) ** (1.0 / 3.0)
    db = c / np.sqrt(1.0 + c * c)  # delta * b
    delta = np.minimum(db / HALF_NORMAL_MEAN, 0.999)
    return np.sign(gamma) * delta / np.sqrt(1.0 - delta * delta)


def from_partition(Y, labels, config):
    """Component parameters from a hard partition.

    Each cluster gets a factor analysis.  For the skew families the
    skewness of each of the first ``r`` factor-score coordinates, shrunk by
    two standard errors, is matched by a skew-normal; ``|Delta_kk|`` is
    floored at ``DELTA_FLOOR``.  ``mu`` and ``B`` are then adjusted so the
    implied mean and covariance still equal the cluster's.
    """
    Y = np.asarray(Y, dtype=float)
    n, p = Y.shape
    g, q, r = config.g, config.q, config.r
    family = Family.parse(config.family)
    lo, hi = config.nu_bounds
    nu0 = float(np.clip(config.nu0, lo, hi)) if family.has_nu else np.inf
    comps = []
    for i in range(g):
        Yi = Y[labels == i]
        mu, B, d = fa_em(Yi, q)
        Delta = np.zeros((q, r))
        if family.skewed and r:
            U = fa_scores(Yi, mu, B, d)
            skew = stats.skew(U, axis=0)[: min(q, r)]
            k = skew.size
            # shrink by two standard errors so sampling noise does not read as skewness
            shrunk = np.sign(skew) * np.maximum(np.abs(skew) - SKEW_SHRINK * np.sqrt(6.0 / len(Yi)), 0.0)
            sign = np.where(skew < 0, -1.0, 1.0)
            dk = sign * np.maximum(np.abs(skew_normal_delta(shrunk)), DELTA_FLOOR)
            Delta[np.arange(k), np.arange(k)] = dk
            scale = np.ones(q)
            scale[:k] = 1.0 / np.sqrt(1.0 + (1.0 - 2.0 / np.pi) * dk * dk)
            B = B * scale
            mu = mu - B @ (Delta @ np.full(r, HALF_NORMAL_MEAN))
        comps.append(ComponentParams(len(Yi) / n, mu, B, Delta, d, nu0))
    return MixtureModel.from_components(comps, family)


def initialize(Y, config, strategy=None):
    """Starting :class:`MixtureModel` for ``config``.

    Parameters
    ----------
    Y : ndarray, shape (n, p)
    config : FitConfig
    strategy : InitStrategy, optional
        Defaults to ``config.init`` with ``config.seed``.
    """
    Y = np.asarray(getattr(Y, "Y", Y), dtype=float)
    if strategy is None:
        strategy = InitStrategy(config.init, 1, config.seed)
    family = Family.parse(config.family)
    min_size = config.q + 2
    if strategy.kind != "nested_model":
        labels = _partition(Y, config.g, strategy.kind, strategy.seed, min_size)
        return from_partition(Y, labels, config)

    from skewfa.ecm import fit

    base = {Family.CFUSTFA: Family.CFUSNFA, Family.MTFA: Family.MFA}.get(family, Family.MFA)
    inner = replace(config, family=base, r=config.r if base.skewed else 0, init="kmeans", delta_mask=None)
    report = fit(Y, inner, init_model=initialize(Y, inner, InitStrategy("kmeans", 1, strategy.seed)))
    if base.skewed == family.skewed:
        lo, hi = config.nu_bounds
        nu0 = float(np.clip(config.nu0, lo, hi)) if family.has_nu else np.inf
        comps = [replace(c, nu=nu0) for c in report.model.components]
        return MixtureModel(tuple(comps), family)
    labels = report.labels - 1
    if np.min(np.bincount(labels, minlength=config.g)) < min_size:
        labels = _partition(Y, config.g, "kmeans", strategy.seed, min_size)
    return from_partition(Y, labels, config)


def best_of_restarts(data, config, strategy=None, on_iteration=None):
    """Fit from several starts and keep the highest final log-likelihood.

    Restart ``k`` uses seed ``seed + k``.  Log-likelihoods within ``1e-6`` of
    the best so far count as ties, which go to the earlier restart.
    """
    from skewfa.ecm import fit

    Y = np.asarray(getattr(data, "Y", data), dtype=float)
    if strategy is None:
        strategy = InitStrategy(config.init, config.restarts, config.seed)
    best, causes = None, []
    for k in range(strategy.restarts):
        seed = strategy.seed + k
        cfg = replace(config, seed=seed)
        try:
            init = initialize(Y, cfg, InitStrategy(strategy.kind, 1, seed))
            rep = fit(Y, cfg, init_model=init, on_iteration=on_iteration)
        except (SkewFAError, np.linalg.LinAlgError, FloatingPointError) as exc:
            log.warning("restart %d failed: %s", k, exc)
            causes.append(f"restart {k}: {exc}")
            continue
        if best is None or rep.loglik > best.loglik + 1e-6:
            best = rep
    if best is None:
        raise FitAbortedError("all restarts failed: " + "; ".join(causes), causes)
    return best
