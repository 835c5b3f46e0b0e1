"""Parameter containers and bookkeeping for CFUST factor-analyzer mixtures.

Component ``i`` models an observation as ``Y = mu + B X + e`` with latent
factors ``X = Delta |U| + eps``.  Marginally ``Y`` is CFUST with scale
``B B^T + D`` and skewness ``B Delta``.
"""

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from skewfa.distributions import CFUSTParams, _draw, cfust_logpdf
from skewfa.exceptions import DomainError


class Family(str, enum.Enum):
    """Model family.  The tag is explicit so parameter counts are unambiguous."""

    CFUSTFA = "cfustfa"
    CFUSNFA = "cfusnfa"
    MTFA = "mtfa"
    MFA = "mfa"

    @property
    def skewed(self):
        return self in (Family.CFUSTFA, Family.CFUSNFA)

    @property
    def has_nu(self):
        return self in (Family.CFUSTFA, Family.MTFA)

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(f.value for f in cls)
            raise DomainError(f"unknown family {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class ComponentParams:
    """One component: mixing weight, location, loadings, skewness, uniquenesses, df."""

    pi: float
    mu: np.ndarray
    B: np.ndarray
    Delta: np.ndarray
    d: np.ndarray
    nu: float = np.inf

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).reshape(-1)
        p = mu.size
        B = np.asarray(self.B, dtype=float).reshape(p, -1)
        q = B.shape[1]
        Delta = np.asarray(self.Delta, dtype=float).reshape(q, -1) if q else np.zeros((0, 0))
        d = np.asarray(self.d, dtype=float).reshape(-1)
        if d.size != p:
            raise DomainError(f"d has length {d.size}, expected {p}")
        if not np.all(d > 0):
            raise DomainError("uniquenesses d must be strictly positive")
        if not np.all(np.isfinite(B)) or not np.all(np.isfinite(mu)) or not np.all(np.isfinite(Delta)):
            raise DomainError("component parameters must be finite")
        if not self.nu > 0:
            raise DomainError(f"nu must be positive, got {self.nu}")
        if not 0.0 < self.pi <= 1.0:
            raise DomainError(f"pi must lie in (0, 1], got {self.pi}")
        for name, val in (("mu", mu), ("B", B), ("Delta", Delta), ("d", d)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "pi", float(self.pi))
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def p(self):
        return self.mu.size

    @property
    def q(self):
        return self.B.shape[1]

    @property
    def r(self):
        return self.Delta.shape[1]


@dataclass(frozen=True)
class MixtureModel:
    """A g-component mixture sharing dimensions ``(p, q, r)``."""

    components: tuple
    family: Family
    dims: tuple = field(default=None)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise DomainError("a mixture needs at least one component")
        family = Family.parse(self.family)
        p, q, r = comps[0].p, comps[0].q, comps[0].r
        for c in comps:
            if (c.p, c.q, c.r) != (p, q, r):
                raise DomainError("all components must share (p, q, r)")
        if q > p:
            raise DomainError(f"q={q} exceeds p={p}")
        if not family.skewed and r != 0:
            raise DomainError(f"family {family.value} takes r = 0, got r={r}")
        total = sum(c.pi for c in comps)
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"mixing proportions sum to {total!r}, not 1")
        if self.dims is not None and tuple(self.dims) != (p, q, r):
            raise DomainError(f"dims {tuple(self.dims)} disagree with components ({p}, {q}, {r})")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "dims", (p, q, r))

    @property
    def g(self):
        return len(self.components)

    @property
    def p(self):
        return self.dims[0]

    @property
    def q(self):
        return self.dims[1]

    @property
    def r(self):
        return self.dims[2]

    @property
    def pi(self):
        return np.array([c.pi for c in self.components])

    def observed(self, i):
        """Observed-space :class:`CFUSTParams` of component ``i``."""
        c = self.components[i]
        Sigma, Delta = observed_scale(c)
        return CFUSTParams(c.mu, Sigma, Delta, c.nu)

    @classmethod
    def from_components(cls, components, family):
        """Build a model after renormalising the mixing proportions."""
        comps = list(components)
        pis = np.array([c.pi for c in comps], dtype=float)
        pis = pis / pis.sum()
        comps = [replace(c, pi=float(p_)) for c, p_ in zip(comps, pis)]
        # absorb the last rounding error into the largest weight
        err = 1.0 - sum(c.pi for c in comps)
        k = int(np.argmax(pis))
        comps[k] = replace(comps[k], pi=comps[k].pi + err)
        return cls(tuple(comps), family)


@dataclass(frozen=True)
class Dataset:
    """An ``n x p`` data matrix with optional ground-truth labels."""

    Y: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=float)
        if Y.ndim != 2:
            raise DomainError("Y must be a two-dimensional array")
        if not np.all(np.isfinite(Y)):
            raise DomainError("Y contains missing or non-finite values")
        n, p = Y.shape
        if n <= p:
            warnings.warn(f"n={n} does not exceed p={p}", stacklevel=2)
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels).reshape(-1)
            if labels.size != n:
                raise DomainError(f"labels has length {labels.size}, expected {n}")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def p(self):
        return self.Y.shape[1]


def observed_scale(comp):
    """``(B B^T + D, B Delta)``: the observed-space scale and skewness."""
    Sigma = comp.B @ comp.B.T + np.diag(comp.d)
    return 0.5 * (Sigma + Sigma.T), comp.B @ comp.Delta


def component_logpdfs(model, Y):
    """Matrix of ``log f_i(y_j)`` with shape ``(g, n)``."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    return np.stack([cfust_logpdf(Y, model.observed(i)) for i in range(model.g)])


def model_logpdf(model, y):
    """Log mixture density ``log sum_i pi_i f_i(y)`` (per row for 2-D input)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    lf = component_logpdfs(model, y) + np.log(model.pi)[:, None]
    out = logsumexp(lf, axis=0)
    return out[0] if single else out


def count_params(dims, family, g):
    """Number of free parameters.

    Loadings of the symmetric families lose ``q(q-1)/2`` rotational degrees
    of freedom per component; the skew families do not, since ``Delta`` pins
    the rotation.
    """
    p, q, r = dims[0], dims[1], (dims[2] if len(dims) > 2 else 0)
    family = Family.parse(family)
    per = 2 * p + p * q
    if family.skewed:
        per += q * r
    else:
        per -= q * (q - 1) // 2
    if family.has_nu:
        per += 1
    return (g - 1) + g * per


def sample_mixture(model, n, seed):
    """Draw ``n`` observations and their 1-based component labels.

    Component labels come from one categorical draw; each component's rows
    are then generated from its observed-space CFUST distribution, in
    component order, from the same generator.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.g, size=int(n), p=model.pi)
    Y = np.empty((int(n), model.p))
    for i in range(model.g):
        idx = np.flatnonzero(labels == i)
        if idx.size:
            Y[idx] = _draw(model.observed(i), idx.size, rng)
    return Y, labels + 1
