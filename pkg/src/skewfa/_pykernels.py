"""Pure numpy implementations of the orthant-probability kernels.

These mirror ``_ckernels.pyx`` one for one and are used when the compiled
extension is unavailable (or when ``SKEWFA_PURE_PYTHON=1``).
"""

import numpy as np
from scipy.special import ndtr, owens_t

# nudge for exact zeros in the Owen's T representation (keeps the h -> 0+ limit)
_TINY = 1e-290
_TVN_NODES = 64
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_TVN_NODES)


def bvn_cdf(h, k, rho):
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation rho.

    Vectorised over broadcastable ``h``, ``k`` and ``rho``; uses Owen's T
    function, which is accurate to about 1e-16 absolute.
    """
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(rho, dtype=float)
    )
    out = np.empty(h.shape)
    rho = np.clip(rho, -1.0, 1.0)
    s = np.sqrt((1.0 - rho) * (1.0 + rho))

    fin = np.isfinite(h) & np.isfinite(k) & (s > 0)
    if fin.any():
        hf, kf, rf, sf = h[fin], k[fin], rho[fin], s[fin]
        hf = np.where(hf == 0.0, _TINY, hf)
        kf = np.where(kf == 0.0, _TINY, kf)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            ah = (kf / hf - rf) / sf
            ak = (hf / kf - rf) / sf
        beta = np.where((hf > 0) == (kf > 0), 0.0, 0.5)
        val = 0.5 * ndtr(hf) + 0.5 * ndtr(kf) - owens_t(hf, ah) - owens_t(kf, ak) - beta
        out[fin] = val

    rest = ~fin
    if rest.any():
        hr, kr, rr = h[rest], k[rest], rho[rest]
        ph, pk = ndtr(hr), ndtr(kr)
        val = np.where(rr > 0, np.minimum(ph, pk), np.maximum(ph + pk - 1.0, 0.0))
        val = np.where(hr == np.inf, pk, val)
        val = np.where(kr == np.inf, ph, val)
        val = np.where((hr == -np.inf) | (kr == -np.inf), 0.0, val)
        out[rest] = val

    return np.clip(out, 0.0, np.minimum(ndtr(h), ndtr(k)))


def _tvn_order(R):
    # condition on the coordinate whose correlations with the others are mildest
    score = [max(abs(R[i, j]) for j in range(3) if j != i) for i in range(3)]
    i = int(np.argmin(score))
    return [i] + [j for j in range(3) if j != i]


def tvn_cdf(H, R):
    """P(X <= h) for a standard trivariate normal; ``H`` is (m, 3), ``R`` shared.

    One-dimensional Gauss-Legendre integration over the conditioning
    coordinate of a bivariate normal CDF.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    order = _tvn_order(R)
    H = H[:, order]
    R = R[np.ix_(order, order)]
    r12, r13, r23 = R[0, 1], R[0, 2], R[1, 2]
    s2 = np.sqrt(max(1.0 - r12 * r12, 1e-300))
    s3 = np.sqrt(max(1.0 - r13 * r13, 1e-300))
    rho = np.clip((r23 - r12 * r13) / (s2 * s3), -1.0, 1.0)

    h1 = np.clip(H[:, 0], -40.0, 9.0)
    lo = np.where(h1 >= -1.0, -9.0, h1 - np.minimum(8.0, 40.0 / np.abs(h1)))
    half = 0.5 * (h1 - lo)
    x = lo[:, None] + half[:, None] * (_GL_X[None, :] + 1.0)
    dens = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    inner = bvn_cdf(
        (H[:, 1:2] - r12 * x) / s2,
        (H[:, 2:3] - r13 * x) / s3,
        rho,
    )
    val = half * np.sum(_GL_W[None, :] * dens * inner, axis=1)
    val = np.where(H[:, 0] == -np.inf, 0.0, val)
    return np.clip(val, 0.0, 1.0)


def phi_grid(H, s, R):
    """Matrix of Phi_r(s_k * H_j; R) for r in {1, 2, 3}; shape (n, N)."""
    H = np.asarray(H, dtype=float)
    s = np.asarray(s, dtype=float)
    n, r = H.shape
    X = H[:, None, :] * s[None, :, None]
    if r == 1:
        return ndtr(X[..., 0])
    if r == 2:
        return bvn_cdf(X[..., 0], X[..., 1], R[0, 1])
    if r == 3:
        return tvn_cdf(X.reshape(-1, 3), R).reshape(n, s.size)
    raise ValueError(f"phi_grid supports r <= 3, got r={r}")


def mixture_sums(H, s, W, R):
    """Weighted node sums ``sum_k W[k, m] * Phi_r(s_k H_j; R)``; shape (n, M)."""
    return phi_grid(H, s, R) @ np.asarray(W, dtype=float)
