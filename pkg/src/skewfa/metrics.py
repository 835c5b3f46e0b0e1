"""External clustering indices: CCR, ARI and AMI.

All three are invariant to relabelling either partition.  AMI uses the
exact expected mutual information under the permutation (hypergeometric)
model and normalises by ``max(H(pred), H(truth))``.
"""

import itertools

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import comb, gammaln, xlogy

EXHAUSTIVE_MAX = 8


def _contingency(pred, truth):
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if pred.size != truth.size:
        raise ValueError(f"label vectors differ in length: {pred.size} vs {truth.size}")
    if pred.size == 0:
        raise ValueError("label vectors are empty")
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(truth, return_inverse=True)
    K = np.zeros((pi.max() + 1, ti.max() + 1), dtype=np.int64)
    np.add.at(K, (pi, ti), 1)
    return K


def ccr(pred, truth):
    """Correct classification rate under the best matching of labels.

    Exhaustive over permutations when both partitions have at most eight
    labels, otherwise an optimal assignment (same maximum).
    """
    K = _contingency(pred, truth)
    n = K.sum()
    k = max(K.shape)
    S = np.zeros((k, k), dtype=np.int64)
    S[: K.shape[0], : K.shape[1]] = K
    if k <= EXHAUSTIVE_MAX:
        perms = np.array(list(itertools.permutations(range(k))))
        best = S[np.arange(k)[None, :], perms].sum(axis=1).max()
    else:
        rows, cols = linear_sum_assignment(-S)
        best = S[rows, cols].sum()
    return float(best) / float(n)


def ari(pred, truth):
    """Adjusted Rand index from pair counts."""
    K = _contingency(pred, truth)
    n = K.sum()
    sum_ij = comb(K, 2).sum()
    sum_a = comb(K.sum(axis=1), 2).sum()
    sum_b = comb(K.sum(axis=0), 2).sum()
    total = comb(n, 2)
    expected = sum_a * sum_b / total if total else 0.0
    top = 0.5 * (sum_a + sum_b)
    if top == expected:
        return 1.0
    return float((sum_ij - expected) / (top - expected))


def _entropy(counts, n):
    p = counts / n
    return float(-np.sum(xlogy(p, p)))


def expected_mutual_info(a, b, n):
    """Exact expected mutual information for marginals ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    total = 0.0
    lg_n = gammaln(n + 1)
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            k = np.arange(lo, hi + 1, dtype=float)
            log_p = (
                gammaln(ai + 1) + gammaln(bj + 1) + gammaln(n - ai + 1) + gammaln(n - bj + 1)
                - lg_n - gammaln(k + 1) - gammaln(ai - k + 1) - gammaln(bj - k + 1) - gammaln(n - ai - bj + k + 1)
            )
            total += float(np.sum(k / n * np.log(n * k / (ai * bj)) * np.exp(log_p)))
    return total


def mutual_info(K):
    n = K.sum()
    a = K.sum(axis=1, keepdims=True)
    b = K.sum(axis=0, keepdims=True)
    nz = K > 0
    return float(np.sum(K[nz] / n * np.log(n * K[nz] / (a @ b)[nz])))


def ami(pred, truth):
    """Adjusted mutual information, max-entropy normalisation."""
    K = _contingency(pred, truth)
    n = int(K.sum())
    if K.shape[0] == K.shape[1] == 1:
        return 1.0
    a, b = K.sum(axis=1), K.sum(axis=0)
    mi = mutual_info(K)
    emi = expected_mutual_info(a, b, n)
    h = max(_entropy(a, n), _entropy(b, n))
    denom = h - emi
    if abs(denom) < np.finfo(float).eps:
        return 1.0 if abs(mi - h) < 1e-12 else 0.0
    return float((mi - emi) / denom)
