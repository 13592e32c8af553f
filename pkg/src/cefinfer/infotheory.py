"""Entropy, relative entropy and the multinomial log-likelihood (natural logs)."""

from __future__ import annotations

import numpy as np

from .tables import FreqTensor


def _values(x) -> np.ndarray:
    if isinstance(x, FreqTensor):
        return x.flat()
    return np.asarray(x, dtype=float).ravel()


def shannon_entropy(q) -> float:
    """-sum q log q with 0 log 0 = 0."""
    q = _values(q)
    nz = q > 0
    return float(-np.sum(q[nz] * np.log(q[nz])))


def relative_entropy(p, q) -> float:
    """KL(p || q) = sum p log(p/q); +inf when p has mass where q has none."""
    if isinstance(p, FreqTensor) and isinstance(q, FreqTensor) and p.axis_names != q.axis_names:
        raise ValueError(f"axis mismatch: {p.axis_names} vs {q.axis_names}")
    p, q = _values(p), _values(q)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    nz = p > 0
    if np.any(q[nz] <= 0):
        return float("inf")
    # tiny negative values come from rounding only
    return max(float(np.sum(p[nz] * (np.log(p[nz]) - np.log(q[nz])))), 0.0)


def multinomial_loglik(p, q, n: float) -> float:
    """-n KL(p || q), the multinomial log-likelihood up to a p,n-only constant."""
    if n < 0:
        raise ValueError(f"sample size must be non-negative, got {n}")
    kl = relative_entropy(p, q)
    if np.isinf(kl):
        return float("-inf")
    return -n * kl
