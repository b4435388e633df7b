"""Pointwise matrix kernels, vectorized over grid batches.

All routines act on arrays of shape (..., r, r) with small r (at most 4)
and are deterministic: no randomized algorithms, no thread-dependent
reductions.
"""

from __future__ import annotations

import numpy as np


def dagger(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose on the trailing two axes."""
    return np.conj(np.swapaxes(m, -1, -2))


def hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dagger(m))


def expm_batched(m: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling-and-squaring with a Taylor core.

    Accurate to ~1e-14 for the well-conditioned small matrices produced by
    the flows (Hermitian up to discretization noise, moderate norm).
    """
    m = np.asarray(m, dtype=np.complex128)
    # blown-up inputs propagate to non-finite output, which flow runners
    # detect; no need for numpy to warn along the way
    with np.errstate(over="ignore", invalid="ignore"):
        norm = np.linalg.norm(m, axis=(-2, -1)).max() if m.size else 0.0
        if not np.isfinite(norm):
            return np.full_like(m, np.nan)
        # scale so the Taylor argument has norm <= 0.25
        s = max(0, int(np.ceil(np.log2(max(norm, 1e-300) / 0.25)))) \
            if norm > 0.25 else 0
        a = m / (2.0**s)
        r = m.shape[-1]
        eye = np.broadcast_to(np.eye(r, dtype=np.complex128), m.shape)
        out = eye.copy()
        term = eye.copy()
        for k in range(1, 15):
            term = term @ a / k
            out = out + term
        for _ in range(s):
            out = out @ out
    return out


def sqrtm_hpd(m: np.ndarray) -> np.ndarray:
    """Principal square root of Hermitian positive-definite matrices."""
    w, v = np.linalg.eigh(hermitize(m))
    if np.any(w <= 0):
        raise ValueError("matrix not positive definite: min eigenvalue "
                         f"{w.min():.3e}")
    return (v * np.sqrt(w)[..., None, :]) @ dagger(v)


def min_eigvalsh(m: np.ndarray) -> float:
    """Smallest eigenvalue over the whole batch of Hermitian matrices."""
    return float(np.linalg.eigvalsh(hermitize(m)).min())


def trace(m: np.ndarray) -> np.ndarray:
    return np.trace(m, axis1=-2, axis2=-1)


def inv(m: np.ndarray) -> np.ndarray:
    return np.linalg.inv(m)
