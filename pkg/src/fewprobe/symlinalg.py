"""Dense symmetric/PSD linear algebra at embedding dimension d.

Covariance, shrinkage, Cholesky factorization with exact log-determinant,
inversion, quadratic forms, and a power-iteration dominant eigenvalue.
Matrices are plain float64 numpy arrays; all functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimMismatch, EmptySet, NoConvergence, NotPositiveDefinite

PIVOT_THRESHOLD = 1e-12
POWER_ITERATION_CAP = 10_000


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular Cholesky factor L with M = L @ L.T and cached log det."""

    lower: np.ndarray
    log_det: float

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


def empirical_covariance(points: np.ndarray | Sequence[np.ndarray],
                         mean: np.ndarray) -> np.ndarray:
    """Average outer product of the points centered at ``mean``.

    This is the maximum-likelihood covariance for a Gaussian with known
    mean ``mean`` (no Bessel correction).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[None, :]
    if points.size == 0 or points.shape[0] == 0:
        raise EmptySet("covariance of an empty point set")
    mean = np.asarray(mean, dtype=np.float64)
    if points.shape[1] != mean.shape[0]:
        raise DimMismatch(
            f"points have dim {points.shape[1]}, mean has dim {mean.shape[0]}"
        )
    centered = points - mean
    cov = centered.T @ centered / points.shape[0]
    return (cov + cov.T) / 2.0


def shrink(sigma: np.ndarray, lam: float) -> np.ndarray:
    """Blend toward the identity: (1 - lam) * sigma + lam * I.

    For lam > 0 and PSD sigma the result is strictly positive-definite
    with smallest eigenvalue >= lam.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"shrinkage must lie in [0, 1], got {lam}")
    sigma = np.asarray(sigma, dtype=np.float64)
    return (1.0 - lam) * sigma + lam * np.eye(sigma.shape[0])


def spd_factorize(m: np.ndarray) -> SpdFactor:
    """Cholesky-factorize a symmetric positive-definite matrix.

    Raises ``NotPositiveDefinite`` (with the failing pivot index) when any
    pivot falls at or below 1e-12.
    """
    m = np.asarray(m, dtype=np.float64)
    d = m.shape[0]
    L = np.zeros((d, d))
    for j in range(d):
        pivot = m[j, j] - L[j, :j] @ L[j, :j]
        if pivot <= PIVOT_THRESHOLD:
            raise NotPositiveDefinite(j, float(pivot))
        ljj = np.sqrt(pivot)
        L[j, j] = ljj
        if j + 1 < d:
            L[j + 1:, j] = (m[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / ljj
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    L.setflags(write=False)
    return SpdFactor(lower=L, log_det=log_det)


def spd_inverse(f: SpdFactor) -> np.ndarray:
    """Invert M = L @ L.T from its factor via two triangular solves."""
    identity = np.eye(f.dim)
    y = solve_triangular(f.lower, identity, lower=True)
    inv = solve_triangular(f.lower.T, y, lower=False)
    return (inv + inv.T) / 2.0


def spd_solve(f: SpdFactor, b: np.ndarray) -> np.ndarray:
    """Solve M x = b from the factor of M."""
    y = solve_triangular(f.lower, b, lower=True)
    return solve_triangular(f.lower.T, y, lower=False)


def mahalanobis_sq(z: np.ndarray, w: np.ndarray, m: np.ndarray) -> float:
    """Quadratic form (z - w)^T m (z - w); squared Euclidean when m = I."""
    z = np.asarray(z, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if z.shape != w.shape or m.shape != (z.shape[0], z.shape[0]):
        raise DimMismatch(
            f"shapes z{z.shape}, w{w.shape}, m{m.shape} do not agree"
        )
    u = z - w
    return float(u @ m @ u)


def mahalanobis_sq_batch(points: np.ndarray, w: np.ndarray,
                         m: np.ndarray) -> np.ndarray:
    """Row-wise quadratic forms for an (n, d) stack of points."""
    u = points - w
    return np.einsum("ij,jk,ik->i", u, m, u)


def max_eigenvalue(m: np.ndarray, tol: float = 1e-9,
                   seed: int = 0,
                   v0: np.ndarray | None = None,
                   max_iter: int = POWER_ITERATION_CAP) -> float:
    """Dominant eigenvalue of a symmetric matrix by power iteration.

    For a PSD matrix this is the largest eigenvalue. ``v0`` warm-starts the
    iteration (useful when tracking a slowly changing matrix across epochs).
    Raises ``NoConvergence`` past the iteration cap.
    """
    m = np.asarray(m, dtype=np.float64)
    d = m.shape[0]
    if v0 is not None:
        v = np.asarray(v0, dtype=np.float64).copy()
    else:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        mv = m @ v
        est = float(v @ mv)
        # Rayleigh-quotient residual bounds |est - lambda_max|; robust to
        # clustered top eigenvalues where the iterate itself converges slowly
        if np.linalg.norm(mv - est * v) <= tol * max(1.0, abs(est)):
            return est
        norm = np.linalg.norm(mv)
        if norm == 0.0:
            return 0.0
        v = mv / norm
    raise NoConvergence(
        f"power iteration did not converge within {max_iter} iterations"
    )


def dominant_eigenpair(m: np.ndarray, tol: float = 1e-9, seed: int = 0,
                       v0: np.ndarray | None = None,
                       strict: bool = True) -> tuple[float, np.ndarray]:
    """Like ``max_eigenvalue`` but also returns the eigenvector estimate.

    With ``strict=False`` the current Rayleigh-quotient estimate is returned
    at the iteration cap instead of raising; for a symmetric matrix it never
    exceeds the true maximum. Used for per-epoch spectrum tracking, where
    eigenvalue clusters can make full convergence arbitrarily slow.
    """
    m = np.asarray(m, dtype=np.float64)
    d = m.shape[0]
    if v0 is not None:
        v = np.asarray(v0, dtype=np.float64).copy()
    else:
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(d)
    v /= np.linalg.norm(v)
    for _ in range(POWER_ITERATION_CAP):
        mv = m @ v
        est = float(v @ mv)
        if np.linalg.norm(mv - est * v) <= tol * max(1.0, abs(est)):
            return est, v
        norm = np.linalg.norm(mv)
        if norm == 0.0:
            return 0.0, v
        v = mv / norm
    if not strict:
        return est, v
    raise NoConvergence(
        f"power iteration did not converge within {POWER_ITERATION_CAP} iterations"
    )


def frobenius_norm(m: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(m, dtype=np.float64)))))
