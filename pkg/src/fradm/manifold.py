"""Closed-form projectors used by the fixed-rank solvers.

* :func:`project_stiefel` -- nearest matrix with orthonormal columns
  (orthogonal Procrustes / polar factor).
* :func:`project_spd` -- symmetric part, with its smallest eigenvalue
  reported but not enforced.
* :func:`soft_threshold` -- entrywise l1 proximal operator.
* :func:`tsvd_oracle` -- exact truncated SVD, the Eckart-Young reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidRank, NonFinite, NonSquare, RankDeficient

__all__ = [
    "RANK_TOL",
    "SpdCandidate",
    "SvdTriplet",
    "as_matrix",
    "project_spd",
    "project_stiefel",
    "soft_threshold",
    "tsvd_oracle",
]

# Relative to the largest singular value.
RANK_TOL = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a 2-D float64 array, rejecting NaN/Inf and empty shapes."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf entries")
    return arr


@dataclass(frozen=True)
class SpdCandidate:
    """Symmetric r x r matrix together with its smallest eigenvalue.

    Positive definiteness is recorded, not enforced: early iterates of the
    fixed-rank solver may be indefinite.
    """

    matrix: np.ndarray
    min_eigenvalue: float

    @property
    def is_positive_definite(self) -> bool:
        return self.min_eigenvalue > 0.0


@dataclass(frozen=True)
class SvdTriplet:
    """Leading ``r`` singular triplets; ``sigma`` is nonincreasing."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T


def project_stiefel(a) -> np.ndarray:
    """Project a full-column-rank ``p x r`` matrix onto the Stiefel manifold.

    Returns ``Q @ S.T`` from the skinny SVD ``a = Q diag(s) S.T``, i.e. the
    polar factor ``a (a^T a)^{-1/2}``, which solves
    ``max_{U^T U = I} trace(U^T a)``.

    Raises
    ------
    RankDeficient
        If the smallest singular value of ``a`` is at most ``RANK_TOL``
        times the largest.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] > a.shape[0]:
        raise RankDeficient(f"cannot have orthonormal columns with shape {a.shape}")
    q, s, st = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= RANK_TOL * s[0]:
        raise RankDeficient(
            f"matrix of shape {a.shape} is rank deficient "
            f"(sigma_min/sigma_max = {s[-1] / s[0] if s.size and s[0] else 0.0:.3e})"
        )
    return q @ st


def project_spd(a) -> SpdCandidate:
    """Symmetric part ``(a + a^T)/2`` of a square matrix.

    This is the exact minimiser of ``||M - U B V^T||_F`` over symmetric ``B``
    when ``U`` and ``V`` have orthonormal columns and ``a = U^T M V``.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {a.shape}")
    sym = 0.5 * (a + a.T)
    return SpdCandidate(sym, float(np.linalg.eigvalsh(sym)[0]))


def soft_threshold(m, delta: float) -> np.ndarray:
    """Entrywise shrinkage ``max(0, m - delta) + min(0, m + delta)``."""
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    m = np.asarray(m, dtype=np.float64)
    return np.maximum(m - delta, 0.0) + np.minimum(m + delta, 0.0)


def tsvd_oracle(m, r: int) -> SvdTriplet:
    """Best rank-``r`` approximation factors of ``m`` from a full SVD."""
    m = as_matrix(m)
    if not 1 <= r <= min(m.shape):
        raise InvalidRank(f"rank {r} out of range for shape {m.shape}")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return SvdTriplet(u[:, :r].copy(), s[:r].copy(), vt[:r].T.copy())
