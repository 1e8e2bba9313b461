"""Synthetic test problems and recovery metrics.

Problems follow the usual robust-PCA benchmark: ``L = A B^T`` with standard
Gaussian ``A`` (m x r) and ``B`` (n x r), and ``S`` supported on
``round(frac * m * n)`` distinct positions chosen uniformly at random, with
values uniform in ``[-1, 1]``.

Random numbers come from ``numpy.random.default_rng(seed)`` (PCG64 bit
generator, ziggurat normals), drawn in the order A, B, support, values, so a
seed reproduces the same problem bit for bit with a given numpy release.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidFraction, InvalidRank, ShapeMismatch

__all__ = [
    "DEFAULT_EPSILON",
    "RecoveryMetrics",
    "SyntheticProblem",
    "generate_problem",
    "planted_spectrum",
    "phase_metric",
    "recovery_errors",
    "relative_error",
]

DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class SyntheticProblem:
    l_true: np.ndarray
    s_true: np.ndarray
    m: np.ndarray
    r: int
    outlier_fraction: float
    seed: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.m.shape


@dataclass(frozen=True)
class RecoveryMetrics:
    err_l: float
    err_s: float
    phase_err: float
    wall_time: float
    iterations: int


def generate_problem(m: int, n: int, r: int, outlier_fraction: float, seed: int) -> SyntheticProblem:
    """Draw a rank-``r`` plus sparse-outlier test matrix.

    Examples
    --------
    >>> p = generate_problem(50, 40, 5, 0.1, seed=0)
    >>> int(np.count_nonzero(p.s_true))
    200
    """
    if m < 1 or n < 1:
        raise ValueError(f"shape must be positive, got ({m}, {n})")
    if not 1 <= r <= min(m, n):
        raise InvalidRank(f"rank {r} out of range for shape ({m}, {n})")
    if not 0.0 <= outlier_fraction <= 1.0:
        raise InvalidFraction(f"outlier fraction must lie in [0, 1], got {outlier_fraction}")

    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, r))
    b = rng.standard_normal((n, r))
    l_true = a @ b.T

    count = int(round(outlier_fraction * m * n))
    s_flat = np.zeros(m * n)
    support = rng.choice(m * n, size=count, replace=False)
    values = rng.uniform(-1.0, 1.0, size=count)
    # A uniform draw of exactly 0.0 would drop out of the support count.
    values[values == 0.0] = 1.0
    s_flat[support] = values
    s_true = s_flat.reshape(m, n)
    return SyntheticProblem(l_true, s_true, l_true + s_true, r, float(outlier_fraction), int(seed))


def relative_error(est, truth) -> float:
    """``||est - truth||_F / ||truth||_F``, or the absolute error if ``truth`` is zero."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise ShapeMismatch(f"shapes differ: {est.shape} vs {truth.shape}")
    diff = float(np.linalg.norm(est - truth))
    denom = float(np.linalg.norm(truth))
    return diff / denom if denom > 0 else diff


def recovery_errors(result, truth: SyntheticProblem) -> tuple[float, float]:
    """Relative Frobenius errors ``(err_l, err_s)`` of a decomposition against the truth."""
    return relative_error(result.l, truth.l_true), relative_error(result.s, truth.s_true)


def phase_metric(s, s_star, epsilon: float = DEFAULT_EPSILON) -> float:
    """Mean of ``|s - s_star|`` over entries whose deviation exceeds ``epsilon``.

    Deviations at or below ``epsilon`` count as zero; the sum is divided by
    the total number of entries ``m * n``.
    """
    s = np.asarray(s, dtype=np.float64)
    s_star = np.asarray(s_star, dtype=np.float64)
    if s.shape != s_star.shape:
        raise ShapeMismatch(f"shapes differ: {s.shape} vs {s_star.shape}")
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    dev = np.abs(s - s_star)
    return float(np.where(dev > epsilon, dev, 0.0).sum() / dev.size)


def planted_spectrum(
    m: int,
    n: int,
    r: int,
    gap: float,
    seed: int = 0,
    exact_rank: bool = False,
    tail_decay: float = 0.5,
    top: float = 1.2,
) -> tuple[np.ndarray, np.ndarray]:
    """Matrix with prescribed singular values and random singular vectors.

    The leading ``r`` singular values run linearly from ``top`` down to
    ``sigma_r = 1``; the tail is ``gap * tail_decay**j`` for ``j = 0, 1, ...``
    so that ``sigma_{r+1} / sigma_r = gap``.  With ``exact_rank`` the tail
    is zero.  Returns ``(matrix, sigma)``.

    Notes
    -----
    The subspaces of the polar iteration contract at ``gap**2`` per step,
    but ``U B V^T`` also carries a rotation mismatch between ``U`` and ``V``
    that decays at roughly ``((top - 1) / (top + 1))**2``.  Keeping ``top``
    close to 1 makes the reconstruction error follow the subspace rate.
    """
    k = min(m, n)
    if not 1 <= r <= k:
        raise InvalidRank(f"rank {r} out of range for shape ({m}, {n})")
    if not top >= 1.0:
        raise ValueError(f"top must be >= 1, got {top}")
    if not 0.0 <= gap < 1.0:
        raise ValueError(f"gap must lie in [0, 1), got {gap}")
    rng = np.random.default_rng(seed)
    u, _ = np.linalg.qr(rng.standard_normal((m, k)))
    v, _ = np.linalg.qr(rng.standard_normal((n, k)))
    sigma = np.zeros(k)
    sigma[:r] = np.linspace(top, 1.0, r) if r > 1 else 1.0
    if not exact_rank:
        sigma[r:] = gap * tail_decay ** np.arange(k - r)
    return (u * sigma) @ v.T, sigma
