"""Rank-r projection by alternating polar factorization.

A rank-r matrix is written ``L = U B V^T`` with ``U``, ``V`` orthonormal and
``B`` symmetric positive definite.  One :func:`fixed_rank_opt_step` updates
the three factors in turn, each by an exact closed-form minimiser of
``||M - U B V^T||_F``:

    U <- polar(M V B)
    V <- polar(M^T U B)
    B <- sym(U^T M V)

Iterating the step (:func:`fixed_rank_opt_full`) is an orthogonal iteration
on ``M M^T``; the column/row subspaces converge at rate
``(sigma_{r+1} / sigma_r)^2`` per iteration to those of the truncated SVD.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from .errors import InvalidRank, NotConvergedWarning, RankDeficient, ShapeMismatch
from .manifold import as_matrix, project_spd, project_stiefel

__all__ = [
    "ConvergenceTrace",
    "FixedRankConfig",
    "PolarFactors",
    "fixed_rank_opt_full",
    "fixed_rank_opt_step",
    "fixed_rank_substeps",
    "initial_step",
    "reconstruct",
    "subspace_distance",
]


@dataclass(frozen=True)
class PolarFactors:
    """Factors ``(U, B, V)`` of ``L = U B V^T``.

    ``u`` is m x r and ``v`` is n x r with orthonormal columns; ``b`` is a
    symmetric r x r matrix (positive definite once the iteration settles).
    """

    u: np.ndarray
    b: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        r = self.b.shape[0]
        if self.b.shape != (r, r) or self.u.shape[1] != r or self.v.shape[1] != r:
            raise ShapeMismatch(
                f"inconsistent factor shapes u={self.u.shape} b={self.b.shape} v={self.v.shape}"
            )

    @classmethod
    def identity(cls, m: int, n: int, r: int) -> "PolarFactors":
        """The default start ``U = I_{m x r}``, ``B = I_r``, ``V = I_{n x r}``."""
        if not 1 <= r <= min(m, n):
            raise InvalidRank(f"rank {r} out of range for shape ({m}, {n})")
        return cls(np.eye(m, r), np.eye(r), np.eye(n, r))

    @property
    def rank(self) -> int:
        return self.b.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape[0], self.v.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u @ self.b) @ self.v.T

    def rotate(self, o: np.ndarray) -> "PolarFactors":
        """Representative ``(U O, O^T B O, V O)`` of the same matrix."""
        return PolarFactors(self.u @ o, o.T @ self.b @ o, self.v @ o)


def reconstruct(f: PolarFactors) -> np.ndarray:
    """Dense ``U B V^T``."""
    return f.reconstruct()


@dataclass(frozen=True)
class FixedRankConfig:
    """Stopping rule for :func:`fixed_rank_opt_full`.

    The iteration stops once both subspace changes
    ``||U_i U_i^T - U_{i-1} U_{i-1}^T||_F`` and the V counterpart are at most
    ``tol`` and ``G = U^T M V`` is symmetric to within ``tol * ||G||_F``.
    The second test matters because the subspaces can settle while ``U`` and
    ``V`` are still rotated against each other, which ``B = sym(G)`` cannot
    represent.  ``fallback_seed`` seeds the perturbed start used when the
    identity start is rank deficient for the given matrix.
    """

    tol: float = 1e-12
    max_iter: int = 500
    fallback_seed: int = 0

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class ConvergenceTrace:
    """Per-iteration diagnostics of :func:`fixed_rank_opt_full`.

    ``costs[i]`` is ``||M - U_i B_i V_i^T||_F`` after iteration ``i + 1``,
    evaluated from the r x r identity
    ``||M||^2 - 2 <B, U^T M V> + ||B||^2`` (accurate to about
    ``sqrt(eps) * ||M||``); ``final_cost`` is the exact residual norm of the
    returned factors.  ``asymmetry[i]`` is ``||G - G^T||_F / ||G||_F`` for
    ``G = U^T M V``; it vanishes at the rank-r projection.
    """

    costs: list[float] = field(default_factory=list)
    dist_u: list[float] = field(default_factory=list)
    dist_v: list[float] = field(default_factory=list)
    min_eigenvalues: list[float] = field(default_factory=list)
    asymmetry: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_cost: float = math.nan

    def contraction(self, start: int = 3, stop: int = 10, floor: float = 1e-13) -> float:
        """Geometric-mean ratio ``dist_u[i] / dist_u[i-1]`` over iterations ``start..stop``.

        Iterations are 1-based.  Ratios involving a distance at or below
        ``floor`` are dropped since they only measure rounding.  Returns NaN
        when no usable ratio remains.
        """
        d = np.asarray(self.dist_u)
        logs = []
        for i in range(max(start, 2), min(stop, len(d)) + 1):
            prev, cur = d[i - 2], d[i - 1]
            if prev > floor and cur > floor:
                logs.append(math.log(cur / prev))
        return math.exp(sum(logs) / len(logs)) if logs else math.nan


def subspace_distance(u1, u2) -> float:
    """``||u1 u1^T - u2 u2^T||_F`` for orthonormal ``u1``, ``u2`` of equal shape.

    Evaluated as ``sqrt(2) * ||u1 - u2 (u2^T u1)||_F``, which needs only the
    r x r Gram matrix and keeps full relative accuracy when the subspaces are
    close (the equivalent ``2r - 2||u1^T u2||_F^2`` form cancels to about
    1e-8).
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    if u1.shape != u2.shape:
        raise ShapeMismatch(f"shapes differ: {u1.shape} vs {u2.shape}")
    return math.sqrt(2.0) * float(np.linalg.norm(u1 - u2 @ (u2.T @ u1)))


def _step(m: np.ndarray, u0: np.ndarray, b0: np.ndarray, v0: np.ndarray):
    # Two m x n products per step: M (V0 B0) and M^T (U B0).
    u = project_stiefel(m @ (v0 @ b0))
    mtu = m.T @ u
    v = project_stiefel(mtu @ b0)
    g = mtu.T @ v  # U^T M V
    return u, v, g


def fixed_rank_substeps(m, prev: PolarFactors) -> Iterator[PolarFactors]:
    """Yield the factors after each of the three substeps of one step.

    Each substep is an exact minimiser over its own factor, so
    ``||m - reconstruct(.)||_F`` is nonincreasing along the sequence
    ``prev, *fixed_rank_substeps(m, prev)``.
    """
    m = np.asarray(m, dtype=np.float64)
    u = project_stiefel(m @ (prev.v @ prev.b))
    yield PolarFactors(u, prev.b, prev.v)
    mtu = m.T @ u
    v = project_stiefel(mtu @ prev.b)
    yield PolarFactors(u, prev.b, v)
    b = project_spd(mtu.T @ v).matrix
    yield PolarFactors(u, b, v)


def fixed_rank_opt_step(m, prev: PolarFactors) -> PolarFactors:
    """One alternating update of ``(U, V, B)`` towards the rank-r projection of ``m``.

    Parameters
    ----------
    m : (M, N) array_like
        Matrix to approximate.
    prev : PolarFactors
        Warm start; ``m @ prev.v @ prev.b`` must have full column rank.

    Returns
    -------
    PolarFactors
        Updated factors with ``||m - U B V^T||_F`` no larger than for ``prev``.

    Raises
    ------
    RankDeficient
        If ``m V0 B0`` or ``m^T U B0`` is rank deficient.
    """
    m = np.asarray(m, dtype=np.float64)
    if prev.shape != m.shape:
        raise ShapeMismatch(f"factors of shape {prev.shape} do not match matrix {m.shape}")
    u, v, g = _step(m, prev.u, prev.b, prev.v)
    return PolarFactors(u, 0.5 * (g + g.T), v)


def _perturbed_start(m: int, n: int, r: int, seed: int) -> PolarFactors:
    rng = np.random.default_rng(seed)
    v0 = project_stiefel(np.eye(n, r) + rng.standard_normal((n, r)) / math.sqrt(n))
    return PolarFactors(np.eye(m, r), np.eye(r), v0)


def initial_step(m, r: int, seed: int = 0) -> PolarFactors:
    """First step from the identity start, retrying once from a perturbed ``V0``.

    The identity start fails when ``m[:, :r]`` is rank deficient; the retry
    mixes a seeded Gaussian into ``V0``.  A second failure propagates
    :class:`RankDeficient`.
    """
    m = np.asarray(m, dtype=np.float64)
    rows, cols = m.shape
    try:
        return fixed_rank_opt_step(m, PolarFactors.identity(rows, cols, r))
    except RankDeficient:
        return fixed_rank_opt_step(m, _perturbed_start(rows, cols, r, seed))


def fixed_rank_opt_full(
    m,
    init: Optional[PolarFactors] = None,
    cfg: Optional[FixedRankConfig] = None,
    *,
    r: Optional[int] = None,
    callback: Optional[Callable[[int, PolarFactors], None]] = None,
) -> tuple[PolarFactors, ConvergenceTrace]:
    """Iterate :func:`fixed_rank_opt_step` to the rank-r projection of ``m``.

    Either ``init`` or ``r`` must be given; without ``init`` the identity
    start is used (see :func:`initial_step`).  ``callback(i, factors)`` is
    called after every iteration ``i`` (1-based).

    If ``cfg.max_iter`` is reached first, the last iterate is returned with
    ``trace.converged = False`` and a :class:`NotConvergedWarning` is issued;
    this happens when ``sigma_{r+1}/sigma_r`` is close to 1.
    """
    m = as_matrix(m)
    cfg = cfg or FixedRankConfig()
    if init is None:
        if r is None:
            raise ValueError("pass either init or r")
        f = initial_step(m, r, cfg.fallback_seed)
        prev_u, prev_v = np.eye(m.shape[0], r), np.eye(m.shape[1], r)
        first = True
    else:
        if init.shape != m.shape:
            raise ShapeMismatch(f"factors of shape {init.shape} do not match matrix {m.shape}")
        f, prev_u, prev_v = init, init.u, init.v
        first = False

    norm2 = float(np.vdot(m, m))
    trace = ConvergenceTrace()
    for i in range(1, cfg.max_iter + 1):
        if first:
            first = False
            g = f.u.T @ m @ f.v
        else:
            u, v, g = _step(m, f.u, f.b, f.v)
            f = PolarFactors(u, 0.5 * (g + g.T), v)
        cost2 = norm2 - 2.0 * float(np.vdot(f.b, g)) + float(np.vdot(f.b, f.b))
        trace.costs.append(math.sqrt(max(cost2, 0.0)))
        trace.dist_u.append(subspace_distance(f.u, prev_u))
        trace.dist_v.append(subspace_distance(f.v, prev_v))
        trace.min_eigenvalues.append(float(np.linalg.eigvalsh(f.b)[0]))
        g_norm = float(np.linalg.norm(g))
        trace.asymmetry.append(float(np.linalg.norm(g - g.T)) / g_norm if g_norm > 0 else 0.0)
        trace.iterations = i
        if callback is not None:
            callback(i, f)
        if max(trace.dist_u[-1], trace.dist_v[-1], trace.asymmetry[-1]) <= cfg.tol:
            trace.converged = True
            break
        prev_u, prev_v = f.u, f.v

    trace.final_cost = float(np.linalg.norm(m - f.reconstruct()))
    if not trace.converged:
        warnings.warn(
            f"fixed-rank iteration stopped at max_iter={cfg.max_iter} "
            f"(last subspace change {max(trace.dist_u[-1], trace.dist_v[-1]):.3e}, "
            f"asymmetry {trace.asymmetry[-1]:.3e})",
            NotConvergedWarning,
            stacklevel=2,
        )
    return f, trace
