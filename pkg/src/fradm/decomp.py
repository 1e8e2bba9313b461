"""Sparse + fixed-rank decomposition ``M = L + S`` with ``rank(L) = r``.

Solves ``min ||S||_1  s.t.  M = L + S, rank(L) = r`` by alternating
minimisation of the augmented Lagrangian

    mu/2 ||M - L - S||_F^2 + ||S||_1 + <Y, M - L - S>

with a geometrically increasing penalty ``mu``.  The L-update is a single
warm-started polar step (:func:`fr_adm`) or an exact truncated SVD
(:func:`fr_adm_exact`, the reference variant).  :func:`fr_nys` runs the
solver on a row block and a column block of a row-shuffled ``M`` and glues
them with a Nystrom pseudo-inverse.
"""

from __future__ import annotations

import enum
import math
import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import BlockRankDeficient, InvalidRank, NotConvergedWarning, ShapeMismatch
from .fixedrank import (
    FixedRankConfig,
    PolarFactors,
    fixed_rank_opt_full,
    fixed_rank_opt_step,
    initial_step,
)
from .manifold import as_matrix, soft_threshold, tsvd_oracle

__all__ = [
    "AdmConfig",
    "Decomposition",
    "KktResiduals",
    "NystromConfig",
    "Projection",
    "fr_adm",
    "fr_adm_exact",
    "fr_nys",
    "kkt_residuals",
    "nystrom_pinv",
]


# Subspace-change tolerance for the cold-start projection of the first iteration.
COLD_START_TOL = 1e-10


class Projection(str, enum.Enum):
    POLAR_STEP = "polar"
    EXACT_TSVD = "exact"


@dataclass(frozen=True)
class AdmConfig:
    """Penalty schedule and stopping rule for :func:`fr_adm`.

    ``mu_{k+1} = min(mu_bar, rho * mu_k)`` starting from ``mu0``; iteration
    stops when ``||M - L - S||_F / ||M||_F < tol_primal``.

    Once ``mu`` has sat at ``mu_bar`` for ``stall_window`` iterations, the run
    is abandoned (``converged = False``) if the best residual of the last
    ``stall_window`` iterations is not at least 2x below the best one before
    them.  Runs outside the recovery region stagnate this way long before
    ``max_iter``.  ``stall_window = 0`` disables the check.
    """

    mu0: float = 1.0
    rho: float = 1.6
    mu_bar: float = 1e6
    tol_primal: float = 1e-13
    max_iter: int = 300
    projection: Projection = Projection.POLAR_STEP
    cold_start: str = "full"
    fallback_seed: int = 0
    stall_window: int = 60

    def __post_init__(self):
        if self.stall_window < 0:
            raise ValueError(f"stall_window must be >= 0, got {self.stall_window}")
        if not self.mu0 > 0:
            raise ValueError(f"mu0 must be positive, got {self.mu0}")
        if not self.rho > 1:
            raise ValueError(f"rho must exceed 1, got {self.rho}")
        if not self.mu_bar >= self.mu0:
            raise ValueError(f"mu_bar ({self.mu_bar}) must be >= mu0 ({self.mu0})")
        if not self.tol_primal > 0:
            raise ValueError(f"tol_primal must be positive, got {self.tol_primal}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.cold_start not in ("full", "step"):
            raise ValueError(f"cold_start must be 'full' or 'step', got {self.cold_start!r}")
        object.__setattr__(self, "projection", Projection(self.projection))


@dataclass(frozen=True)
class NystromConfig:
    """Block width ``l = oversample_k * r``, pseudo-inverse cutoff, shuffle seed."""

    oversample_k: int = 10
    pinv_threshold: float = 1e-12
    shuffle_seed: int = 0

    def __post_init__(self):
        if self.oversample_k < 1:
            raise ValueError(f"oversample_k must be >= 1, got {self.oversample_k}")
        if not self.pinv_threshold > 0:
            raise ValueError(f"pinv_threshold must be positive, got {self.pinv_threshold}")


@dataclass
class Decomposition:
    """Result of a decomposition run.

    ``l = factors.reconstruct()``.  ``mu_history[k]`` is the penalty used in
    iteration ``k`` and ``primal_residual_history[k]`` the relative residual
    ``||M - L - S||_F / ||M||_F`` after it.  For :func:`fr_nys`, ``y`` is
    zero, the per-block runs are in ``blocks`` and ``permutation`` holds the
    row shuffle.
    """

    l: np.ndarray
    s: np.ndarray
    y: np.ndarray
    factors: PolarFactors
    iterations: int
    converged: bool
    primal_residual_history: list[float] = field(default_factory=list)
    mu_history: list[float] = field(default_factory=list)
    permutation: Optional[np.ndarray] = None
    blocks: tuple["Decomposition", ...] = ()
    l_update_seconds: float = 0.0
    wall_time: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.primal_residual_history[-1] if self.primal_residual_history else math.nan

    @property
    def mu_final(self) -> float:
        """Penalty of the last completed iteration (NaN if none ran)."""
        return self.mu_history[-1] if self.mu_history else math.nan


@dataclass(frozen=True)
class KktResiduals:
    """First-order optimality residuals of a decomposition.

    ``r_uty = ||U^T Y||``, ``r_yv = ||Y V||``,
    ``r_prox = ||S - soft_{1/mu}(S + Y/mu)||`` (all Frobenius) and
    ``r_feas = ||M - L - S|| / ||M||``.
    """

    r_uty: float
    r_yv: float
    r_prox: float
    r_feas: float
    m_norm: float

    def normalized(self) -> "KktResiduals":
        """The three dimensional residuals divided by ``||M||_F``."""
        scale = self.m_norm if self.m_norm > 0 else 1.0
        return replace(
            self,
            r_uty=self.r_uty / scale,
            r_yv=self.r_yv / scale,
            r_prox=self.r_prox / scale,
        )

    def max_normalized(self) -> float:
        n = self.normalized()
        return max(n.r_uty, n.r_yv, n.r_prox, n.r_feas)


def _check_rank(shape, r):
    if not 1 <= r <= min(shape):
        raise InvalidRank(f"rank {r} out of range for shape {shape}")


def _zero_result(m: np.ndarray, r: int) -> Decomposition:
    rows, cols = m.shape
    zero = np.zeros_like(m)
    f = PolarFactors(np.eye(rows, r), np.zeros((r, r)), np.eye(cols, r))
    return Decomposition(zero, zero.copy(), zero.copy(), f, 0, True, [0.0], [])


def _run_adm(m: np.ndarray, r: int, cfg: AdmConfig) -> Decomposition:
    t_start = time.perf_counter()
    m = as_matrix(m, "M")
    _check_rank(m.shape, r)
    m_norm = float(np.linalg.norm(m))
    if m_norm == 0.0:
        return _zero_result(m, r)

    s = np.zeros_like(m)
    y = np.zeros_like(m)
    mu = cfg.mu0
    factors = None
    res_hist: list[float] = []
    mu_hist: list[float] = []
    t_l = 0.0
    converged = False
    capped = 0  # iterations run with mu == mu_bar
    w = cfg.stall_window
    for k in range(cfg.max_iter):
        x = m - s + y / mu
        t0 = time.perf_counter()
        if cfg.projection is Projection.EXACT_TSVD:
            t = tsvd_oracle(x, r)
            factors = PolarFactors(t.u, np.diag(t.sigma), t.v)
        elif factors is None and cfg.cold_start == "full":
            factors, _ = fixed_rank_opt_full(
                x, r=r, cfg=FixedRankConfig(tol=COLD_START_TOL, fallback_seed=cfg.fallback_seed)
            )
        elif factors is None:
            factors = initial_step(x, r, cfg.fallback_seed)
        else:
            factors = fixed_rank_opt_step(x, factors)
        l = factors.reconstruct()
        t_l += time.perf_counter() - t0

        s = soft_threshold(m - l + y / mu, 1.0 / mu)
        resid = m - l - s
        y = y + mu * resid
        mu_hist.append(mu)
        res_hist.append(float(np.linalg.norm(resid)) / m_norm)
        capped = capped + 1 if mu >= cfg.mu_bar else 0
        mu = min(cfg.mu_bar, cfg.rho * mu)
        if res_hist[-1] < cfg.tol_primal:
            converged = True
            break
        if w and capped >= w and min(res_hist[-w:]) > 0.5 * min(res_hist[:-w]):
            break

    if not converged:
        warnings.warn(
            f"ADM stopped after {len(res_hist)} iterations "
            f"({'stalled' if len(res_hist) < cfg.max_iter else 'max_iter'}) "
            f"with relative residual {res_hist[-1]:.3e}",
            NotConvergedWarning,
            stacklevel=3,
        )
    return Decomposition(
        l=l,
        s=s,
        y=y,
        factors=factors,
        iterations=len(res_hist),
        converged=converged,
        primal_residual_history=res_hist,
        mu_history=mu_hist,
        l_update_seconds=t_l,
        wall_time=time.perf_counter() - t_start,
    )


def fr_adm(m, r: int, cfg: Optional[AdmConfig] = None) -> Decomposition:
    """Decompose ``m`` into rank-``r`` ``L`` plus sparse ``S``.

    Each iteration performs

    1. ``L`` <- one polar step on ``M - S + Y/mu`` warm-started from the
       previous factors (identity start on the first iteration),
    2. ``S`` <- ``soft_threshold(M - L + Y/mu, 1/mu)``,
    3. ``Y`` <- ``Y + mu (M - L - S)``,
    4. ``mu`` <- ``min(mu_bar, rho mu)``.

    ``cfg.projection`` selects the L-update; use :func:`fr_adm_exact` for the
    exact-TSVD variant.  If ``max_iter`` is hit, the last iterate is returned
    with ``converged = False`` and a :class:`NotConvergedWarning`.

    Raises
    ------
    InvalidRank
        If ``r`` is not in ``[1, min(m.shape)]``.
    RankDeficient
        If the polar projection meets a rank-deficient matrix even after the
        perturbed restart.
    """
    return _run_adm(m, r, cfg or AdmConfig())


def fr_adm_exact(m, r: int, cfg: Optional[AdmConfig] = None) -> Decomposition:
    """:func:`fr_adm` with the L-update replaced by an exact truncated SVD."""
    cfg = replace(cfg or AdmConfig(), projection=Projection.EXACT_TSVD)
    return _run_adm(m, r, cfg)


def nystrom_pinv(w: np.ndarray, threshold: float, r: int) -> np.ndarray:
    """Pseudo-inverse of the intersection block, zeroing ``sigma < threshold * sigma_max``.

    Raises :class:`BlockRankDeficient` if fewer than ``r`` singular values
    survive.
    """
    u, sv, vt = np.linalg.svd(w, full_matrices=False)
    keep = sv > threshold * sv[0] if sv.size and sv[0] > 0 else np.zeros(sv.shape, dtype=bool)
    if int(keep.sum()) < r:
        raise BlockRankDeficient(
            f"intersection block has numerical rank {int(keep.sum())} < r = {r}"
        )
    return (vt[keep].T / sv[keep]) @ u[:, keep].T


def fr_nys(
    m,
    r: int,
    adm: Optional[AdmConfig] = None,
    nys: Optional[NystromConfig] = None,
) -> Decomposition:
    """Nystrom-accelerated decomposition.

    Rows of ``m`` are shuffled with ``nys.shuffle_seed``; :func:`fr_adm`
    runs on the left ``m x l`` and top ``l x n`` blocks (``l = k r``); the
    low-rank part is ``L_left pinv(L_left[:l, :l]) L_top`` and
    ``S = M - L``.  Outputs are returned in the original row order.
    """
    t_start = time.perf_counter()
    adm = adm or AdmConfig()
    nys = nys or NystromConfig()
    m = as_matrix(m, "M")
    rows, cols = m.shape
    _check_rank(m.shape, r)
    width = nys.oversample_k * r
    if not r <= width <= min(rows, cols):
        raise InvalidRank(
            f"block width l = {nys.oversample_k} * {r} = {width} must lie in "
            f"[r, min(m, n)] = [{r}, {min(rows, cols)}]"
        )
    if not np.any(m):
        return _zero_result(m, r)

    perm = np.random.default_rng(nys.shuffle_seed).permutation(rows)
    shuffled = m[perm]
    left = fr_adm(shuffled[:, :width], r, adm)
    top = fr_adm(shuffled[:width, :], r, adm)

    w_pinv = nystrom_pinv(left.l[:width, :width], nys.pinv_threshold, r)
    fl, ft = left.factors, top.factors
    # L = U_L B_L V_L^T W^+ U_T B_T V_T^T, kept in m x r / r x n form.
    p = fl.u @ (fl.b @ ((fl.v.T @ w_pinv) @ ft.u) @ ft.b)
    q, rr = np.linalg.qr(p)
    a, sv, bt = np.linalg.svd(rr)
    u = np.empty_like(q)
    u[perm] = q @ a
    factors = PolarFactors(u, np.diag(sv), ft.v @ bt.T)
    l = factors.reconstruct()
    s = m - l
    m_norm = float(np.linalg.norm(m))
    return Decomposition(
        l=l,
        s=s,
        y=np.zeros_like(m),
        factors=factors,
        iterations=left.iterations + top.iterations,
        converged=left.converged and top.converged,
        primal_residual_history=[float(np.linalg.norm(m - l - s)) / m_norm],
        mu_history=[],
        permutation=perm,
        blocks=(left, top),
        l_update_seconds=left.l_update_seconds + top.l_update_seconds,
        wall_time=time.perf_counter() - t_start,
    )


def kkt_residuals(d: Decomposition, m, mu: Optional[float] = None) -> KktResiduals:
    """Evaluate the first-order optimality residuals of ``d`` against ``m``.

    ``mu`` defaults to ``d.mu_final``, the penalty of the last update, for
    which the proximal residual of an ADM iterate vanishes up to rounding.
    """
    m = as_matrix(m, "M")
    if d.l.shape != m.shape or d.s.shape != m.shape or d.y.shape != m.shape:
        raise ShapeMismatch(f"decomposition shape {d.l.shape} does not match M {m.shape}")
    if mu is None:
        mu = d.mu_final
    if not (mu > 0):
        raise ValueError("kkt_residuals needs a positive mu")
    m_norm = float(np.linalg.norm(m))
    u, v, y, s = d.factors.u, d.factors.v, d.y, d.s
    feas = float(np.linalg.norm(m - d.l - s))
    return KktResiduals(
        r_uty=float(np.linalg.norm(u.T @ y)),
        r_yv=float(np.linalg.norm(y @ v)),
        r_prox=float(np.linalg.norm(s - soft_threshold(s + y / mu, 1.0 / mu))),
        r_feas=feas / m_norm if m_norm > 0 else feas,
        m_norm=m_norm,
    )
