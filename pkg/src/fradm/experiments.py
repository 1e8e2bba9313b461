"""Experiment sweeps behind the ``phase-grid``, ``convergence`` and ``scaling`` commands.

Each sweep returns a list of dict rows (one per CSV line) in a fixed order,
so output is reproducible regardless of how many workers ran the cells.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .decomp import AdmConfig, Decomposition, NystromConfig, fr_adm, fr_adm_exact, fr_nys
from .fixedrank import fixed_rank_opt_step, initial_step, subspace_distance
from .manifold import tsvd_oracle
from .synth import (
    DEFAULT_EPSILON,
    RecoveryMetrics,
    generate_problem,
    phase_metric,
    planted_spectrum,
    recovery_errors,
)

__all__ = [
    "CONVERGENCE_HEADER",
    "METHODS",
    "PHASE_HEADER",
    "RUN_HEADER",
    "SCHEMA_VERSION",
    "RunRecord",
    "derive_seed",
    "parse_rank_rule",
    "run_convergence",
    "run_method",
    "run_phase_grid",
    "run_scaling",
    "observed_contraction",
    "summarize",
]

SCHEMA_VERSION = 1
METHODS = ("fradm", "fradm_exact", "frnys")

PHASE_HEADER = [
    "schema_version", "size", "rank_fraction", "outlier_fraction", "r", "reps",
    "epsilon", "phase_metric", "mean_err_l", "mean_err_s", "converged_reps",
]
CONVERGENCE_HEADER = [
    "schema_version", "iteration", "rel_error", "predicted_rate", "dist_u", "dist_v",
]
RUN_HEADER = [
    "schema_version", "method", "m", "n", "r", "outlier_fraction", "seed", "rep",
    "err_l", "err_s", "phase_err", "wall_time", "iterations", "converged",
    "mu0", "rho", "mu_bar", "tol_primal", "max_iter", "stall_window", "oversample_k",
]


def derive_seed(*keys: int) -> int:
    """Deterministic 32-bit seed from integer keys (via ``SeedSequence``)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def run_method(
    method: str,
    m: np.ndarray,
    r: int,
    adm: Optional[AdmConfig] = None,
    nys: Optional[NystromConfig] = None,
) -> Decomposition:
    adm = adm or AdmConfig()
    if method == "fradm":
        return fr_adm(m, r, adm)
    if method == "fradm_exact":
        return fr_adm_exact(m, r, adm)
    if method == "frnys":
        return fr_nys(m, r, adm, nys)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _pool_map(fn: Callable, tasks: Sequence, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, tasks))


# --------------------------------------------------------------------- phase grid


def _phase_cell(task):
    size, i, j, rank_frac, out_frac, reps, epsilon, seed, method, adm, nys = task
    r = max(1, int(round(rank_frac * size)))
    metrics, errs_l, errs_s, ok = [], [], [], 0
    for rep in range(reps):
        prob = generate_problem(size, size, r, out_frac, derive_seed(seed, i, j, rep))
        d = run_method(method, prob.m, r, adm, nys)
        metrics.append(phase_metric(d.s, prob.s_true, epsilon))
        el, es = recovery_errors(d, prob)
        errs_l.append(el)
        errs_s.append(es)
        ok += int(d.converged)
    return {
        "schema_version": SCHEMA_VERSION,
        "size": size,
        "rank_fraction": float(rank_frac),
        "outlier_fraction": float(out_frac),
        "r": r,
        "reps": reps,
        "epsilon": float(epsilon),
        "phase_metric": float(np.mean(metrics)),
        "mean_err_l": float(np.mean(errs_l)),
        "mean_err_s": float(np.mean(errs_s)),
        "converged_reps": ok,
    }


def run_phase_grid(
    size: int,
    rank_fractions: Sequence[float],
    outlier_fractions: Sequence[float],
    reps: int = 3,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
    method: str = "fradm",
    adm: Optional[AdmConfig] = None,
    nys: Optional[NystromConfig] = None,
    workers: int = 1,
) -> list[dict]:
    """Average phase metric over ``reps`` problems per (rank fraction, outlier fraction) cell.

    Rows are ordered by rank fraction, then outlier fraction.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    tasks = [
        (size, i, j, rf, of, reps, epsilon, seed, method, adm, nys)
        for i, rf in enumerate(rank_fractions)
        for j, of in enumerate(outlier_fractions)
    ]
    return _pool_map(_phase_cell, tasks, workers)


# ------------------------------------------------------------------- convergence


def run_convergence(
    m: int,
    n: int,
    r: int,
    gap: float,
    seed: int = 0,
    exact_rank: bool = False,
    target: float = 1e-12,
    max_iter: int = 500,
    top: float = 1.2,
) -> tuple[list[dict], bool]:
    """Relative distance of polar-step iterates to the truncated SVD, per iteration.

    Starts from the identity factors and stops once
    ``||U B V^T - T||_F / ||T||_F <= target`` (``T`` the rank-r truncated
    SVD) or after ``max_iter`` iterations.  The iterates are those of
    :func:`~fradm.fixedrank.fixed_rank_opt_full` without a stopping rule.
    Returns the rows and whether the target was reached.
    """
    a, sigma = planted_spectrum(m, n, r, gap, seed, exact_rank, top=top)
    ref = tsvd_oracle(a, r)
    t = ref.reconstruct()
    t_norm = float(np.linalg.norm(t))
    ratio = sigma[r] / sigma[r - 1] if r < sigma.size else 0.0
    rows: list[dict] = []
    f = initial_step(a, r)
    for i in range(1, max_iter + 1):
        if i > 1:
            f = fixed_rank_opt_step(a, f)
        err = float(np.linalg.norm(f.reconstruct() - t)) / t_norm
        rows.append(
            {
                "schema_version": SCHEMA_VERSION,
                "iteration": i,
                "rel_error": err,
                "predicted_rate": float(ratio ** (2 * i)),
                "dist_u": subspace_distance(f.u, ref.u),
                "dist_v": subspace_distance(f.v, ref.v),
            }
        )
        if err <= target:
            return rows, True
    return rows, False


def observed_contraction(rows: Sequence[dict], start: int = 3, stop: int = 10,
                         key: str = "rel_error", floor: float = 1e-13) -> float:
    """Geometric-mean per-iteration ratio of ``key`` over iterations ``start..stop``.

    Ratios touching a value at or below ``floor`` are skipped.
    """
    vals = {row["iteration"]: row[key] for row in rows}
    logs = [
        math.log(vals[i] / vals[i - 1])
        for i in range(max(start, 2), stop + 1)
        if i in vals and i - 1 in vals and vals[i] > floor and vals[i - 1] > floor
    ]
    return math.exp(sum(logs) / len(logs)) if logs else math.nan


# ----------------------------------------------------------------------- scaling


@dataclass
class RunRecord:
    method: str
    m: int
    n: int
    r: int
    outlier_fraction: float
    seed: int
    rep: int
    metrics: RecoveryMetrics
    converged: bool
    adm: AdmConfig
    nys: NystromConfig

    def to_row(self, include_timing: bool = True) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "m": self.m,
            "n": self.n,
            "r": self.r,
            "outlier_fraction": self.outlier_fraction,
            "seed": self.seed,
            "rep": self.rep,
            "err_l": self.metrics.err_l,
            "err_s": self.metrics.err_s,
            "phase_err": self.metrics.phase_err,
            "wall_time": self.metrics.wall_time if include_timing else "NA",
            "iterations": self.metrics.iterations,
            "converged": self.converged,
            "mu0": self.adm.mu0,
            "rho": self.adm.rho,
            "mu_bar": self.adm.mu_bar,
            "tol_primal": self.adm.tol_primal,
            "max_iter": self.adm.max_iter,
            "stall_window": self.adm.stall_window,
            "oversample_k": self.nys.oversample_k,
        }


def parse_rank_rule(rule: str) -> Callable[[int], int]:
    """``fixed:K`` -> rank K; ``fraction:F`` -> ``round(F * size)`` (at least 1)."""
    kind, _, value = rule.partition(":")
    if kind == "fixed" and value:
        k = int(value)
        return lambda size: k
    if kind == "fraction" and value:
        f = float(value)
        return lambda size: max(1, int(round(f * size)))
    raise ValueError(f"rank rule must be 'fixed:K' or 'fraction:F', got {rule!r}")


def _scaling_cell(task) -> RunRecord:
    method, size, r, frac, seed, rep, epsilon, adm, nys = task
    prob = generate_problem(size, size, r, frac, seed)
    t0 = time.perf_counter()
    d = run_method(method, prob.m, r, adm, nys)
    elapsed = time.perf_counter() - t0
    el, es = recovery_errors(d, prob)
    metrics = RecoveryMetrics(el, es, phase_metric(d.s, prob.s_true, epsilon), elapsed, d.iterations)
    return RunRecord(method, size, size, r, frac, seed, rep, metrics, d.converged, adm, nys)


def run_scaling(
    sizes: Iterable[int],
    rank_rule: str = "fixed:10",
    reps: int = 1,
    methods: Sequence[str] = METHODS,
    outlier_fraction: float = 0.1,
    seed: int = 0,
    epsilon: float = DEFAULT_EPSILON,
    adm: Optional[AdmConfig] = None,
    nys: Optional[NystromConfig] = None,
    workers: int = 1,
) -> list[RunRecord]:
    """One :class:`RunRecord` per (size, rep, method); every method sees the same instance."""
    adm = adm or AdmConfig()
    nys = nys or NystromConfig()
    rank_of = parse_rank_rule(rank_rule)
    for meth in methods:
        if meth not in METHODS:
            raise ValueError(f"unknown method {meth!r}; expected one of {METHODS}")
    tasks = [
        (meth, size, rank_of(size), outlier_fraction, derive_seed(seed, size, rep), rep, epsilon, adm, nys)
        for size in sizes
        for rep in range(reps)
        for meth in methods
    ]
    return _pool_map(_scaling_cell, tasks, workers)


def summarize(records: Sequence[RunRecord]) -> list[dict]:
    """Median err_l / err_s / iterations / wall_time per (method, size)."""
    groups: dict[tuple[str, int], list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.method, rec.m), []).append(rec)
    out = []
    for (meth, size), recs in sorted(groups.items(), key=lambda kv: (kv[0][1], METHODS.index(kv[0][0]))):
        out.append(
            {
                "method": meth,
                "size": size,
                "r": recs[0].r,
                "median_err_l": float(np.median([x.metrics.err_l for x in recs])),
                "median_err_s": float(np.median([x.metrics.err_s for x in recs])),
                "max_iterations": max(x.metrics.iterations for x in recs),
                "median_wall_time": float(np.median([x.metrics.wall_time for x in recs])),
            }
        )
    return out
