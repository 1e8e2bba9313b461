import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fradm.errors import NotConvergedWarning, ShapeMismatch
from fradm.fixedrank import (
    FixedRankConfig,
    PolarFactors,
    fixed_rank_opt_full,
    fixed_rank_opt_step,
    fixed_rank_substeps,
    initial_step,
    subspace_distance,
)
from fradm.manifold import tsvd_oracle
from fradm.synth import planted_spectrum


def orthonormal(rng, p, r):
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    return q


def test_subspace_distance_matches_projector_norm():
    rng = np.random.default_rng(0)
    u1, u2 = orthonormal(rng, 20, 4), orthonormal(rng, 20, 4)
    oracle = np.linalg.norm(u1 @ u1.T - u2 @ u2.T)
    trace_form = math.sqrt(max(2 * 4 - 2 * np.linalg.norm(u1.T @ u2) ** 2, 0.0))
    assert subspace_distance(u1, u2) == pytest.approx(oracle, rel=1e-12)
    assert subspace_distance(u1, u2) == pytest.approx(trace_form, rel=1e-10)


def test_subspace_distance_rotation_invariant_and_accurate_when_close():
    rng = np.random.default_rng(1)
    u = orthonormal(rng, 30, 3)
    o = orthonormal(rng, 3, 3)
    assert subspace_distance(u, u @ o) < 1e-14
    # Tiny perturbation: exact projector difference is first order in eps.
    eps = 1e-10
    w = np.linalg.qr(u + eps * rng.standard_normal((30, 3)))[0]
    oracle = np.linalg.norm(u @ u.T - w @ w.T)
    assert subspace_distance(u, w) == pytest.approx(oracle, rel=1e-4)


def test_subspace_distance_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        subspace_distance(np.eye(4, 2), np.eye(4, 3))


def test_polar_factors_shape_check_and_rotate():
    with pytest.raises(ShapeMismatch):
        PolarFactors(np.eye(4, 2), np.eye(3), np.eye(5, 2))
    rng = np.random.default_rng(2)
    f = PolarFactors(orthonormal(rng, 6, 2), np.diag([2.0, 1.0]), orthonormal(rng, 5, 2))
    g = f.rotate(orthonormal(rng, 2, 2))
    np.testing.assert_allclose(g.reconstruct(), f.reconstruct(), atol=1e-13)
    assert f.shape == (6, 5) and f.rank == 2


@settings(max_examples=80, deadline=None)
@given(
    st.integers(3, 12), st.integers(3, 12), st.integers(1, 3), st.integers(0, 2**31 - 1)
)
def test_substeps_never_increase_cost(m, n, r, seed):
    r = min(r, m, n)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    prev = PolarFactors(orthonormal(rng, m, r), np.diag(rng.uniform(0.5, 2, r)), orthonormal(rng, n, r))
    cost = np.linalg.norm(a - prev.reconstruct())
    scale = np.linalg.norm(a)
    for f in fixed_rank_substeps(a, prev):
        new = np.linalg.norm(a - f.reconstruct())
        assert new <= cost + 1e-10 * scale
        cost = new


def test_step_equals_last_substep():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((9, 7))
    prev = PolarFactors(orthonormal(rng, 9, 2), np.eye(2), orthonormal(rng, 7, 2))
    *_, last = fixed_rank_substeps(a, prev)
    step = fixed_rank_opt_step(a, prev)
    np.testing.assert_allclose(step.reconstruct(), last.reconstruct(), atol=1e-12)


@pytest.mark.parametrize("gap", [0.1, 0.5])
def test_full_matches_tsvd(gap):
    a, _ = planted_spectrum(60, 50, 5, gap, seed=4)
    f, trace = fixed_rank_opt_full(a, r=5)
    t = tsvd_oracle(a, 5).reconstruct()
    assert trace.converged
    assert np.linalg.norm(f.reconstruct() - t) / np.linalg.norm(t) < 1e-10
    assert trace.final_cost == pytest.approx(np.linalg.norm(a - t), rel=1e-9)
    assert trace.min_eigenvalues[-1] > 0


def test_full_exact_rank_one_iteration():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((20, 3)) @ rng.standard_normal((3, 15))
    f, trace = fixed_rank_opt_full(a, r=3)
    np.testing.assert_allclose(f.reconstruct(), a, atol=1e-10)
    assert trace.iterations <= 2


def test_identity_start_fallback_on_rank_deficient_block():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((10, 3)) @ rng.standard_normal((3, 8))
    a[:, :3] = 0.0  # m @ I_{n x r} vanishes
    f = initial_step(a, 2, seed=1)
    assert np.allclose(f.u.T @ f.u, np.eye(2))
    f, trace = fixed_rank_opt_full(a, r=2)
    t = tsvd_oracle(a, 2).reconstruct()
    assert np.linalg.norm(f.reconstruct() - t) / np.linalg.norm(t) < 1e-9


def test_not_converged_warning():
    a, _ = planted_spectrum(40, 40, 4, 0.95, seed=7)
    with pytest.warns(NotConvergedWarning):
        f, trace = fixed_rank_opt_full(a, r=4, cfg=FixedRankConfig(max_iter=3))
    assert not trace.converged and trace.iterations == 3


def test_contraction_tracks_gap_squared():
    a, _ = planted_spectrum(120, 100, 6, 0.5, seed=8)
    _, trace = fixed_rank_opt_full(a, r=6)
    assert 0.125 <= trace.contraction() <= 0.5


def test_warm_start_and_callback():
    a, _ = planted_spectrum(30, 25, 3, 0.3, seed=9)
    seen = []
    f0 = initial_step(a, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        f, trace = fixed_rank_opt_full(a, f0, callback=lambda i, g: seen.append(i))
    assert seen == list(range(1, trace.iterations + 1))
    with pytest.raises(ShapeMismatch):
        fixed_rank_opt_full(a, PolarFactors.identity(10, 10, 3))
    with pytest.raises(ValueError):
        fixed_rank_opt_full(a)


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 15), st.integers(4, 15), st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_quotient_invariance(m, n, r, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    f = PolarFactors(orthonormal(rng, m, r), np.diag(rng.uniform(0.5, 2, r)), orthonormal(rng, n, r))
    g = f.rotate(orthonormal(rng, r, r))
    np.testing.assert_allclose(g.reconstruct(), f.reconstruct(), atol=1e-12)
    step_f = fixed_rank_opt_step(a, f).reconstruct()
    step_g = fixed_rank_opt_step(a, g).reconstruct()
    np.testing.assert_allclose(step_g, step_f, atol=1e-10 * max(1.0, np.linalg.norm(a)))


@settings(max_examples=30, deadline=None)
@given(st.integers(5, 30), st.integers(5, 30), st.integers(1, 4), st.floats(0.05, 0.6), st.integers(0, 10_000))
def test_b_positive_at_convergence(m, n, r, gap, seed):
    r = min(r, m, n)
    a, _ = planted_spectrum(m, n, r, gap, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        f, trace = fixed_rank_opt_full(a, r=r)
    assert np.linalg.eigvalsh(f.b).min() > 0
    assert trace.min_eigenvalues[-1] > 0
