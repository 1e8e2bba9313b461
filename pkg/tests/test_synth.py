import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fradm.errors import InvalidFraction, InvalidRank, ShapeMismatch
from fradm.experiments import derive_seed, observed_contraction, parse_rank_rule, run_convergence
from fradm.synth import generate_problem, phase_metric, planted_spectrum, relative_error


def test_generate_problem_structure():
    p = generate_problem(50, 40, 5, 0.1, seed=0)
    assert p.m.shape == (50, 40)
    assert np.linalg.matrix_rank(p.l_true) == 5
    assert np.count_nonzero(p.s_true) == 200
    assert np.abs(p.s_true).max() <= 1.0
    np.testing.assert_array_equal(p.m, p.l_true + p.s_true)


def test_generate_problem_deterministic():
    a = generate_problem(30, 20, 3, 0.2, seed=5)
    b = generate_problem(30, 20, 3, 0.2, seed=5)
    c = generate_problem(30, 20, 3, 0.2, seed=6)
    np.testing.assert_array_equal(a.m, b.m)
    assert not np.array_equal(a.m, c.m)


def test_generate_problem_draw_order():
    # A, then B, then support, then values from a single default_rng stream.
    rng = np.random.default_rng(9)
    a = rng.standard_normal((6, 2))
    b = rng.standard_normal((5, 2))
    support = rng.choice(30, size=3, replace=False)
    values = rng.uniform(-1, 1, size=3)
    p = generate_problem(6, 5, 2, 0.1, seed=9)
    np.testing.assert_array_equal(p.l_true, a @ b.T)
    np.testing.assert_array_equal(p.s_true.ravel()[support], values)


def test_zero_fraction_and_errors():
    assert not generate_problem(10, 10, 2, 0.0, 1).s_true.any()
    with pytest.raises(InvalidRank):
        generate_problem(10, 10, 11, 0.1, 1)
    with pytest.raises(InvalidFraction):
        generate_problem(10, 10, 2, 1.5, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_support_count_property(m, n, frac, seed):
    p = generate_problem(m, n, 1, frac, seed)
    assert np.count_nonzero(p.s_true) == int(round(frac * m * n))


def test_phase_metric_values():
    s_star = np.zeros((2, 2))
    s = np.array([[1e-4, 0.5], [0.0, -2.0]])
    # deviations 1e-4 (ignored), 0.5, 0, 2 -> (0.5 + 2) / 4
    assert phase_metric(s, s_star, 1e-3) == pytest.approx(0.625)
    assert phase_metric(s_star, s_star) == 0.0
    with pytest.raises(ShapeMismatch):
        phase_metric(np.zeros((2, 2)), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        phase_metric(s, s_star, 0.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1), st.integers(0, 1000))
def test_phase_metric_bounds(eps, seed):
    rng = np.random.default_rng(seed)
    s, t = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
    v = phase_metric(s, t, eps)
    assert 0 <= v <= np.abs(s - t).mean() + 1e-15


def test_relative_error_zero_truth_falls_back_to_absolute():
    assert relative_error(np.ones((2, 2)), np.zeros((2, 2))) == pytest.approx(2.0)
    assert relative_error([[3.0, 4.0]], [[0.0, 8.0]]) == pytest.approx(5.0 / 8.0)


def test_planted_spectrum():
    a, sigma = planted_spectrum(30, 20, 4, 0.3, seed=1)
    np.testing.assert_allclose(np.linalg.svd(a, compute_uv=False), sigma, atol=1e-12)
    assert sigma[4] / sigma[3] == pytest.approx(0.3)
    b, s2 = planted_spectrum(30, 20, 4, 0.3, seed=1, exact_rank=True)
    assert np.linalg.matrix_rank(b) == 4 and not s2[4:].any()


@pytest.mark.parametrize("gap", [0.1, 0.5])
def test_convergence_rows_follow_rate(gap):
    rows, ok = run_convergence(80, 60, 4, gap, seed=2)
    assert ok and rows[-1]["rel_error"] <= 1e-12
    assert observed_contraction(rows) == pytest.approx(gap**2, rel=0.5)


def test_convergence_exact_rank_single_row():
    rows, ok = run_convergence(50, 40, 3, 0.5, exact_rank=True)
    assert ok and len(rows) == 1


def test_rank_rule_and_seed_helpers():
    assert parse_rank_rule("fixed:10")(500) == 10
    assert parse_rank_rule("fraction:0.1")(500) == 50
    assert parse_rank_rule("fraction:0.001")(100) == 1
    for bad in ("fixed", "fraction:", "x:3"):
        with pytest.raises(ValueError):
            parse_rank_rule(bad)
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3) != derive_seed(1, 2, 4)


def test_support_positions_uniform_chi_square():
    m, n, count = 5, 4, 5
    hits = np.zeros(m * n)
    seeds = 2000
    for seed in range(seeds):
        s = generate_problem(m, n, 1, count / (m * n), seed).s_true
        assert np.count_nonzero(s) == count  # distinct positions
        hits += (s != 0).ravel()
    expected = seeds * count / (m * n)
    chi2 = float(np.sum((hits - expected) ** 2 / expected))
    # Wilson-Hilferty upper quantile of chi-square(df) at p = 1e-4 (z = 3.719)
    df, z = m * n - 1, 3.719
    critical = df * (1 - 2 / (9 * df) + z * np.sqrt(2 / (9 * df))) ** 3
    assert chi2 < critical


@settings(max_examples=40, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3), st.integers(0, 1000))
def test_relative_error_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    est, truth = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    assert relative_error(c * est, c * truth) == pytest.approx(relative_error(est, truth), rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 1000), st.floats(1e-4, 0.5))
def test_phase_metric_monotone_and_zero_iff(seed, eps):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((3, 4))
    dev = rng.uniform(0, 1, (3, 4)) * rng.choice([-1, 1], (3, 4))
    v1 = phase_metric(t + dev, t, eps)
    v2 = phase_metric(t + 1.5 * dev, t, eps)
    assert v2 >= v1
    assert (v1 == 0) == bool(np.all(np.abs((t + dev) - t) <= eps))
