"""Envelope-family tests: evaluation, exact weighted integrals, predicates."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from memstab import DivergentIntegralError, TimeFunction


def test_exppoly_eval_at_zero():
    f = TimeFunction.exppoly([(2.0, 0.5)])
    assert f(0.0) == 2.0


def test_exppoly_eval_single_term():
    f = TimeFunction.exppoly([(1.0, 1.0)])
    assert f(1.0) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_table_eval_midpoint():
    f = TimeFunction.table([0.0, 1.0], [1.0, 0.0])
    assert f(0.5) == 0.5


def test_table_eval_beyond_support_is_zero():
    f = TimeFunction.table([0.0, 1.0], [1.0, 0.5])
    assert f(2.0) == 0.0


def test_negative_time_rejected():
    f = TimeFunction.exppoly([(1.0, 1.0)])
    with pytest.raises(ValueError):
        f(-0.1)


def test_integral_unit_exponential():
    f = TimeFunction.exppoly([(1.0, 1.0)])
    assert f.integral(0.0) == pytest.approx(1.0, rel=1e-14)


def test_integral_weighted_closed_form():
    f = TimeFunction.exppoly([(2.0, 3.0)])
    assert f.integral(1.0) == pytest.approx(1.0, rel=1e-14)


def test_integral_divergent_at_equal_rate():
    f = TimeFunction.exppoly([(1.0, 1.0)])
    with pytest.raises(DivergentIntegralError):
        f.integral(1.0)


def test_zero_function():
    z = TimeFunction.zero()
    assert z(3.0) == 0.0
    assert z.is_zero()
    assert z.integral(100.0) == 0.0
    assert z.is_integrable(100.0)


def test_exppoly_integral_matches_quadrature():
    # closed form vs independent numerical quadrature, 100 random instances
    rng = np.random.default_rng(7)
    for _ in range(100):
        n_terms = rng.integers(1, 4)
        terms = [(rng.uniform(0.1, 5.0), rng.uniform(0.5, 5.0)) for _ in range(n_terms)]
        w = rng.uniform(0.0, 0.4)
        f = TimeFunction.exppoly(terms)
        # combine weight and decay per term so the integrand never overflows
        integrand = lambda t: sum(c * math.exp((w - q) * t) for c, q in terms)
        ref, _ = quad(integrand, 0.0, np.inf, limit=200)
        assert f.integral(w) == pytest.approx(ref, rel=1e-8)


def test_table_integral_matches_quadrature():
    rng = np.random.default_rng(11)
    for w in (0.0, -0.7, 0.9, 2.0):
        times = np.concatenate(([0.0], np.cumsum(rng.uniform(0.05, 0.8, size=6))))
        values = rng.uniform(0.0, 3.0, size=7)
        f = TimeFunction.table(times, values)
        ref, _ = quad(
            lambda t: math.exp(w * t) * f(t), 0.0, times[-1], limit=400,
            points=list(times),
        )
        assert f.integral(w) == pytest.approx(ref, rel=1e-10)


def test_table_integral_small_weight_series_branch():
    f = TimeFunction.table([0.0, 1.0, 2.0], [1.0, 2.0, 0.0])
    # weight small enough to hit the series expansion; integral is the area
    assert f.integral(1e-13) == pytest.approx(2.5, rel=1e-9)


def test_eval_nonnegative_everywhere():
    rng = np.random.default_rng(3)
    t = np.linspace(0.0, 50.0, 2001)
    for _ in range(25):
        f = TimeFunction.exppoly(
            [(rng.uniform(0.0, 4.0), rng.uniform(0.0, 4.0)) for _ in range(3)]
        )
        assert np.all(f(t) >= 0.0)
        g = TimeFunction.table([0.0, 1.0, 3.0], rng.uniform(0.0, 2.0, size=3))
        assert np.all(g(t) >= 0.0)


def test_squared_exppoly_is_exact():
    f = TimeFunction.exppoly([(1.5, 0.3), (0.5, 2.0)])
    g = f.squared()
    t = np.linspace(0.0, 10.0, 200)
    np.testing.assert_allclose(g(t), f(t) ** 2, rtol=1e-13)


def test_squared_table_squares_nodes():
    f = TimeFunction.table([0.0, 1.0], [2.0, 3.0])
    g = f.squared()
    assert g(0.0) == 4.0 and g(1.0) == 9.0


def test_scaled():
    f = TimeFunction.exppoly([(2.0, 1.0)])
    assert f.scaled(0.5)(0.0) == 1.0
    with pytest.raises(ValueError):
        f.scaled(-1.0)


def test_integrability_predicate():
    assert TimeFunction.exppoly([(1.0, 2.0)]).is_integrable(1.0)
    assert not TimeFunction.exppoly([(1.0, 2.0)]).is_integrable(2.0)
    assert not TimeFunction.exppoly([(1.0, 0.0)]).is_integrable(0.0)  # constant
    assert TimeFunction.exppoly([(0.0, 0.0)]).is_integrable(0.0)  # inactive term
    assert TimeFunction.table([0.0, 1.0], [1.0, 1.0]).is_integrable(50.0)


def test_sup_and_weighted_sup():
    f = TimeFunction.exppoly([(1.0, 1.0), (2.0, 0.0)])
    assert f.sup_bound() == 3.0
    # the constant term grows under any positive weight rate
    assert f.weighted_sup_finite(0.0)
    assert not f.weighted_sup_finite(0.5)
    h = TimeFunction.exppoly([(1.0, 1.0)])
    assert h.weighted_sup_finite(1.0)  # rate equal to decay: bounded
    assert not h.weighted_sup_finite(1.5)
    g = TimeFunction.table([0.0, 0.5, 1.0], [0.0, 4.0, 1.0])
    assert g.sup_bound() == 4.0
    assert g.weighted_sup_finite(10.0)


def test_construction_validation():
    with pytest.raises(ValueError):
        TimeFunction.exppoly([(-1.0, 1.0)])
    with pytest.raises(ValueError):
        TimeFunction.table([0.5, 1.0], [1.0, 1.0])  # must start at 0
    with pytest.raises(ValueError):
        TimeFunction.table([0.0, 0.0], [1.0, 1.0])  # not strictly increasing
    with pytest.raises(ValueError):
        TimeFunction.table([0.0, 1.0], [1.0, -1.0])  # negative value
