"""Domain-model tests: delays, envelope mapping, problem validation."""

import math

import numpy as np
import pytest

from memstab import (
    DelaySpec,
    HeatModelSpec,
    InitialSegment,
    TimeFunction,
    map_heat_to_problem,
    validate_problem,
)
from memstab.model import (
    B4_RATE_MARGIN,
    DELAY_CONSTANT,
    DELAY_INV_COS,
    DELAY_INV_SIN,
    DELAY_TABLE,
    HEAT_MEMORY_R,
)


def heat_model(**kw):
    base = dict(nu=5.0, b1=1.0, b2=1.0, k=1.0, n_modes=16)
    base.update(kw)
    return HeatModelSpec(**base)


def test_delay_inv_sin_values():
    d = DelaySpec(r=1.0, kind=DELAY_INV_SIN)
    assert d(0.0) == 1.0
    assert d(math.pi / 2.0) == pytest.approx(0.5, rel=1e-12)


def test_delay_inv_cos_at_zero():
    d = DelaySpec(r=1.0, kind=DELAY_INV_COS)
    assert d(0.0) == 0.5


def test_delay_range_property():
    # dense sampling: lags stay in [0, r] and t - lag >= -r
    t = np.arange(0.0, 1000.0, 1e-3)
    for d in (
        DelaySpec(r=1.0, kind=DELAY_INV_SIN),
        DelaySpec(r=1.0, kind=DELAY_INV_COS),
        DelaySpec(r=2.0, kind=DELAY_CONSTANT, value=1.3),
        DelaySpec(r=1.0, kind=DELAY_TABLE, times=(0.0, 5.0, 10.0), lags=(0.2, 1.0, 0.6)),
    ):
        lag = np.atleast_1d(d(t))
        assert np.all(lag >= 0.0)
        assert np.all(lag <= d.r)
        assert np.all(t - lag >= -d.r)


def test_delay_construction_rejects_bad_ranges():
    with pytest.raises(ValueError):
        DelaySpec(r=1.0, kind=DELAY_CONSTANT, value=1.5)
    with pytest.raises(ValueError):
        DelaySpec(r=0.5, kind=DELAY_INV_SIN)  # lag reaches 1 > r
    with pytest.raises(ValueError):
        DelaySpec(r=1.0, kind=DELAY_TABLE, times=(0.0, 1.0), lags=(0.5, 1.2))


def test_heat_mapping_constants():
    p = map_heat_to_problem(heat_model())
    assert p.lambda1 == 1.0
    assert p.delta1 == 10.0
    assert p.g_env.delta == 4.0
    assert p.h_env.delta == 4.0
    assert p.alpha1.is_zero() and p.f_env.is_zero()


def test_heat_mapping_pure_heat_degenerates():
    p = map_heat_to_problem(heat_model(b1=0.0, b2=0.0, p_coeffs=()))
    assert p.g_env.delta == 0.0 and p.h_env.delta == 0.0
    assert p.g_env.beta.is_zero()
    assert p.sigma1 == 2.0  # no cap needed without forcing


def test_heat_mapping_forcing_envelope():
    p = map_heat_to_problem(heat_model(p_coeffs=(1.0,)))
    t = np.linspace(0.0, 3.0, 50)
    np.testing.assert_allclose(p.g_env.beta(t), 2.0 * np.exp(-2.0 * t), rtol=1e-13)
    # forcing decays at exactly 2k, so the weight rate is pulled below it
    assert p.sigma1 == pytest.approx(B4_RATE_MARGIN * 2.0)
    assert p.g_env.beta.is_integrable(p.sigma1)


def test_heat_mapping_gain_modulations():
    k1 = TimeFunction.exppoly([(0.1, 1.0)])
    p = map_heat_to_problem(heat_model(k1=k1))
    t = np.linspace(0.0, 2.0, 20)
    np.testing.assert_allclose(p.g_env.alpha(t), 4.0 * (0.1 * np.exp(-t)) ** 2, rtol=1e-13)


def test_heat_mapping_rejects_bad_modulation():
    with pytest.raises(ValueError):
        heat_model(k1=TimeFunction.exppoly([(0.5, 0.0)]))  # constant, not square-integrable
    with pytest.raises(ValueError):
        heat_model(k2=TimeFunction.table([0.0, 1.0], [0.1, 0.4]))  # increasing


def test_initial_energy_sup_constant_profile():
    p = map_heat_to_problem(heat_model(phi=InitialSegment(kind="constant", coeffs=(1.0, 0.5))))
    assert p.init_energy_sup == pytest.approx(1.25, rel=1e-12)


def test_initial_energy_sup_bump_profile():
    p = map_heat_to_problem(heat_model(phi=InitialSegment(kind="bump", mode=2, amp=3.0)))
    # peak amp at s = -r/2; the 1024-node grid lands within ~5e-4 of it
    assert p.init_energy_sup == pytest.approx(9.0, rel=1e-5)


def test_initial_segment_linear():
    phi = InitialSegment(kind="linear", start=(0.0,), end=(2.0,))
    vals = phi.sample([-1.0, -0.5, 0.0], 1.0, 4)
    np.testing.assert_allclose(vals[:, 0], [0.0, 1.0, 2.0], atol=1e-14)
    assert np.all(vals[:, 1:] == 0.0)


def test_initial_segment_rejects_out_of_window():
    phi = InitialSegment(kind="constant", coeffs=(1.0,))
    with pytest.raises(ValueError):
        phi.sample([0.5], 1.0, 4)


def test_validate_heat_mapping_passes():
    rng = np.random.default_rng(5)
    for _ in range(20):
        m = heat_model(
            nu=rng.uniform(0.1, 8.0),
            b1=rng.uniform(0.0, 2.0),
            b2=rng.uniform(0.0, 2.0),
            k=rng.uniform(0.2, 3.0),
            k1=TimeFunction.exppoly([(rng.uniform(0.0, 0.5), rng.uniform(0.2, 2.0))]),
            p_coeffs=tuple(rng.uniform(-1.0, 1.0, size=3)),
        )
        report = validate_problem(map_heat_to_problem(m))
        assert report.passed, [it.name for it in report.failures()]


def test_validate_flags_nonintegrable_drift_beta():
    p = map_heat_to_problem(heat_model())
    bad = p.g_env.__class__(delta=p.g_env.delta, alpha=p.g_env.alpha,
                            beta=TimeFunction.exppoly([(1.0, 0.0)]))
    import dataclasses

    p_bad = dataclasses.replace(p, g_env=bad)
    report = validate_problem(p_bad)
    names = {it.name for it in report.failures()}
    assert "drift_gain_beta2_integrable" in names


def test_validate_flags_weighted_rate_mismatch():
    p = map_heat_to_problem(heat_model())
    import dataclasses

    bad = p.h_env.__class__(delta=p.h_env.delta, alpha=p.h_env.alpha,
                            beta=TimeFunction.exppoly([(1.0, 1.0)]))
    p_bad = dataclasses.replace(p, h_env=bad, sigma1=2.0)
    report = validate_problem(p_bad)
    names = {it.name for it in report.failures()}
    assert "weighted_beta3_integrable" in names


def test_heat_memory_horizon_is_one():
    p = map_heat_to_problem(heat_model())
    assert p.r == HEAT_MEMORY_R == 1.0
    assert p.attestations.measurable
    assert p.attestations.hemicontinuous
    assert p.attestations.bounded_operator
