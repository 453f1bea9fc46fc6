"""Verification-layer tests: rate fitting, bound checks, energy identity."""

import dataclasses
import math

import numpy as np
import pytest

from memstab import (
    ASCertificate,
    HeatModelSpec,
    InitialSegment,
    MSCurve,
    SimConfig,
    StateRetentionError,
    TimeFunction,
    build_as_certificate,
    build_certificate,
    check_as_decay,
    check_decay_functional,
    check_ms_bound,
    energy_refinement_study,
    energy_residual,
    fit_decay_rate,
    integrate_block,
    map_heat_to_problem,
    simulate_path,
    wilson_lower,
)
from test_certificate import make_problem


def synthetic_curve(times, mean, ci=None, n_paths=100):
    times = np.asarray(times, dtype=float)
    mean = np.asarray(mean, dtype=float)
    ci = np.zeros_like(mean) if ci is None else np.asarray(ci, dtype=float)
    return MSCurve(times=times, mean=mean, ci_half=ci, n_paths=n_paths)


def test_fit_exact_exponential():
    t = np.linspace(0.0, 10.0, 200)
    curve = synthetic_curve(t, 3.5 * np.exp(-0.7 * t))
    fit = fit_decay_rate(curve)
    assert fit.sigma_hat == pytest.approx(0.7, abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-10)


def test_fit_zero_curve_infinite_rate_marker():
    t = np.linspace(0.0, 10.0, 50)
    fit = fit_decay_rate(synthetic_curve(t, np.zeros_like(t)))
    assert math.isinf(fit.sigma_hat)
    assert "zero" in fit.note


def test_fit_degenerate_window_reported_not_thrown():
    t = np.linspace(0.0, 10.0, 50)
    mean = np.exp(-t)
    ci = np.full_like(t, 10.0)  # noise swamps the signal everywhere
    fit = fit_decay_rate(synthetic_curve(t, mean, ci))
    assert math.isnan(fit.sigma_hat)
    assert "degenerate" in fit.note


def test_fit_recovers_heat_rate():
    m = HeatModelSpec(nu=1.0, b1=0.0, b2=0.0, k=1.0, n_modes=4,
                      phi=InitialSegment(kind="constant", coeffs=(1.0,)))
    cfg = SimConfig(dt=1e-3, T=5.0, n_paths=1, output_stride=1)
    rec = simulate_path(m, cfg, 0)
    curve = synthetic_curve(rec.times, rec.msq)
    fit = fit_decay_rate(curve)
    assert fit.sigma_hat == pytest.approx(2.0, rel=0.05)


def test_ms_bound_zero_curve_passes():
    p = make_problem()
    cert = build_certificate(p)
    t = np.linspace(0.0, 5.0, 40)
    rec = check_ms_bound(synthetic_curve(t, np.zeros_like(t)), cert)
    assert rec.passed
    assert math.isinf(rec.slack)


def test_ms_bound_boundary_curve_passes():
    p = make_problem()
    cert = build_certificate(p)
    t = np.linspace(0.0, 5.0, 40)
    rec = check_ms_bound(synthetic_curve(t, cert.B * np.exp(-cert.sigma * t)), cert)
    assert rec.passed
    assert rec.measured == pytest.approx(1.0, abs=1e-12)


def test_ms_bound_detects_violation_and_is_monotone_in_B():
    p = make_problem()
    cert = build_certificate(p)
    t = np.linspace(0.0, 5.0, 40)
    curve = synthetic_curve(t, 1.5 * cert.B * np.exp(-cert.sigma * t))
    assert not check_ms_bound(curve, cert).passed
    # enlarging B can only help
    bigger = dataclasses.replace(cert, B=2.0 * cert.B)
    assert check_ms_bound(curve, bigger).passed
    rng = np.random.default_rng(12)
    for _ in range(20):
        mean = rng.uniform(0.0, 2.0, size=t.size) * np.exp(-0.3 * t)
        c = synthetic_curve(t, mean)
        if check_ms_bound(c, cert).passed:
            assert check_ms_bound(c, bigger).passed


def test_decay_functional_boundary_case():
    # zero envelopes and a curve sitting exactly on M e^{-sigma t}: the
    # normalized functional equals M everywhere (boundary pass)
    p = make_problem(delta2=0.0, delta3=0.0, init_sup=1.0, sigma1=math.inf)
    cert = build_certificate(p)
    t = np.linspace(0.0, 6.0, 600)
    curve = synthetic_curve(t, cert.M * np.exp(-cert.sigma * t))
    rec = check_decay_functional(curve, cert, p)
    assert rec.passed
    assert rec.measured == pytest.approx(1.0, abs=1e-9)


def test_decay_functional_initial_value_below_peak():
    p = make_problem(init_sup=2.0)
    cert = build_certificate(p)
    t = np.linspace(0.0, 4.0, 100)
    curve = synthetic_curve(t, 2.0 * np.exp(-3.0 * t))  # mean(0) = sup <= M
    rec = check_decay_functional(curve, cert, p)
    assert rec.passed


def test_wilson_lower_basics():
    assert wilson_lower(0, 100) == 0.0
    assert wilson_lower(50, 100) < 0.5
    lows = [wilson_lower(k, 60) for k in range(0, 61, 5)]
    assert all(b >= a for a, b in zip(lows, lows[1:]))


def _records_from_sups(sups):
    from memstab import PathRecord

    out = []
    for i, row in enumerate(np.asarray(sups, dtype=float)):
        out.append(
            PathRecord(
                path_index=i,
                times=np.array([0.0]),
                msq=np.array([0.0]),
                interval_sups=row,
                dt=2.0**-6,
                r=1.0,
            )
        )
    return out


def test_as_decay_all_zero_paths_pass():
    p = make_problem()
    cert = build_certificate(p)
    asc = build_as_certificate(p, cert)
    records = _records_from_sups(np.zeros((30, 8)))
    rec, detail = check_as_decay(records, cert, asc, n0=2)
    assert rec.passed
    assert np.all(detail.counts == 0)
    assert np.all(detail.last_violation == -1)


def test_as_decay_vacuous_bounds_reported():
    p = make_problem()
    cert = build_certificate(p)
    asc = ASCertificate(B1=1e6, as_rate=cert.sigma / 2.0,
                        interval_coeff=2.0 * cert.B * (1.0 + 1e6 / cert.sigma))
    records = _records_from_sups(np.ones((10, 8)))  # every interval violated
    rec, detail = check_as_decay(records, cert, asc, n0=2)
    assert np.all(detail.vacuous)
    assert rec.passed  # a vacuous bound cannot be contradicted


def test_as_decay_detects_excess_violations():
    p = make_problem()
    cert = build_certificate(p)
    asc = ASCertificate(B1=0.0, as_rate=cert.sigma / 2.0, interval_coeff=1e-6)
    sups = np.zeros((40, 8))
    sups[:, 5] = 10.0  # everyone violates interval 5
    rec, detail = check_as_decay(_records_from_sups(sups), cert, asc, n0=2)
    assert not rec.passed
    assert np.all(detail.last_violation == 5)


def test_as_decay_monotone_under_threshold_relaxation():
    # lowering sigma raises every threshold, so violations cannot increase
    p = make_problem()
    cert = build_certificate(p)
    asc = build_as_certificate(p, cert)
    rng = np.random.default_rng(4)
    sups = rng.uniform(0.0, 1.2, size=(50, 9))
    _, d_base = check_as_decay(_records_from_sups(sups), cert, asc, n0=2)
    relaxed = dataclasses.replace(cert, sigma=0.5 * cert.sigma)
    _, d_rel = check_as_decay(_records_from_sups(sups), relaxed, asc, n0=2)
    assert np.all(d_rel.counts <= d_base.counts)


def test_as_decay_horizon_precondition():
    p = make_problem()
    cert = build_certificate(p)
    asc = build_as_certificate(p, cert)
    with pytest.raises(ValueError):
        check_as_decay(_records_from_sups(np.zeros((5, 3))), cert, asc, n0=2)


def feasible_heat_model(**kw):
    base = dict(
        nu=5.0, b1=1.0, b2=1.0, k=1.0,
        k1=TimeFunction.exppoly([(0.1, 1.0)]),
        k2=TimeFunction.exppoly([(0.1, 1.0)]),
        p_coeffs=(0.1,),
        phi=InitialSegment(kind="constant", coeffs=(1.0,)),
        n_modes=16,
    )
    base.update(kw)
    return HeatModelSpec(**base)


def test_energy_residual_zero_path():
    m = feasible_heat_model(phi=InitialSegment(kind="constant", coeffs=()), p_coeffs=())
    cfg = SimConfig(dt=2.0**-10, T=2.0, n_paths=1, retain_states=True)
    rec = integrate_block(m, cfg, [0])[0]
    res = energy_residual(rec, m)
    assert np.all(res.per_step == 0.0)
    assert res.rms == 0.0


def test_energy_residual_needs_retained_states():
    m = feasible_heat_model()
    cfg = SimConfig(dt=2.0**-10, T=2.0, n_paths=1)
    rec = simulate_path(m, cfg, 0)
    with pytest.raises(StateRetentionError):
        energy_residual(rec, m)


def test_energy_residual_deterministic_per_step_quadratic():
    # pure heat: the defect per step is exactly dt^2 |AX|^2
    m = HeatModelSpec(nu=1.0, b1=0.0, b2=0.0, k=1.0, n_modes=3,
                      phi=InitialSegment(kind="constant", coeffs=(1.0, 0.5, 0.2)))
    dt = 2.0**-8
    cfg = SimConfig(dt=dt, T=1.0, n_paths=1, retain_states=True)
    rec = integrate_block(m, cfg, [0], dw_rows=np.zeros((1, cfg.n_steps)))[0]
    res = energy_residual(rec, m)
    n = np.arange(1.0, 4.0)
    x = rec.states[cfg.steps_per_unit : cfg.steps_per_unit + cfg.n_steps]
    expected = dt**2 * np.sum((m.nu * n * n * x) ** 2, axis=1)
    np.testing.assert_allclose(res.per_step, expected, rtol=1e-10)


def test_energy_residual_drift_only_total_defect_first_order():
    # summing O(dt^2) per-step defects over 1/dt steps leaves an O(dt) total:
    # the log-log slope of |total| against dt sits near 1
    m = feasible_heat_model(b2=0.0, k2=TimeFunction.zero())
    dts, totals = [], []
    for j in range(5):
        dt = 2.0**-10 / 2**j
        cfg = SimConfig(dt=dt, T=1.0, n_paths=1, retain_states=True)
        rec = integrate_block(m, cfg, [0], dw_rows=np.zeros((1, cfg.n_steps)))[0]
        totals.append(abs(energy_residual(rec, m).total))
        dts.append(dt)
    slope = np.polyfit(np.log(dts), np.log(totals), 1)[0]
    assert 0.8 <= slope <= 1.2


def test_energy_refinement_study_halving_factor():
    m = feasible_heat_model()
    dts, rms = energy_refinement_study(m, base_dt=2.0**-10, levels=2, n_paths=6,
                                       horizon=1.0, master_seed=3)
    factors = rms[:-1] / rms[1:]
    assert np.all(factors >= 1.7)
