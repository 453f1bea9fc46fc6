"""Confront Monte Carlo output with the certificate.

Checks are report-only: each produces a CheckRecord with the measured value,
the bound it is held against, and the remaining slack. A failing check never
prevents the others from running.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certificate import ASCertificate, Certificate, beta_at, theta_at
from .model import HEAT_RHO, HEAT_TAU, HeatModelSpec, ProblemSpec
from .simulate import MSCurve, StateRetentionError, integrate_block, SimConfig

#: One-sided 95% normal quantile used for the binomial (Wilson) slack.
WILSON_Z = 1.6449


@dataclass
class DecayFit:
    """Least-squares exponential rate fitted to the tail of a mean-square curve."""

    sigma_hat: float
    intercept: float
    r_squared: float
    t_lo: float
    t_hi: float
    n_used: int
    note: str = ""


@dataclass
class CheckRecord:
    name: str
    passed: bool
    measured: float
    bound: float
    slack: float
    note: str = ""


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, record: CheckRecord) -> None:
        self.checks.append(record)

    def to_dict(self) -> dict:
        return {
            "all_passed": self.passed,
            "checks": [
                {
                    "name": c.name,
                    "passed": c.passed,
                    "measured": c.measured,
                    "bound": c.bound,
                    "slack": c.slack,
                    "note": c.note,
                }
                for c in self.checks
            ],
        }


def fit_decay_rate(curve: MSCurve, window_fraction: float = 0.5) -> DecayFit:
    """OLS of log(mean) against t over the tail window; sigma_hat = -slope.

    Only points whose confidence half-width stays below the mean are used
    (signal above noise). An identically zero tail is reported as an infinite
    rate, and windows with fewer than 10 usable points as degenerate; neither
    raises.
    """
    t = np.asarray(curve.times)
    mean = np.asarray(curve.mean)
    hw = np.asarray(curve.ci_half)
    t_hi = float(t[-1])
    t_lo = t_hi - window_fraction * (t_hi - float(t[0]))
    window = t >= t_lo - 1e-12
    if np.all(mean[window] == 0.0):
        return DecayFit(
            sigma_hat=math.inf,
            intercept=-math.inf,
            r_squared=float("nan"),
            t_lo=t_lo,
            t_hi=t_hi,
            n_used=0,
            note="mean identically zero in window: infinite-rate marker",
        )
    usable = window & (mean > 0.0) & (hw < mean)
    n_used = int(np.count_nonzero(usable))
    if n_used < 10:
        return DecayFit(
            sigma_hat=float("nan"),
            intercept=float("nan"),
            r_squared=float("nan"),
            t_lo=t_lo,
            t_hi=t_hi,
            n_used=n_used,
            note=f"degenerate window: only {n_used} usable points",
        )
    x = t[usable]
    y = np.log(mean[usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0.0 else 1.0
    return DecayFit(
        sigma_hat=-float(slope),
        intercept=float(intercept),
        r_squared=r2,
        t_lo=t_lo,
        t_hi=t_hi,
        n_used=n_used,
    )


def check_ms_bound(curve: MSCurve, cert: Certificate, ci_mult: float = 3.0) -> CheckRecord:
    """mean(t) <= B e^{-sigma t} + ci_mult * half_width(t) at every sampled t."""
    bound = cert.B * np.exp(-cert.sigma * np.asarray(curve.times)) + ci_mult * np.asarray(
        curve.ci_half
    )
    ratio = np.asarray(curve.mean) / bound
    worst = float(np.max(ratio))
    return CheckRecord(
        name="mean_square_bound",
        passed=worst <= 1.0 + 1e-12,
        measured=worst,
        bound=1.0,
        slack=math.inf if worst == 0.0 else 1.0 - worst,
        note=f"worst ratio of mean to certified bound (+{ci_mult} CI)",
    )


def check_decay_functional(
    curve: MSCurve, cert: Certificate, p: ProblemSpec, ci_mult: float = 3.0
) -> CheckRecord:
    """Normalized decay functional stays below the peak bound M.

    K(t) = mean(t) e^{sigma t} exp(-int_0^t [theta(s) + e^{sigma s} beta(s)] ds)
    must not exceed M = 1 + initial-segment energy; the comparison argument
    rests on exactly this quantity being trapped below M. The inner integral
    uses the trapezoid rule on the curve's own grid, and the bound is relaxed
    pointwise by the relative Monte Carlo uncertainty.
    """
    t = np.asarray(curve.times)
    mean = np.asarray(curve.mean)
    hw = np.asarray(curve.ci_half)
    g = theta_at(p, cert, t) + np.exp(cert.sigma * t) * beta_at(p, cert, t)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if g.size == 1:
        g = np.full_like(t, float(g[0]))
    inner = np.concatenate(
        ([0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(t)))
    )
    K = mean * np.exp(cert.sigma * t) * np.exp(-inner)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mean > 0.0, hw / np.where(mean > 0.0, mean, 1.0), 0.0)
    allowed = cert.M * (1.0 + ci_mult * rel)
    worst = float(np.max(K / allowed))
    return CheckRecord(
        name="decay_functional",
        passed=worst <= 1.0 + 1e-9,
        measured=worst,
        bound=1.0,
        slack=1.0 - worst,
        note="worst ratio of normalized decay functional to peak bound",
    )


def wilson_lower(k: int, n: int, z: float = WILSON_Z) -> float:
    """One-sided lower Wilson confidence bound for a binomial proportion."""
    if n == 0:
        return 0.0
    ph = k / n
    denom = 1.0 + z * z / n
    center = (ph + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(ph * (1.0 - ph) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, center - half)


@dataclass
class IntervalCheck:
    """Per-interval detail behind the almost-sure decay check."""

    Ns: np.ndarray
    thresholds: np.ndarray
    prob_bounds: np.ndarray
    vacuous: np.ndarray
    counts: np.ndarray
    freqs: np.ndarray
    wilson_lo: np.ndarray
    last_violation: np.ndarray  # per path; -1 when it never violates


def check_as_decay(records, cert: Certificate, asc: ASCertificate, n0: int = 2):
    """Empirical check of the per-interval tail bound.

    For each unit interval [N, N+1] with N >= n0, a path violates when its
    interval supremum exceeds e^{-sigma N / 2}. The certificate bounds the
    violation probability by interval_coeff * e^{-sigma N / 2}; the check
    passes when the one-sided lower Wilson bound of the observed frequency
    stays below that (capped at 1, where the bound is vacuous and reported as
    such). Also reports each path's last violating interval, the empirical
    analogue of the pathwise settling time.
    """
    sups = np.stack([r.interval_sups for r in sorted(records, key=lambda r: r.path_index)])
    n_paths, n_ints = sups.shape
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    if n_ints < n0 + 2:
        raise ValueError(
            f"horizon too short: need at least {n0 + 2} whole unit intervals, have {n_ints}"
        )
    Ns = np.arange(n0, n_ints)
    thresholds = np.exp(-cert.sigma * Ns / 2.0)
    raw_bounds = asc.interval_coeff * np.exp(-cert.sigma * Ns / 2.0)
    vacuous = raw_bounds >= 1.0
    prob_bounds = np.minimum(1.0, raw_bounds)

    viol = sups[:, n0:] > thresholds[None, :]
    counts = viol.sum(axis=0)
    freqs = counts / n_paths
    wl = np.array([wilson_lower(int(c), n_paths) for c in counts])
    per_n_pass = wl <= prob_bounds + 1e-12

    last_viol = np.full(n_paths, -1, dtype=int)
    rows, cols = np.nonzero(viol)
    for i, j in zip(rows, cols):
        last_viol[i] = max(last_viol[i], int(Ns[j]))

    worst = float(np.max(wl - prob_bounds)) if Ns.size else -math.inf
    record = CheckRecord(
        name="as_interval_bound",
        passed=bool(np.all(per_n_pass)),
        measured=worst,
        bound=0.0,
        slack=-worst,
        note=(
            f"{int(vacuous.sum())}/{Ns.size} intervals vacuous (bound >= 1); "
            f"worst excess of Wilson-lower frequency over bound"
        ),
    )
    detail = IntervalCheck(
        Ns=Ns,
        thresholds=thresholds,
        prob_bounds=prob_bounds,
        vacuous=vacuous,
        counts=counts,
        freqs=freqs,
        wilson_lo=wl,
        last_violation=last_viol,
    )
    return record, detail


@dataclass
class EnergyResidual:
    """Discrete defect of the pathwise energy identity.

    per_step[k] is |X(t_{k+1})|^2 - |X(t_k)|^2 minus the discrete increment
    2<X, AX + g> dt + ||h||^2 dt + 2<X, h> dW evaluated at t_k; cumulative is
    its running sum (the defect of the integrated identity) and rms the
    root-mean-square of the per-step series.
    """

    per_step: np.ndarray
    cumulative: np.ndarray
    rms: float
    total: float


def _delayed_states(states, n_init, dt, lags, ks):
    # same interpolation the stepper used: lag <= r keeps both nodes in range
    u = ks - lags / dt
    a_lo = np.floor(u).astype(int)
    frac = u - a_lo
    lo = states[a_lo + n_init]
    hi = states[a_lo + 1 + n_init]
    return lo + frac[:, None] * (hi - lo)


def energy_residual(record, m: HeatModelSpec) -> EnergyResidual:
    """Per-step residual of the energy identity along one retained path."""
    if record.states is None or record.dw is None:
        raise StateRetentionError(
            "energy residual needs a path simulated with retain_states=True"
        )
    dt = record.dt
    states = record.states
    dw = record.dw
    n_init = round(record.r / dt)
    n_steps = dw.shape[0]
    n_modes = states.shape[1]

    n = np.arange(1.0, n_modes + 1.0)
    lam = m.nu * n * n
    p = np.zeros(n_modes)
    p[: len(m.p_coeffs)] = m.p_coeffs

    ks = np.arange(n_steps, dtype=float)
    t = ks * dt
    x = states[n_init : n_init + n_steps]
    x_next = states[n_init + 1 : n_init + n_steps + 1]
    x_rho = _delayed_states(states, n_init, dt, np.atleast_1d(HEAT_RHO(t)), ks)
    x_tau = _delayed_states(states, n_init, dt, np.atleast_1d(HEAT_TAU(t)), ks)

    k1t = np.atleast_1d(np.asarray(m.k1(t), dtype=float))
    k2t = np.atleast_1d(np.asarray(m.k2(t), dtype=float))
    if k1t.size == 1:
        k1t = np.full(n_steps, float(k1t[0]))
    if k2t.size == 1:
        k2t = np.full(n_steps, float(k2t[0]))

    g = (m.b1 + k1t)[:, None] * x_rho + np.exp(-m.k * t)[:, None] * p[None, :]
    h = (m.b2 + k2t)[:, None] * x_tau

    x_ax = -np.einsum("km,m,km->k", x, lam, x)
    x_g = np.einsum("km,km->k", x, g)
    h_sq = np.einsum("km,km->k", h, h)
    x_h = np.einsum("km,km->k", x, h)

    msq_jump = np.einsum("km,km->k", x_next, x_next) - np.einsum("km,km->k", x, x)
    increment = 2.0 * (x_ax + x_g) * dt + h_sq * dt + 2.0 * x_h * dw
    per_step = msq_jump - increment
    cumulative = np.cumsum(per_step)
    return EnergyResidual(
        per_step=per_step,
        cumulative=cumulative,
        rms=float(np.sqrt(np.mean(per_step**2))),
        total=float(cumulative[-1]),
    )


def energy_refinement_study(
    m: HeatModelSpec,
    base_dt: float,
    levels: int = 4,
    n_paths: int = 20,
    horizon: float = 2.0,
    master_seed: int = 0,
):
    """Mean per-step RMS energy residual across dyadic step refinements.

    Returns (dts, mean_rms) over levels+1 step sizes base_dt / 2^j. Each level
    draws fresh increments from the keyed streams; the mean over paths makes
    the level-to-level reduction factor stable.
    """
    dts, rms = [], []
    for j in range(levels + 1):
        dt = base_dt / 2**j
        cfg = SimConfig(
            dt=dt,
            T=horizon,
            n_paths=n_paths,
            master_seed=master_seed,
            output_stride=max(1, round(1.0 / dt) // 8),
            retain_states=True,
        )
        recs = []
        for start in range(0, n_paths, 32):
            recs.extend(integrate_block(m, cfg, range(start, min(start + 32, n_paths))))
        vals = [energy_residual(r, m).rms for r in recs]
        dts.append(dt)
        rms.append(float(np.mean(vals)))
    return np.array(dts), np.array(rms)
