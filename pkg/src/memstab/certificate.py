"""Exponential-decay certificate engine.

Constructs the mean-square bound E|X(t)|^2 <= B e^{-sigma t} by choosing the
free constants of the underlying dissipativity argument, and the almost-sure
supplement: a pathwise rate sigma/2 together with a summable per-interval tail
probability of the form coeff * e^{-sigma N / 2} for the unit intervals
[N, N+1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import HeatModelSpec, ProblemSpec
from .timefn import TABLE

#: Default fraction of the feasibility slack absorbed by gamma1. Small values
#: maximize the certified rate; a strictly positive floor keeps the forcing
#: contribution f_env / gamma1 finite whenever the forcing is nonzero.
DEFAULT_GAMMA1_FRACTION = 0.1

#: Default multiplicative safety on the selected rate. The argument needs the
#: constraint inequality strictly; the margin also dominates any quadrature
#: and root-finding error by many orders of magnitude.
DEFAULT_SAFETY = 0.95

DEFAULT_BISECT_TOL = 1e-9

#: Grid step and safety inflation used when a table envelope forces the
#: boundedness constant to be estimated by sampling instead of exactly.
B1_GRID_STEP = 1e-3
B1_INFLATION = 0.05


class InfeasibleError(ValueError):
    """The gain-margin condition fails; no decay certificate exists."""


class BoundednessError(ValueError):
    """An envelope grows against e^{sigma t}; no almost-sure supplement exists."""


def check_gain_margin(lambda1, delta1, delta2, delta3):
    """Feasibility inequality delta1*lambda1 > 2*sqrt(delta2) + delta3.

    Returns (pass, slack) with slack = delta1*lambda1 - 2*sqrt(delta2) - delta3.
    """
    slack = delta1 * lambda1 - 2.0 * math.sqrt(delta2) - delta3
    return slack > 0.0, slack


def gamma2_opt(delta2: float, sigma: float, r: float) -> float:
    """Minimizer of gamma2 + e^{sigma r} delta2 / gamma2 over gamma2 > 0."""
    return math.sqrt(delta2 * math.exp(sigma * r))


def _sigma_objective(sigma, a, delta2, delta3, r):
    """Constraint residual after gamma2 has been eliminated at its optimum.

    Strictly increasing in sigma; its unique root is the largest admissible
    rate. For delta2 = 0 the optimal gamma2 degenerates to 0 and the residual
    omits the drift-gain term entirely.
    """
    if delta2 > 0.0:
        return sigma + 2.0 * math.sqrt(delta2) * np.exp(0.5 * sigma * r) + delta3 * np.exp(sigma * r) - a
    return sigma + delta3 * np.exp(sigma * r) - a


def solve_sigma_star(a, delta2, delta3, r, tol=DEFAULT_BISECT_TOL):
    """Root of the eliminated constraint residual, by bracketing + bisection.

    Requires a > 2*sqrt(delta2) + delta3, so the residual is negative at 0;
    it grows at least linearly, so doubling finds an upper bracket quickly.
    """
    if a <= 2.0 * math.sqrt(delta2) + delta3:
        raise InfeasibleError(
            "no admissible decay rate: need a > 2*sqrt(delta2) + delta3 "
            f"(a={a}, delta2={delta2}, delta3={delta3})"
        )
    lo = 0.0
    hi = 1.0
    while _sigma_objective(hi, a, delta2, delta3, r) <= 0.0:
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _sigma_objective(mid, a, delta2, delta3, r) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def solve_sigma(a, delta2, delta3, r, sigma1, safety=DEFAULT_SAFETY, tol=DEFAULT_BISECT_TOL):
    """Select the certified rate sigma in (0, sigma1) and its gamma2.

    For delta2 > 0 gamma2 is pinned at its per-sigma optimum
    sqrt(delta2 * e^{sigma r}); for delta2 = 0 it takes half of the remaining
    slack, which keeps it strictly positive so divisions by gamma2 stay finite.
    """
    if not 0.0 < safety < 1.0:
        raise ValueError("safety factor must lie strictly inside (0, 1)")
    star = solve_sigma_star(a, delta2, delta3, r, tol=tol)
    sigma = safety * min(star, sigma1)
    if delta2 > 0.0:
        gamma2 = gamma2_opt(delta2, sigma, r)
    else:
        gamma2 = 0.5 * (a - sigma - delta3 * math.exp(sigma * r))
    return sigma, gamma2


@dataclass(frozen=True)
class Certificate:
    """Mean-square decay certificate: E|X(t)|^2 <= B e^{-sigma t} for t >= 0."""

    gamma1: float
    gamma2: float
    sigma: float
    a: float
    R1: float
    R2: float
    R3: float
    M: float
    B: float
    constraint_slack: float
    r: float
    sigma1: float
    r3_weight: str = "sigma1"


@dataclass(frozen=True)
class ASCertificate:
    """Almost-sure supplement to a Certificate.

    B1 bounds alpha(t) + e^{sigma t} beta(t) uniformly; the probability that
    the path energy exceeds e^{-sigma N / 2} somewhere on [N, N+1] is at most
    interval_coeff * e^{-sigma N / 2}, which is summable, so eventually every
    path decays at rate at least as_rate = sigma / 2.
    """

    B1: float
    as_rate: float
    interval_coeff: float


def constraint_slack(p: ProblemSpec, gamma2: float, sigma: float, a: float) -> float:
    """Residual a - sigma - gamma2 - e^{sigma r}(delta2/gamma2 + delta3), recomputed."""
    esr = math.exp(sigma * p.r)
    return a - sigma - gamma2 - esr * p.g_env.delta / gamma2 - esr * p.h_env.delta


def build_certificate(
    p: ProblemSpec,
    gamma1_fraction: float = DEFAULT_GAMMA1_FRACTION,
    safety: float = DEFAULT_SAFETY,
    tol: float = DEFAULT_BISECT_TOL,
    r3_weight: str = "sigma1",
) -> Certificate:
    """Assemble the full mean-square certificate for a feasible problem.

    gamma1 takes gamma1_fraction of the feasibility slack, a = (delta1 -
    gamma1) * lambda1, and (sigma, gamma2) come from the constraint solver.
    The decay budget is then

        theta(t) = alpha1 + e^{sigma r} (alpha2 / gamma2 + alpha3),
        beta(t)  = f_env / gamma1 + beta2 / gamma2 + beta3,

    with R1 = int theta, R2 = int beta, R3 = int e^{w s} beta(s) ds, peak bound
    M = 1 + sup of the initial-segment energy, and B = e^{R1 + R3} M. The
    default R3 weight w is sigma1; "sigma" selects the tighter variant that the
    comparison argument actually needs (R3 shrinks, hence so does B).
    """
    if not 0.0 < gamma1_fraction < 1.0:
        raise ValueError("gamma1_fraction must lie strictly inside (0, 1)")
    if r3_weight not in ("sigma1", "sigma"):
        raise ValueError("r3_weight must be 'sigma1' or 'sigma'")
    d2, d3 = p.g_env.delta, p.h_env.delta
    ok, slack5 = check_gain_margin(p.lambda1, p.delta1, d2, d3)
    if not ok:
        raise InfeasibleError(
            f"gain margin fails: delta1*lambda1 = {p.delta1 * p.lambda1} "
            f"<= 2*sqrt(delta2) + delta3 = {2.0 * math.sqrt(d2) + d3}"
        )
    gamma1 = gamma1_fraction * (p.delta1 - (2.0 * math.sqrt(d2) + d3) / p.lambda1)
    a = (p.delta1 - gamma1) * p.lambda1
    sigma, gamma2 = solve_sigma(a, d2, d3, p.r, p.sigma1, safety=safety, tol=tol)

    esr = math.exp(sigma * p.r)
    R1 = p.alpha1.integral() + esr * (p.g_env.alpha.integral() / gamma2 + p.h_env.alpha.integral())
    R2 = p.f_env.integral() / gamma1 + p.g_env.beta.integral() / gamma2 + p.h_env.beta.integral()
    w3 = p.sigma1 if r3_weight == "sigma1" else sigma
    R3 = (
        p.f_env.integral(w3) / gamma1
        + p.g_env.beta.integral(w3) / gamma2
        + p.h_env.beta.integral(w3)
    )
    M = 1.0 + p.init_energy_sup
    B = math.exp(R1 + R3) * M

    slack = constraint_slack(p, gamma2, sigma, a)
    if slack <= 0.0:
        raise InfeasibleError(
            f"degenerate feasibility margin: constraint slack {slack} is not positive"
        )
    return Certificate(
        gamma1=gamma1,
        gamma2=gamma2,
        sigma=sigma,
        a=a,
        R1=R1,
        R2=R2,
        R3=R3,
        M=M,
        B=B,
        constraint_slack=slack,
        r=p.r,
        sigma1=p.sigma1,
        r3_weight=r3_weight,
    )


def theta_at(p: ProblemSpec, cert: Certificate, t):
    """Decay-budget envelope theta(t) of the certificate."""
    esr = math.exp(cert.sigma * p.r)
    return p.alpha1(t) + esr * (p.g_env.alpha(t) / cert.gamma2 + p.h_env.alpha(t))


def beta_at(p: ProblemSpec, cert: Certificate, t):
    """Decay-budget envelope beta(t) of the certificate."""
    return p.f_env(t) / cert.gamma1 + p.g_env.beta(t) / cert.gamma2 + p.h_env.beta(t)


def as_alpha_at(p: ProblemSpec, cert: Certificate, t):
    """State-coefficient envelope of the pathwise supremum estimate."""
    esr = math.exp(cert.sigma * p.r)
    return (
        p.alpha1(t)
        + cert.gamma2
        + (p.g_env.delta + p.g_env.alpha(t)) / cert.gamma2 * esr
        + 32.0 * (p.h_env.delta + p.h_env.alpha(t)) * esr
    )


def as_beta_at(p: ProblemSpec, cert: Certificate, t):
    """Inhomogeneous envelope of the pathwise supremum estimate."""
    return 2.0 * p.f_env(t) / cert.gamma1 + 2.0 * p.g_env.beta(t) / cert.gamma2 + 64.0 * p.h_env.beta(t)


def build_as_certificate(
    p: ProblemSpec,
    cert: Certificate,
    grid_step: float = B1_GRID_STEP,
    inflation: float = B1_INFLATION,
) -> ASCertificate:
    """Almost-sure supplement: bound alpha(t) + e^{sigma t} beta(t) by B1.

    Every exponential summand is nonincreasing once its decay rate is at least
    sigma, so for pure exponential envelopes the supremum sits exactly at
    t = 0. Table envelopes can rise inside their support; those are bracketed
    by a grid maximum over [0, T_g] inflated by a safety factor, where T_g
    covers every table support (all summands are monotone past it).
    """
    sigma = cert.sigma
    named = (
        ("f_env", p.f_env),
        ("drift beta", p.g_env.beta),
        ("diffusion beta", p.h_env.beta),
    )
    for name, tf in named:
        if not tf.weighted_sup_finite(sigma):
            raise BoundednessError(
                f"{name} grows against e^(sigma t) with sigma = {sigma}; "
                "the pathwise supplement needs every weighted envelope bounded"
            )

    envelopes = [p.alpha1, p.g_env.alpha, p.h_env.alpha, p.f_env, p.g_env.beta, p.h_env.beta]
    has_table = any(tf.kind == TABLE and not tf.is_zero() for tf in envelopes)
    if has_table:
        t_grid_end = max(1.0, max(tf.support_end() for tf in envelopes))
        t = np.arange(0.0, t_grid_end + grid_step, grid_step)
        vals = as_alpha_at(p, cert, t) + np.exp(sigma * t) * as_beta_at(p, cert, t)
        B1 = (1.0 + inflation) * float(np.max(vals))
    else:
        # all summands nonincreasing: the supremum is attained at t = 0 exactly
        B1 = float(as_alpha_at(p, cert, 0.0) + as_beta_at(p, cert, 0.0))
    return ASCertificate(
        B1=B1,
        as_rate=0.5 * sigma,
        interval_coeff=2.0 * cert.B * (1.0 + B1 / sigma),
    )


def certificate_json(cert: Certificate, asc: ASCertificate | None = None) -> dict:
    """Flat serializable document with the fixed certificate key set."""
    doc = {
        "gamma1": cert.gamma1,
        "gamma2": cert.gamma2,
        "sigma": cert.sigma,
        "a": cert.a,
        "R1": cert.R1,
        "R2": cert.R2,
        "R3": cert.R3,
        "M": cert.M,
        "B": cert.B,
        "constraint_slack": cert.constraint_slack,
    }
    if asc is not None:
        doc["B1"] = asc.B1
        doc["as_rate"] = asc.as_rate
        doc["interval_coeff"] = asc.interval_coeff
    return doc


@dataclass
class ConditionRecord:
    name: str
    passed: bool
    slack: float | None = None
    note: str = ""


@dataclass
class HypothesisReport:
    conditions: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def by_name(self, name: str) -> ConditionRecord:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)


def check_hypotheses(
    p: ProblemSpec,
    cert: Certificate | None = None,
    heat_model: HeatModelSpec | None = None,
    n_spot: int = 32,
    seed: int = 0,
) -> HypothesisReport:
    """Evaluate every decidable certificate hypothesis; report-only.

    When the built-in heat model is supplied, the coercivity condition is also
    spot-checked numerically on random spectral vectors in the truncated space
    (it holds with equality there, so the sampled slack should vanish).
    """
    conds = []

    coercive = p.delta1 > 0.0 and p.alpha1.is_integrable()
    note = ""
    slack1 = None
    if heat_model is not None:
        rng = np.random.default_rng(seed)
        n = np.arange(1.0, heat_model.n_modes + 1.0)
        alpha1_0 = p.alpha1(0.0)
        worst = math.inf
        for _ in range(n_spot):
            w = rng.standard_normal(heat_model.n_modes)
            h_sq = float(np.sum(n * n * w * w))
            l2_sq = float(np.sum(w * w))
            lhs = 2.0 * heat_model.nu * h_sq + alpha1_0 * l2_sq
            worst = min(worst, lhs - p.delta1 * h_sq)
        slack1 = worst
        coercive = coercive and worst >= -1e-12 * max(1.0, p.delta1)
        note = "numeric spot check on random spectral vectors"
    conds.append(ConditionRecord("coercivity", coercive, slack=slack1, note=note))

    conds.append(
        ConditionRecord(
            "drift_gain_envelope",
            p.g_env.delta >= 0.0 and p.g_env.alpha.is_integrable() and p.g_env.beta.is_integrable(),
        )
    )
    conds.append(
        ConditionRecord(
            "diffusion_gain_envelope",
            p.h_env.delta >= 0.0 and p.h_env.alpha.is_integrable() and p.h_env.beta.is_integrable(),
        )
    )
    conds.append(
        ConditionRecord(
            "weighted_integrability",
            p.sigma1 > 0.0
            and p.f_env.is_integrable(p.sigma1)
            and p.g_env.beta.is_integrable(p.sigma1)
            and p.h_env.beta.is_integrable(p.sigma1),
            note=f"weight rate {p.sigma1}",
        )
    )

    ok5, slack5 = check_gain_margin(p.lambda1, p.delta1, p.g_env.delta, p.h_env.delta)
    conds.append(ConditionRecord("gain_margin", ok5, slack=slack5))

    if cert is not None:
        bounded = all(
            tf.weighted_sup_finite(cert.sigma)
            for tf in (p.f_env, p.g_env.beta, p.h_env.beta)
        )
        conds.append(
            ConditionRecord(
                "envelope_boundedness",
                bounded,
                note=f"checked against rate {cert.sigma}",
            )
        )

    att = p.attestations
    conds.append(ConditionRecord("attested_measurability", att.measurable, note="user attestation"))
    conds.append(
        ConditionRecord("attested_hemicontinuity", att.hemicontinuous, note="user attestation")
    )
    conds.append(
        ConditionRecord("attested_operator_bound", att.bounded_operator, note="user attestation")
    )
    return HypothesisReport(conditions=conds)
