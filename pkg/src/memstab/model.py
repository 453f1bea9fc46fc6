"""Problem data model: bounded delays, coefficient envelope bundles, and the
built-in stochastic heat model with memory mapped onto the abstract bundle.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .timefn import TimeFunction

DELAY_CONSTANT = "constant"
DELAY_INV_SIN = "inv_one_plus_abs_sin"
DELAY_INV_COS = "inv_one_plus_abs_cos"
DELAY_TABLE = "table"

#: Memory horizon of the built-in heat model. Its delay laws range over
#: [1/2, 1], so histories must extend one full time unit into the past.
HEAT_MEMORY_R = 1.0

#: Margin applied to the weighted-integrability rate when an envelope decays
#: at exactly the candidate rate (the weighted integral would diverge there).
B4_RATE_MARGIN = 0.95

#: Nodes used when taking the supremum of the initial-segment energy.
INIT_SUP_NODES = 1024


@dataclass(frozen=True)
class DelaySpec:
    """Continuous lag law t -> lag(t) with values in [0, r]."""

    r: float
    kind: str
    value: float = 0.0
    times: tuple = ()
    lags: tuple = ()

    def __post_init__(self):
        if self.r < 0.0:
            raise ValueError("memory horizon r must be nonnegative")
        if self.kind == DELAY_CONSTANT:
            if not 0.0 <= self.value <= self.r:
                raise ValueError("constant lag must lie in [0, r]")
        elif self.kind in (DELAY_INV_SIN, DELAY_INV_COS):
            if self.r < 1.0:
                raise ValueError("1/(1+|sin t|)-type lags reach 1, so r >= 1 is required")
        elif self.kind == DELAY_TABLE:
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.lags, dtype=float)
            if t.size < 2 or t.size != v.size:
                raise ValueError("delay table needs at least two matching nodes")
            if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
                raise ValueError("delay table grid must start at 0 and increase strictly")
            if np.any(v < 0.0) or np.any(v > self.r):
                raise ValueError("delay table lags must lie in [0, r]")
        else:
            raise ValueError(f"unknown delay kind {self.kind!r}")

    def __call__(self, t):
        """Evaluate the lag at t >= 0 (scalar or array); result lies in [0, r]."""
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0.0):
            raise ValueError("time must be nonnegative")
        if self.kind == DELAY_CONSTANT:
            out = np.full_like(arr, self.value)
        elif self.kind == DELAY_INV_SIN:
            out = 1.0 / (1.0 + np.abs(np.sin(arr)))
        elif self.kind == DELAY_INV_COS:
            out = 1.0 / (1.0 + np.abs(np.cos(arr)))
        else:
            # hold the last tabulated lag beyond the grid
            out = np.interp(arr, self.times, self.lags)
        if np.ndim(out) == 0:
            return float(out)
        return out


#: Delay laws of the built-in heat model; immutable, shared freely.
HEAT_RHO = DelaySpec(r=HEAT_MEMORY_R, kind=DELAY_INV_SIN)
HEAT_TAU = DelaySpec(r=HEAT_MEMORY_R, kind=DELAY_INV_COS)


@dataclass(frozen=True)
class GainEnvelope:
    """Quadratic gain bound (delta + alpha(t)) |u|^2 + beta(t) for a coefficient."""

    delta: float
    alpha: TimeFunction
    beta: TimeFunction

    def __post_init__(self):
        if self.delta < 0.0:
            raise ValueError("envelope constant delta must be nonnegative")


@dataclass(frozen=True)
class Attestations:
    """Operator regularity properties asserted by the user, not computed."""

    measurable: bool = False
    hemicontinuous: bool = False
    bounded_operator: bool = False


@dataclass(frozen=True)
class ProblemSpec:
    """Full coefficient bundle consumed by the certificate engine.

    lambda1 is the embedding constant lambda1 * |v|_2^2 <= ||v||^2, delta1 and
    alpha1 describe the coercivity of the principal operator, f_env bounds the
    squared dual norm of the forcing, g_env / h_env bound the delayed drift and
    diffusion coefficients, and sigma1 is the rate against which the beta
    envelopes and the forcing stay exponentially integrable.
    """

    lambda1: float
    delta1: float
    alpha1: TimeFunction
    f_env: TimeFunction
    g_env: GainEnvelope
    h_env: GainEnvelope
    sigma1: float
    rho: DelaySpec
    tau: DelaySpec
    init_energy_sup: float
    attestations: Attestations = field(default_factory=Attestations)

    def __post_init__(self):
        if self.lambda1 <= 0.0:
            raise ValueError("lambda1 must be positive")
        if self.delta1 <= 0.0:
            raise ValueError("delta1 must be positive")
        if self.sigma1 <= 0.0:
            raise ValueError("sigma1 must be positive")
        if self.rho.r != self.tau.r:
            raise ValueError("rho and tau must share one memory horizon r")
        if self.init_energy_sup < 0.0:
            raise ValueError("initial segment energy must be nonnegative")

    @property
    def r(self) -> float:
        return self.rho.r


PHI_CONSTANT = "constant"
PHI_BUMP = "bump"
PHI_LINEAR = "linear"


@dataclass(frozen=True)
class InitialSegment:
    """Initial history on s in [-r, 0], given as spectral coefficients.

    "constant": a fixed coefficient vector for every s.
    "bump": a single mode carrying amp * sin(pi (s + r) / r), zero at both ends.
    "linear": coefficients moving affinely from `start` at s = -r to `end` at 0.
    """

    kind: str
    coeffs: tuple = ()
    mode: int = 1
    amp: float = 1.0
    start: tuple = ()
    end: tuple = ()

    def __post_init__(self):
        if self.kind not in (PHI_CONSTANT, PHI_BUMP, PHI_LINEAR):
            raise ValueError(f"unknown initial segment kind {self.kind!r}")
        if self.kind == PHI_BUMP and self.mode < 1:
            raise ValueError("bump mode index must be >= 1")

    def sample(self, s, r: float, n_modes: int) -> np.ndarray:
        """Coefficient matrix of shape (len(s), n_modes) for s in [-r, 0]."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if np.any(s < -r - 1e-12) or np.any(s > 1e-12):
            raise ValueError("initial segment is only defined on [-r, 0]")
        out = np.zeros((s.size, n_modes))
        if self.kind == PHI_CONSTANT:
            c = np.asarray(self.coeffs, dtype=float)
            if c.size > n_modes:
                raise ValueError("more initial coefficients than retained modes")
            out[:, : c.size] = c
        elif self.kind == PHI_BUMP:
            if self.mode > n_modes:
                raise ValueError("bump mode exceeds retained modes")
            out[:, self.mode - 1] = self.amp * np.sin(math.pi * (s + r) / r)
        else:
            a = np.zeros(n_modes)
            b = np.zeros(n_modes)
            sa = np.asarray(self.start, dtype=float)
            sb = np.asarray(self.end, dtype=float)
            if sa.size > n_modes or sb.size > n_modes:
                raise ValueError("more initial coefficients than retained modes")
            a[: sa.size] = sa
            b[: sb.size] = sb
            w = (s + r) / r
            out = a[None, :] + w[:, None] * (b - a)[None, :]
        return out


def _gain_modulation_ok(tf: TimeFunction) -> bool:
    # bounded, nonincreasing and square-integrable
    if tf.kind == "exppoly":
        return all(q > 0.0 for c, q in tf.exp_terms if c > 0.0)
    vals = np.asarray(tf.values)
    return bool(np.all(np.diff(vals) <= 0.0))


@dataclass(frozen=True)
class HeatModelSpec:
    """Stochastic heat equation on (0, pi) with delayed drift and diffusion.

    dX = [nu * Xxx + (b1 + k1(t)) X(t - rho(t)) + e^{-k t} p] dt
         + (b2 + k2(t)) X(t - tau(t)) dw(t),  Dirichlet boundary,

    truncated onto the first n_modes orthonormal sine modes, with scalar noise
    shared by all modes and lag laws rho(t) = 1/(1+|sin t|), tau(t) = 1/(1+|cos t|).
    """

    nu: float
    b1: float
    b2: float
    k: float
    k1: TimeFunction = field(default_factory=TimeFunction.zero)
    k2: TimeFunction = field(default_factory=TimeFunction.zero)
    p_coeffs: tuple = ()
    phi: InitialSegment = field(
        default_factory=lambda: InitialSegment(kind=PHI_CONSTANT, coeffs=(1.0,))
    )
    n_modes: int = 16

    def __post_init__(self):
        if self.nu <= 0.0:
            raise ValueError("diffusivity nu must be positive")
        if self.b1 < 0.0 or self.b2 < 0.0:
            raise ValueError("gain constants b1, b2 must be nonnegative")
        if self.k <= 0.0:
            raise ValueError("forcing decay rate k must be positive")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if len(self.p_coeffs) > self.n_modes:
            raise ValueError("more forcing coefficients than retained modes")
        for name, tf in (("k1", self.k1), ("k2", self.k2)):
            if not _gain_modulation_ok(tf):
                raise ValueError(
                    f"{name} must be bounded, nonincreasing and square-integrable"
                )

    @property
    def p_norm_sq(self) -> float:
        """|p|_2^2 in the orthonormal basis: the plain coefficient sum of squares."""
        return float(sum(c * c for c in self.p_coeffs))


def map_heat_to_problem(m: HeatModelSpec) -> ProblemSpec:
    """Translate the heat model into the abstract envelope bundle.

    The drift gain satisfies |g(t,y)|^2 <= 4(b1^2 + k1^2(t))|y|^2 + 2 e^{-2kt}|p|^2
    and the diffusion gain ||h(t,y)||^2 <= 4(b2^2 + k2^2(t))|y|^2, so the
    envelope constants follow directly. The linear operator is exactly
    coercive with constant 2*nu and needs no time-dependent correction, and the
    weighted-integrability rate is 2k, pulled strictly below the decay rate of
    the forcing envelope whenever p is nonzero (the integral diverges at
    equality).
    """
    p_sq = m.p_norm_sq
    alpha2 = m.k1.squared().scaled(4.0)
    alpha3 = m.k2.squared().scaled(4.0)
    beta2 = TimeFunction.exppoly([(2.0 * p_sq, 2.0 * m.k)]) if p_sq > 0.0 else TimeFunction.zero()
    sigma1 = 2.0 * m.k
    if p_sq > 0.0:
        sigma1 = B4_RATE_MARGIN * 2.0 * m.k

    s = np.linspace(-HEAT_MEMORY_R, 0.0, INIT_SUP_NODES)
    states = m.phi.sample(s, HEAT_MEMORY_R, m.n_modes)
    init_sup = float(np.max(np.sum(states * states, axis=1)))

    return ProblemSpec(
        lambda1=1.0,
        delta1=2.0 * m.nu,
        alpha1=TimeFunction.zero(),
        f_env=TimeFunction.zero(),
        g_env=GainEnvelope(delta=4.0 * m.b1 * m.b1, alpha=alpha2, beta=beta2),
        h_env=GainEnvelope(delta=4.0 * m.b2 * m.b2, alpha=alpha3, beta=TimeFunction.zero()),
        sigma1=sigma1,
        rho=HEAT_RHO,
        tau=HEAT_TAU,
        init_energy_sup=init_sup,
        attestations=Attestations(measurable=True, hemicontinuous=True, bounded_operator=True),
    )


@dataclass
class ValidationItem:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    items: list

    @property
    def passed(self) -> bool:
        return all(it.passed for it in self.items)

    def failures(self) -> list:
        return [it for it in self.items if not it.passed]


def validate_problem(p: ProblemSpec) -> ValidationReport:
    """Itemized pass/fail for every sign and integrability precondition.

    Report-only: never raises, so it can be run on arbitrary user input.
    """
    items = []

    def add(name, passed, detail=""):
        items.append(ValidationItem(name=name, passed=bool(passed), detail=detail))

    add("lambda1_positive", p.lambda1 > 0.0)
    add("delta1_positive", p.delta1 > 0.0)
    add("delta2_nonneg", p.g_env.delta >= 0.0)
    add("delta3_nonneg", p.h_env.delta >= 0.0)
    add("sigma1_positive", p.sigma1 > 0.0)
    add("coercivity_alpha1_integrable", p.alpha1.is_integrable())
    add("drift_gain_alpha2_integrable", p.g_env.alpha.is_integrable())
    add("drift_gain_beta2_integrable", p.g_env.beta.is_integrable())
    add("diffusion_gain_alpha3_integrable", p.h_env.alpha.is_integrable())
    add("diffusion_gain_beta3_integrable", p.h_env.beta.is_integrable())
    add("forcing_env_integrable", p.f_env.is_integrable())
    add(
        "weighted_forcing_integrable",
        p.f_env.is_integrable(p.sigma1),
        f"rate {p.sigma1}",
    )
    add(
        "weighted_beta2_integrable",
        p.g_env.beta.is_integrable(p.sigma1),
        f"rate {p.sigma1}",
    )
    add(
        "weighted_beta3_integrable",
        p.h_env.beta.is_integrable(p.sigma1),
        f"rate {p.sigma1}",
    )
    add("delay_shared_horizon", p.rho.r == p.tau.r)

    t = np.linspace(0.0, 100.0, 10001)
    for name, d in (("delay_range_rho", p.rho), ("delay_range_tau", p.tau)):
        lag = np.atleast_1d(d(t))
        add(name, bool(np.all(lag >= 0.0) and np.all(lag <= d.r + 1e-12)))

    add("init_energy_nonneg", p.init_energy_sup >= 0.0)
    add("attested_measurability", p.attestations.measurable, "user attestation")
    add("attested_hemicontinuity", p.attestations.hemicontinuous, "user attestation")
    add("attested_operator_bound", p.attestations.bounded_operator, "user attestation")
    return ValidationReport(items=items)
