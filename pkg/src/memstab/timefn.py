"""Time-dependent coefficient envelopes with decidable integrability.

The certificate construction needs weighted integrals int_0^inf e^{w t} f(t) dt
and boundedness predicates for every envelope it touches. Restricting envelopes
to two families keeps all of those questions exact: finite sums of decaying
exponentials (closed-form integrals) and compactly supported interpolation
tables (exact exponential weighting per panel). Arbitrary callables are
deliberately not accepted because their weighted integrability is undecidable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EXPPOLY = "exppoly"
TABLE = "table"


class DivergentIntegralError(ValueError):
    """The requested weighted integral does not converge."""


def _panel_integral(t0: float, t1: float, f0: float, f1: float, w: float) -> float:
    """Exact value of int_{t0}^{t1} e^{w t} * (linear through (t0,f0),(t1,f1)) dt."""
    h = t1 - t0
    wh = w * h
    if abs(wh) < 1e-4:
        # series in wh; truncation error is O(wh^4), ~1e-16 relative at the cutoff
        e1 = h * (1.0 + wh / 2.0 + wh * wh / 6.0 + wh**3 / 24.0)
        e2 = h * h * (0.5 + wh / 3.0 + wh * wh / 8.0 + wh**3 / 30.0)
    else:
        ew = math.expm1(wh)
        e1 = ew / w
        e2 = (h * (ew + 1.0) - e1) / w
    slope = (f1 - f0) / h
    return math.exp(w * t0) * (f0 * e1 + slope * e2)


@dataclass(frozen=True)
class TimeFunction:
    """Nonnegative scalar function of time t >= 0 from a restricted family.

    kind "exppoly": t -> sum_j c_j * exp(-q_j * t) with all c_j >= 0, q_j >= 0.
    kind "table": linear interpolation of nonnegative samples on a strictly
    increasing grid starting at 0; identically zero beyond the last node.
    """

    kind: str
    exp_terms: tuple = ()
    times: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.kind == EXPPOLY:
            for c, q in self.exp_terms:
                if c < 0.0 or q < 0.0:
                    raise ValueError("exppoly terms require c >= 0 and q >= 0")
        elif self.kind == TABLE:
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.size < 2 or t.size != v.size:
                raise ValueError("table needs at least two matching (time, value) nodes")
            if t[0] != 0.0:
                raise ValueError("table grid must start at t = 0")
            if np.any(np.diff(t) <= 0.0):
                raise ValueError("table grid must be strictly increasing")
            if np.any(v < 0.0):
                raise ValueError("table values must be nonnegative")
        else:
            raise ValueError(f"unknown TimeFunction kind {self.kind!r}")

    @classmethod
    def exppoly(cls, terms) -> "TimeFunction":
        return cls(kind=EXPPOLY, exp_terms=tuple((float(c), float(q)) for c, q in terms))

    @classmethod
    def table(cls, times, values) -> "TimeFunction":
        return cls(
            kind=TABLE,
            times=tuple(float(t) for t in times),
            values=tuple(float(v) for v in values),
        )

    @classmethod
    def zero(cls) -> "TimeFunction":
        return cls(kind=EXPPOLY, exp_terms=())

    def _active_terms(self):
        return [(c, q) for c, q in self.exp_terms if c > 0.0]

    def __call__(self, t):
        """Evaluate at t >= 0 (scalar or array)."""
        arr = np.asarray(t, dtype=float)
        if np.any(arr < 0.0):
            raise ValueError("time must be nonnegative")
        if self.kind == EXPPOLY:
            out = np.zeros_like(arr)
            for c, q in self.exp_terms:
                out = out + c * np.exp(-q * arr)
        else:
            out = np.interp(arr, self.times, self.values, right=0.0)
        if np.ndim(out) == 0:
            return float(out)
        return out

    def is_zero(self) -> bool:
        if self.kind == EXPPOLY:
            return not self._active_terms()
        return all(v == 0.0 for v in self.values)

    def is_integrable(self, weight_rate: float = 0.0) -> bool:
        """Whether int_0^inf e^{weight_rate * t} f(t) dt is finite."""
        if self.kind == TABLE:
            return True  # compact support
        return all(q > weight_rate for _, q in self._active_terms())

    def integral(self, weight_rate: float = 0.0) -> float:
        """int_0^inf e^{weight_rate * t} f(t) dt, exact for both families."""
        if self.kind == EXPPOLY:
            total = 0.0
            for c, q in self._active_terms():
                if q <= weight_rate:
                    raise DivergentIntegralError(
                        f"term c={c} q={q} diverges against weight rate {weight_rate}"
                    )
                total += c / (q - weight_rate)
            return total
        total = 0.0
        for i in range(len(self.times) - 1):
            total += _panel_integral(
                self.times[i], self.times[i + 1], self.values[i], self.values[i + 1], weight_rate
            )
        return total

    def scaled(self, factor: float) -> "TimeFunction":
        if factor < 0.0:
            raise ValueError("scale factor must be nonnegative")
        if self.kind == EXPPOLY:
            return TimeFunction.exppoly([(factor * c, q) for c, q in self.exp_terms])
        return TimeFunction.table(self.times, [factor * v for v in self.values])

    def squared(self) -> "TimeFunction":
        """Pointwise square within the family.

        Exact for exppoly (product of exponentials). For tables the values are
        squared at the nodes; by convexity the interpolant then dominates the
        true square, which is the safe direction for an upper envelope.
        """
        if self.kind == EXPPOLY:
            terms = []
            n = len(self.exp_terms)
            for i in range(n):
                ci, qi = self.exp_terms[i]
                terms.append((ci * ci, 2.0 * qi))
                for j in range(i + 1, n):
                    cj, qj = self.exp_terms[j]
                    terms.append((2.0 * ci * cj, qi + qj))
            return TimeFunction.exppoly(terms)
        return TimeFunction.table(self.times, [v * v for v in self.values])

    def sup_bound(self) -> float:
        """sup over [0, inf); exppoly terms are nonincreasing so it sits at 0."""
        if self.kind == EXPPOLY:
            return sum(c for c, _ in self.exp_terms)
        return max(self.values)

    def weighted_sup_finite(self, rate: float) -> bool:
        """Whether sup_t e^{rate * t} f(t) is finite."""
        if self.kind == TABLE:
            return True
        return all(q >= rate for _, q in self._active_terms())

    def support_end(self) -> float:
        """Last time the function can still vary (0 for exppoly; grid end for tables)."""
        if self.kind == TABLE:
            return self.times[-1]
        return 0.0
