"""Spectral Euler-Maruyama simulation of the heat model with memory.

Paths live in the orthonormal Dirichlet sine basis, which diagonalizes the
heat operator and makes both energy norms exact coefficient sums. Delayed
lookups interpolate a trailing ring buffer of grid states. Each path draws its
Brownian increments from its own counter-based stream keyed by (master_seed,
path_index), so Monte Carlo results are bitwise independent of execution order
and worker count.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass

import numpy as np

from .model import HEAT_MEMORY_R, HEAT_RHO, HEAT_TAU, HeatModelSpec

#: Paths per vectorized block. Fixed (never derived from the worker count) so
#: that chunking, and therefore every floating-point result, is identical no
#: matter how the blocks are scheduled.
BLOCK = 32


class LookupRangeError(LookupError):
    """A delayed lookup left the window covered by the history buffer."""


class StateRetentionError(ValueError):
    """The requested diagnostic needs a path simulated with retain_states."""


@dataclass(frozen=True)
class SimConfig:
    """Time-stepping and Monte Carlo configuration."""

    dt: float
    T: float = 10.0
    n_paths: int = 200
    master_seed: int = 0
    output_stride: int = 8
    retain_states: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.T < self.dt:
            raise ValueError("horizon T must be at least one step")
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        spu = round(1.0 / self.dt)
        if spu < 1 or abs(spu * self.dt - 1.0) > 1e-9:
            raise ValueError(
                "1/dt must be an integer so steps align with unit intervals "
                "and the memory horizon"
            )

    @property
    def steps_per_unit(self) -> int:
        return round(1.0 / self.dt)

    @property
    def n_steps(self) -> int:
        return round(self.T / self.dt)


class HistoryBuffer:
    """Trailing window of grid states with linear-interpolation lookup.

    Stores the states at the nodes a * dt for the most recent node indices.
    Lookup anywhere inside [t_now - r_buf, t_now] interpolates the two
    bracketing nodes; lookup exactly at a node returns that node's stored
    state (a view, not a copy).
    """

    def __init__(self, dt: float, init_states: np.ndarray, t0_index: int = 0, margin: int = 1):
        init_states = np.asarray(init_states, dtype=float)
        n_nodes = init_states.shape[0]
        self.dt = float(dt)
        self._n_slots = n_nodes + margin
        self._ring = np.empty((self._n_slots,) + init_states.shape[1:], dtype=float)
        self._a_now = t0_index
        for j in range(n_nodes):
            a = t0_index - (n_nodes - 1) + j
            self._ring[a % self._n_slots] = init_states[j]
        self._a_oldest = t0_index - (n_nodes - 1)

    @property
    def t_now(self) -> float:
        return self._a_now * self.dt

    @property
    def r_buf(self) -> float:
        return (self._n_slots - 1) * self.dt

    def push(self, state: np.ndarray) -> None:
        self._a_now += 1
        self._ring[self._a_now % self._n_slots] = state
        self._a_oldest = max(self._a_oldest, self._a_now - self._n_slots + 1)

    def _node(self, a: int) -> np.ndarray:
        if a > self._a_now or a < self._a_oldest:
            raise LookupRangeError(
                f"node {a * self.dt:.6g} outside buffered window "
                f"[{self._a_oldest * self.dt:.6g}, {self.t_now:.6g}]"
            )
        return self._ring[a % self._n_slots]

    def lookup(self, s: float) -> np.ndarray:
        u = s / self.dt
        a = math.floor(u)
        frac = u - a
        if frac == 0.0:
            return self._node(a)
        lo = self._node(a)
        hi = self._node(a + 1)
        return lo + frac * (hi - lo)


def _initial_nodes(m: HeatModelSpec, dt: float) -> np.ndarray:
    """Initial segment sampled at the grid nodes of [-r, 0]."""
    n_init = round(HEAT_MEMORY_R / dt)
    s = (np.arange(n_init + 1) - n_init) * dt
    s = np.clip(s, -HEAT_MEMORY_R, 0.0)
    return m.phi.sample(s, HEAT_MEMORY_R, m.n_modes)


def check_step_stability(m: HeatModelSpec, dt: float) -> None:
    """Reject steps for which the stiffest retained mode is explicitly unstable.

    The top-mode amplification factor is 1 - dt * nu * n_modes^2; the explicit
    scheme diverges once its magnitude reaches 1, i.e. dt * nu * n_modes^2 >= 2.
    """
    if dt * m.nu * m.n_modes**2 >= 2.0:
        raise ValueError(
            f"explicit step unstable: dt * nu * n_modes^2 = {dt * m.nu * m.n_modes ** 2:.4g} >= 2"
        )


def init_history(m: HeatModelSpec, cfg: SimConfig) -> HistoryBuffer:
    """History buffer holding the initial segment on [-r, 0] with t_now = 0."""
    return HistoryBuffer(cfg.dt, _initial_nodes(m, cfg.dt), t0_index=0)


def em_step(
    state,
    hist: HistoryBuffer,
    t: float,
    dt: float,
    dw,
    m: HeatModelSpec,
    rho=HEAT_RHO,
    tau=HEAT_TAU,
):
    """One Euler-Maruyama step from time t.

    Per mode n: X_n + dt * (-nu n^2 X_n + (b1 + k1(t)) X_n(t - rho(t))
    + e^{-k t} p_n) + dw * (b2 + k2(t)) X_n(t - tau(t)), with one shared
    Brownian increment across all modes. `state` may carry a leading block
    axis, in which case `dw` holds one increment per block row. The delay laws
    default to the built-in model's and are only overridable for numerical
    experiments (the scheme evaluates them pointwise, nothing more).
    """
    state = np.asarray(state, dtype=float)
    n_modes = state.shape[-1]
    n = np.arange(1.0, n_modes + 1.0)
    lam = m.nu * n * n
    p = np.zeros(n_modes)
    p[: len(m.p_coeffs)] = m.p_coeffs

    x_rho = hist.lookup(t - rho(t))
    x_tau = hist.lookup(t - tau(t))
    drift = -lam * state + (m.b1 + m.k1(t)) * x_rho + math.exp(-m.k * t) * p
    diff = (m.b2 + m.k2(t)) * x_tau
    dw = np.asarray(dw, dtype=float)
    if state.ndim == 2:
        dw = dw[..., None]
    return state + dt * drift + dw * diff


@dataclass
class PathRecord:
    """Per-path output: strided energy samples and exact-grid interval suprema."""

    path_index: int
    times: np.ndarray
    msq: np.ndarray
    interval_sups: np.ndarray
    dt: float
    r: float
    states: np.ndarray | None = None  # (n_init + n_steps + 1, n_modes), nodes -r..T
    dw: np.ndarray | None = None


@dataclass
class MSCurve:
    """Monte Carlo estimate of t -> E|X(t)|^2 with 95% normal half-widths."""

    times: np.ndarray
    mean: np.ndarray
    ci_half: np.ndarray
    n_paths: int


def path_increments(master_seed: int, path_index: int, n_steps: int, dt: float) -> np.ndarray:
    """Brownian increments for one path from its keyed counter-based stream."""
    key = np.array([master_seed, path_index], dtype=np.uint64)
    rng = np.random.Generator(np.random.Philox(key=key))
    return rng.standard_normal(n_steps) * math.sqrt(dt)


def integrate_block(
    m: HeatModelSpec,
    cfg: SimConfig,
    path_indices,
    dw_rows: np.ndarray | None = None,
    rho=HEAT_RHO,
    tau=HEAT_TAU,
) -> list:
    """Simulate a block of paths in lockstep and return their PathRecords.

    All paths share the per-step delay evaluations and interpolation weights
    (the lag laws depend on time only), so the block is vectorized over paths.
    Supplying dw_rows overrides the keyed streams, e.g. for refining a fixed
    Brownian path dyadically.
    """
    check_step_stability(m, cfg.dt)
    path_indices = list(path_indices)
    blk = len(path_indices)
    dt = cfg.dt
    n_steps = cfg.n_steps
    n_init = round(HEAT_MEMORY_R / dt)

    if dw_rows is None:
        dw_rows = np.stack(
            [path_increments(cfg.master_seed, j, n_steps, dt) for j in path_indices]
        )
    else:
        dw_rows = np.asarray(dw_rows, dtype=float)
        if dw_rows.shape != (blk, n_steps):
            raise ValueError(f"dw_rows must have shape ({blk}, {n_steps})")

    init_nodes = _initial_nodes(m, dt)  # (n_init + 1, n_modes)
    init_block = np.broadcast_to(
        init_nodes[:, None, :], (n_init + 1, blk, m.n_modes)
    )
    hist = HistoryBuffer(dt, init_block, t0_index=0)

    X = np.array(init_block[-1])
    msq = np.empty((blk, n_steps + 1))
    msq[:, 0] = np.einsum("pm,pm->p", X, X)
    states = None
    if cfg.retain_states:
        states = np.empty((blk, n_init + n_steps + 1, m.n_modes))
        states[:, : n_init + 1] = np.swapaxes(init_block, 0, 1)

    for k in range(n_steps):
        X = em_step(X, hist, k * dt, dt, dw_rows[:, k], m, rho=rho, tau=tau)
        hist.push(X)
        msq[:, k + 1] = np.einsum("pm,pm->p", X, X)
        if states is not None:
            states[:, n_init + 1 + k] = X

    spu = cfg.steps_per_unit
    n_ints = int(math.floor(cfg.T + 1e-9))
    sups = np.empty((blk, n_ints))
    for N in range(n_ints):
        sups[:, N] = msq[:, N * spu : (N + 1) * spu + 1].max(axis=1)

    rec_idx = np.arange(0, n_steps + 1, cfg.output_stride)
    if rec_idx[-1] != n_steps:
        rec_idx = np.append(rec_idx, n_steps)
    times = rec_idx * dt

    records = []
    for i, j in enumerate(path_indices):
        records.append(
            PathRecord(
                path_index=j,
                times=times.copy(),
                msq=msq[i, rec_idx].copy(),
                interval_sups=sups[i].copy(),
                dt=dt,
                r=HEAT_MEMORY_R,
                states=states[i].copy() if states is not None else None,
                dw=dw_rows[i].copy() if cfg.retain_states else None,
            )
        )
    return records


def simulate_path(m: HeatModelSpec, cfg: SimConfig, path_index: int) -> PathRecord:
    """Simulate one path; a pure function of (master_seed, path_index)."""
    return integrate_block(m, cfg, [path_index])[0]


def aggregate_curve(records) -> MSCurve:
    """Combine PathRecords into the mean-square curve, in path order."""
    records = sorted(records, key=lambda r: r.path_index)
    msq = np.stack([r.msq for r in records])
    n = msq.shape[0]
    mean = msq.mean(axis=0)
    if n >= 2:
        half = 1.96 * msq.std(axis=0, ddof=1) / math.sqrt(n)
    else:
        half = np.zeros_like(mean)
    return MSCurve(times=records[0].times.copy(), mean=mean, ci_half=half, n_paths=n)


def _block_task(args):
    m, cfg, indices = args
    return integrate_block(m, cfg, indices)


def run_monte_carlo(m: HeatModelSpec, cfg: SimConfig, n_workers: int = 1):
    """Monte Carlo over cfg.n_paths paths; identical output for any n_workers.

    Paths are grouped into fixed-size blocks and reduced in path order, so the
    worker count only decides which process computes a block, never what it
    computes.
    """
    blocks = [
        list(range(i, min(i + BLOCK, cfg.n_paths))) for i in range(0, cfg.n_paths, BLOCK)
    ]
    tasks = [(m, cfg, b) for b in blocks]
    if n_workers > 1 and len(tasks) > 1:
        with multiprocessing.Pool(processes=n_workers) as pool:
            chunks = pool.map(_block_task, tasks)
    else:
        chunks = [_block_task(t) for t in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    return aggregate_curve(records), records
