"""Delayed activity feedback, large-delay limit profiles and Cesàro-mean errors."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import Density, Grid
from .model import RateModel
from .solver import collect, iter_driven
from .steadystate import phi, stationary_density

log = logging.getLogger(__name__)


class ActivityHistory:
    """Ring buffer holding I on [t - d, t) at step resolution."""

    def __init__(self, steps_per_delay: int, I_ini: float):
        if steps_per_delay < 1:
            raise ValueError("delay must span at least one step")
        self.steps_per_delay = steps_per_delay
        self.buffer = np.full(steps_per_delay, float(I_ini))
        self._pos = 0

    def delayed(self) -> float:
        """I(t - d) for the current step."""
        return float(self.buffer[self._pos])

    def push(self, I: float) -> None:
        self.buffer[self._pos] = I
        self._pos = (self._pos + 1) % self.steps_per_delay


def snap_delay(d: float, dt: float) -> int:
    if not d > 0:
        raise ValueError("delay must be > 0")
    steps = max(int(round(d / dt)), 1)
    rel = abs(steps * dt - d) / d
    if rel > 1e-6:
        log.warning("delay %.6g snapped to %.6g (relative change %.2e)", d, steps * dt, rel)
    return steps


@dataclass
class LimitProfile:
    """Iterates Phi^k(I_ini), k = 0..N, and the stationary densities n(., Phi^k), k < N."""

    iterates: list[float]
    densities: list[Density] = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.iterates) - 1

    def activity(self, tau):
        """Limit activity: Phi^(k+1)(I_ini) on [k, k + 1)."""
        k = np.clip(np.floor(np.asarray(tau, dtype=float)).astype(int), 0, self.N - 1)
        return np.asarray(self.iterates)[k + 1]


def limit_profile(model: RateModel, I_ini: float, N: int, grid: Grid | None = None,
                  with_densities: bool = True) -> LimitProfile:
    if N < 1:
        raise ValueError("N must be >= 1")
    its = [model.clamp(I_ini)]
    for _ in range(N):
        its.append(phi(model, its[-1], grid))
    dens = [stationary_density(model, v, grid) for v in its[:-1]] if with_densities else []
    return LimitProfile(its, dens)


@dataclass
class DelayTrace:
    d: float               # snapped delay
    steps_per_delay: int
    t: np.ndarray
    I: np.ndarray
    J: np.ndarray
    mass: np.ndarray
    dist: np.ndarray       # to the optional reference
    dist_profile: np.ndarray  # to the limit profile density of the current tau-interval

    @property
    def tau(self) -> np.ndarray:
        return self.t / self.d


def run_delayed(model: RateModel, n0: Density, I_ini: float, d: float, T: float,
                reference: Density | None = None, profile: LimitProfile | None = None,
                ) -> tuple[Density, DelayTrace]:
    """Activity feedback through I(t - d); I = I_ini on [-d, 0)."""
    grid = n0.grid
    s = snap_delay(d, grid.dt)
    hist = ActivityHistory(s, model.clamp(I_ini))
    prof_vals = [p.values for p in profile.densities] if profile is not None else []
    dprof: list[float] = []

    def J(k, t):
        return hist.delayed()

    def observe(state):
        hist.push(state.I)
        if prof_vals:
            q = min(state.k // s, len(prof_vals) - 1)
            dprof.append(grid.trapezoid(np.abs(state.values - prof_vals[q])))

    final, tr = collect(iter_driven(model, n0, J), T, reference, observe)
    return final, DelayTrace(s * grid.dt, s, tr.t, tr.I, tr.J, tr.mass, tr.dist, np.array(dprof))


@dataclass
class CesaroError:
    activity: float
    density: float | None
    per_tau: np.ndarray  # |I_d - I_inf| at each step, for inspecting pointwise behaviour


def cesaro_error(trace: DelayTrace, profile: LimitProfile, N: int | None = None) -> CesaroError:
    """Left-endpoint sums of int_0^N |I_d - I_inf| dtau (and the density analogue)."""
    N = profile.N if N is None else N
    if N > profile.N:
        raise ValueError("profile has fewer intervals than requested")
    n_steps = N * trace.steps_per_delay
    if trace.t.size < n_steps:
        raise ValueError(f"trace too short: {trace.t.size} steps < {n_steps}")
    dtau = 1.0 / trace.steps_per_delay
    tau = trace.tau[:n_steps]
    err = np.abs(trace.I[:n_steps] - profile.activity(tau))
    dens = None
    if trace.dist_profile.size >= n_steps:
        dens = float(trace.dist_profile[:n_steps].sum() * dtau)
    return CesaroError(float(err.sum() * dtau), dens, err)


def iterate_error_bound(gamma_bar: float, rM: float, r0: float, alpha: float, N: int
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Bounds C_1..C_N on activity errors and D_1..D_N on density errors per delay interval."""
    if not 0 < alpha < r0:
        raise ValueError("need 0 < alpha < r0")
    gap = abs(r0 - alpha)
    C, D = [0.0], []
    for _ in range(N):
        D.append(2.0 + 2.0 * gamma_bar * C[-1] / gap)
        C.append(2.0 * rM + gamma_bar * (2.0 * rM / gap + 1.0) * C[-1])
    return np.array(C[1:]), np.array(D)


def cesaro_bound(gamma_bar: float, rM: float, r0: float, alpha: float, N: int, d: float
                 ) -> tuple[float, float]:
    """(activity, density) Cesàro bounds (1 / (d alpha)) * sum of the per-interval constants."""
    C, D = iterate_error_bound(gamma_bar, rM, r0, alpha, N)
    return float(C.sum() / (d * alpha)), float(D.sum() / (d * alpha))


@dataclass
class WeakNonlinearity:
    omega: float
    converges: bool
    x0: float | None
    rate: float | None


def weak_nl_check(model: RateModel, d: float = 0.0) -> WeakNonlinearity:
    """omega = gamma_bar (3 rM / r0 + 1); convergence for any delay when omega < 1."""
    if model.r0 <= 0:
        raise ValueError("weak-nonlinearity check needs r0 > 0")
    g = model.gamma_bar
    omega = g * (3.0 * model.rM / model.r0 + 1.0)
    if g == 0:
        return WeakNonlinearity(0.0, True, None, None)
    x0 = math.log(model.r0 / (g * model.rM)) / model.r0
    ok = omega < 1
    rate = abs(math.log(omega)) / (d + x0) if ok and d + x0 > 0 else None
    return WeakNonlinearity(omega, ok, x0, rate)


def weak_nl_violations(trace: DelayTrace, model: RateModel, I_bar: float, I_ini: float,
                       slack: float = 0.05, floor: float = 1e-12) -> tuple[float, float]:
    """Largest excess over the two f/g inequalities (positive means violated).

    f = |I - I_bar| / rM, g = distance to the steady state (needs a reference
    in the trace). The second inequality is checked with s = 0.
    """
    if trace.dist.size != trace.t.size:
        raise ValueError("trace lacks reference distances")
    rM, r0, gam = model.rM, model.r0, model.gamma_bar
    s = trace.steps_per_delay
    h = trace.t[1] - trace.t[0]
    f = np.abs(trace.I - I_bar) / rM
    g = trace.dist
    f_del = np.concatenate((np.full(s, abs(I_ini - I_bar) / rM), f))[: f.size]
    ex1 = float(np.max(f - (1 + slack) * (g + gam * f_del) - floor))
    # integral of exp(r0 tau) f(tau - d), left sums
    integ = np.concatenate(([0.0], np.cumsum(np.exp(r0 * trace.t[:-1]) * f_del[:-1] * h)))
    rhs = g[0] * np.exp(-r0 * trace.t) + 2 * gam * rM * np.exp(-r0 * trace.t) * integ
    ex2 = float(np.max(g - (1 + slack) * rhs - floor))
    return ex1, ex2
