"""Time stepping for the nonlinear (no delay) and the linear input-driven equations.

The scheme uses ``dt = dx`` so transport is an exact index shift. With the rate
frozen over a step, cell masses follow the exact survival law along
characteristics; the mass that fires during the step re-enters at age 0, so
mass is conserved exactly. The activity ``int r(x, J) n dx`` is integrated
exactly for the in-cell survival profiles; on the stationary profile it equals
``Phi(J)``, which makes ``n(., I_bar)`` an exact fixed point of the scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np
from scipy.optimize import brentq

from .errors import NumericalError
from .grid import CellWeights, Density, Grid, cell_weights
from .model import RateModel, phi1


def transport(masses: np.ndarray, w: CellWeights, h: float) -> tuple[np.ndarray, float]:
    """Shift-and-decay one step; returns (new masses with empty age-0 cell, fired mass)."""
    m = masses
    c_next = np.empty_like(w.c)
    c_next[:-1] = w.c[1:]
    c_next[-1] = w.tail_cell(h)
    surv = w.e * c_next / w.c
    tail_keep = math.exp(-w.tail_rate * h)
    new = np.empty_like(m)
    new[0] = 0.0
    new[1:-1] = m[:-2] * surv[:-1]
    new[-1] = m[-2] * surv[-1] + m[-1] * tail_keep
    fired = float(np.dot(m[:-1], 1.0 - surv) + m[-1] * (1.0 - tail_keep))
    return new, fired


def _activity(masses: np.ndarray, w: CellWeights) -> float:
    return float(np.dot(masses, w.cell_rate))


def explicit_activity(model: RateModel, n: Density, J: float) -> float:
    """I = int r(x, J) n(x) dx with the rate argument given."""
    return _activity(n.cell_mass, cell_weights(model, n.grid, J))


def _phi1(z: float) -> float:
    return 1.0 - 0.5 * z if abs(z) < 1e-8 else -math.expm1(-z) / z


def _step_activity_fn(model: RateModel, grid: Grid, masses: np.ndarray) -> Callable[[float], float]:
    """O(1)-per-call activity for step-type rates: r0 * mass + mass above the threshold."""
    h, N = grid.dx, grid.n_cells
    x_max = N * h
    lo, hi = model.r0, model.r0 + 1.0
    prefix = np.concatenate(([0.0], np.cumsum(masses[:-1])))  # prefix[j] = sum m[:j]
    m_tail = float(masses[-1])

    def A(I: float) -> float:
        s = model.threshold(I)
        if s >= x_max:
            return lo * prefix[N] + m_tail * (hi if s <= x_max else lo)
        k = min(max(int(s // h), 0), N - 1)
        a = min(max(s - k * h, 0.0), h)
        b = h - a
        dR = lo * a + hi * b
        c_k = a * _phi1(lo * a) + math.exp(-lo * a) * b * _phi1(hi * b)
        return (lo * prefix[k] + masses[k] * -math.expm1(-dR) / c_k
                + hi * (prefix[N] - prefix[k + 1]) + hi * m_tail)

    return A


def _solve_implicit(model: RateModel, grid: Grid, masses: np.ndarray,
                    guess: float | None = None) -> tuple[float, CellWeights]:
    if not model.inhibitory:
        raise ValueError("implicit activity requires inhibition")
    if model.kind in ("step", "tanh_phi"):
        act = _step_activity_fn(model, grid, masses)
    else:
        act = lambda i: _activity(masses, cell_weights(model, grid, i))  # noqa: E731
    values: dict[float, float] = {}

    def F(i: float) -> float:
        v = values.get(i)
        if v is None:
            v = values[i] = i - act(i)
        return v

    total = float(masses.sum())
    upper = model.rM * max(total, 1e-300) * (1 + 1e-9) + 1e-300
    lo, hi = 0.0, upper
    if guess is not None:
        delta = 1e-3 * model.rM
        a, b = max(guess - delta, 0.0), min(guess + delta, upper)
        if F(a) <= 0 <= F(b):
            lo, hi = a, b
    flo, fhi = F(lo), F(hi)
    grow = 0
    while fhi < 0:
        hi *= 1.5
        fhi = F(hi)
        grow += 1
        if grow > 60:
            raise NumericalError("no sign change for the implicit activity equation")
    if flo == 0:
        root = lo
    elif fhi == 0:
        root = hi
    else:
        root = brentq(F, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(F(root)) > 1e-12 * model.rM:
        raise NumericalError(f"implicit activity residual {abs(F(root)):.3e}")
    return root, cell_weights(model, grid, root)


def solve_activity(model: RateModel, n: Density, guess: float | None = None) -> float:
    """Root of I = int r(x, I) n(x) dx; unique when the model is inhibitory."""
    return _solve_implicit(model, n.grid, n.cell_mass, guess)[0]


def step(model: RateModel, n: Density, I_boundary: float, I_rate_arg: float) -> Density:
    if np.any(n.cell_mass < 0):
        raise ValueError("negative density")
    w = cell_weights(model, n.grid, I_rate_arg)
    new, _ = transport(n.cell_mass, w, n.grid.dx)
    new[0] = I_boundary * w.c[0]
    return Density.from_masses(n.grid, new, w)


def k_ini(model: RateModel, n0: Density) -> float:
    """|| d/dx n0 + r(., I(0)) n0 ||_1 with one-sided differences."""
    grid = n0.grid
    I0 = solve_activity(model, n0)
    v = n0.values
    dv = np.empty_like(v)
    dv[:-1] = np.diff(v) / grid.dx
    dv[-1] = dv[-2]
    return grid.trapezoid(np.abs(dv + model.rate(grid.nodes, I0) * v))


# --------------------------------------------------------------------------- runs
@dataclass
class State:
    k: int
    t: float
    I: float           # activity (boundary flux) at time t
    J: float           # rate argument used for the step leaving time t
    masses: np.ndarray
    weights: CellWeights
    grid: Grid

    @property
    def density(self) -> Density:
        return Density.from_masses(self.grid, self.masses, self.weights)

    @property
    def values(self) -> np.ndarray:
        return self.masses / self.weights.node_weights


@dataclass
class TraceRecord:
    t: float
    I: float
    mass: float
    dist_to_ref: float | None = None


@dataclass
class Trace:
    t: np.ndarray
    I: np.ndarray
    mass: np.ndarray
    dist: np.ndarray = field(default_factory=lambda: np.empty(0))
    J: np.ndarray = field(default_factory=lambda: np.empty(0))

    def records(self) -> list[TraceRecord]:
        d = self.dist if self.dist.size else [None] * self.t.size
        return [TraceRecord(float(a), float(b), float(c), None if e is None else float(e))
                for a, b, c, e in zip(self.t, self.I, self.mass, d)]


def iter_autonomous(model: RateModel, n0: Density, renormalize: bool = False) -> Iterator[State]:
    grid = n0.grid
    h = grid.dx
    m = n0.cell_mass.copy()
    I, w = _solve_implicit(model, grid, m)
    k = 0
    while True:
        yield State(k, k * h, I, I, m, w, grid)
        m, fired = transport(m, w, h)
        m[0] = fired
        if renormalize:
            m /= m.sum()
        I, w = _solve_implicit(model, grid, m, guess=I)
        k += 1


def iter_driven(model: RateModel, n0: Density, J: Callable[[int, float], float],
                renormalize: bool = False) -> Iterator[State]:
    """Explicit-activity stepping with rate argument ``J(k, t)`` (linear or delayed)."""
    grid = n0.grid
    h = grid.dx
    m = n0.cell_mass.copy()
    k = 0
    while True:
        t = k * h
        Jk = model.clamp(J(k, t))
        w = cell_weights(model, grid, Jk)
        m_next, fired = transport(m, w, h)
        yield State(k, t, _activity(m, w), Jk, m, w, grid)
        m = m_next
        m[0] = fired
        if renormalize:
            m /= m.sum()
        k += 1


def collect(states: Iterator[State], T: float, reference: Density | None = None,
            on_state: Callable[[State], None] | None = None) -> tuple[Density, Trace]:
    """Drive a state iterator up to time T and record the trace."""
    t_l, i_l, m_l, d_l, j_l = [], [], [], [], []
    last = None
    for s in states:
        t_l.append(s.t)
        i_l.append(s.I)
        j_l.append(s.J)
        m_l.append(float(s.masses.sum()))
        if reference is not None:
            d_l.append(s.grid.trapezoid(np.abs(s.values - reference.values)))
        if on_state is not None:
            on_state(s)
        last = s
        if s.t >= T - 1e-9 * s.grid.dx:
            break
    trace = Trace(np.array(t_l), np.array(i_l), np.array(m_l), np.array(d_l), np.array(j_l))
    return last.density, trace


def run_autonomous(model: RateModel, n0: Density, T: float, reference: Density | None = None,
                   renormalize: bool = False, on_state=None) -> tuple[Density, Trace]:
    """Nonlinear equation without delay. The default reference is the steady state."""
    if reference is None:
        from .steadystate import fixed_point_phi
        reference = fixed_point_phi(model, n0.grid).density
    return collect(iter_autonomous(model, n0, renormalize), T, reference, on_state)


def as_input(J, h: float) -> Callable[[int, float], float]:
    if callable(J):
        return lambda k, t: float(J(t))
    arr = np.asarray(J, dtype=float)
    if arr.ndim == 0:
        return lambda k, t: float(arr)
    return lambda k, t: float(arr[min(k, arr.size - 1)])


def run_linear(model: RateModel, n0: Density, J, T: float, reference: Density | None = None,
               on_state=None) -> tuple[Density, Trace]:
    """Linear equation with prescribed input J (callable of t, per-step array, or constant)."""
    return collect(iter_driven(model, n0, as_input(J, n0.grid.dx)), T, reference, on_state)
