"""Distributed-birth equation and the two-population cross-coupled system.

Both use the renewal scheme of :mod:`telapsed.solver` with zero inflow at age
0: the mass fired during a step is redistributed over the kernel instead
(after transport, so nonnegativity is unconditional). A neuron reborn at age
y during the step has age y + U dt at its end, so a spread-out kernel is
injected convolved with that aging. An atom at age 0 lands in cell 0, which
makes the delta kernel reproduce the renewal run exactly.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from .errors import NumericalError
from .grid import Density, Grid, cell_weights
from .model import RateModel
from .solver import State, _solve_implicit, collect, transport
from .diagnostics import ContractionReport, g_integrand, report_from_series


@dataclass(frozen=True)
class BirthKernel:
    """Probability kernel B stored as cell masses (tail cell empty)."""

    grid: Grid
    cell_mass: np.ndarray
    atom_at_zero: bool = False

    def __post_init__(self):
        m = self.cell_mass
        if m.shape != (self.grid.n_cells + 1,):
            raise ValueError("kernel must have one mass per cell, tail included")
        if np.any(m < 0):
            raise ValueError("kernel must be nonnegative")
        if abs(m.sum() - 1.0) > 1e-9:
            raise ValueError(f"kernel mass {m.sum():.12g} != 1")

    @property
    def values(self) -> np.ndarray:
        """Cell-averaged density, for output."""
        return self.cell_mass / self.grid.dx

    @cached_property
    def injection(self) -> np.ndarray:
        """Where one unit of fired mass sits at the end of the step."""
        if self.atom_at_zero:
            return self.cell_mass
        out = 0.5 * self.cell_mass
        out[1:] += 0.5 * self.cell_mass[:-1]
        out[-1] += 0.5 * self.cell_mass[-1]
        return out

    @classmethod
    def delta0(cls, grid: Grid) -> "BirthKernel":
        m = np.zeros(grid.n_cells + 1)
        m[0] = 1.0
        return cls(grid, m, atom_at_zero=True)

    @classmethod
    def from_function(cls, grid: Grid, f) -> "BirthKernel":
        """Midpoint cell masses of a density f, renormalized to 1."""
        v = np.asarray(f(grid.nodes[:-1] + 0.5 * grid.dx), dtype=float)
        if np.any(v < 0):
            raise ValueError("kernel must be nonnegative")
        m = np.zeros(grid.n_cells + 1)
        m[:-1] = grid.dx * v
        total = m.sum()
        if total <= 0:
            raise ValueError("kernel has zero mass")
        return cls(grid, m / total)

    @classmethod
    def from_csv(cls, path, grid: Grid) -> "BirthKernel":
        with open(path, newline="") as fh:
            rows = [(float(r["x"]), float(r["B"])) for r in csv.DictReader(fh)]
        if not rows:
            raise ValueError(f"{path}: no kernel rows")
        x, b = np.array(rows).T
        return cls.from_function(grid, lambda z: np.interp(z, x, b, right=0.0))


def _check_grid(B: BirthKernel, n: Density) -> None:
    if B.grid != n.grid:
        raise ValueError("kernel and density live on different grids")


def step_distributed(model: RateModel, B: BirthKernel, n: Density,
                     guess: float | None = None) -> tuple[Density, float]:
    """One step; returns the new density and the activity used."""
    _check_grid(B, n)
    I, w = _solve_implicit(model, n.grid, n.cell_mass, guess)
    new, fired = transport(n.cell_mass, w, n.grid.dx)
    new += fired * B.injection
    w_new = cell_weights(model, n.grid, I)
    return Density.from_masses(n.grid, new, w_new), I


def iter_distributed(model: RateModel, B: BirthKernel, n0: Density) -> Iterator[State]:
    _check_grid(B, n0)
    grid = n0.grid
    h = grid.dx
    m = n0.cell_mass.copy()
    I, w = _solve_implicit(model, grid, m)
    k = 0
    while True:
        yield State(k, k * h, I, I, m, w, grid)
        m, fired = transport(m, w, h)
        m += fired * B.injection
        I, w = _solve_implicit(model, grid, m, guess=I)
        k += 1


def run_distributed(model: RateModel, B: BirthKernel, n0: Density, T: float,
                    reference: Density | None = None, on_state=None):
    return collect(iter_distributed(model, B, n0), T, reference, on_state)


def _stationary_masses(model: RateModel, B: BirthKernel, I: float):
    """Unit-firing stationary masses of the frozen-rate scheme and the implied activity."""
    grid = B.grid
    h = grid.dx
    w = cell_weights(model, grid, I)
    c_next = np.append(w.c[1:], w.tail_cell(h))
    surv = w.e * c_next / w.c
    b = B.injection
    m = np.empty_like(b)
    acc = b[0]
    m[0] = acc
    for j in range(grid.n_cells - 1):
        acc = acc * surv[j] + b[j + 1]
        m[j + 1] = acc
    keep = math.exp(-w.tail_rate * h)
    m[-1] = (m[-2] * surv[-1] + b[-1]) / (1.0 - keep)
    m /= m.sum()
    return m, float(np.dot(m, w.cell_rate)), w


def distributed_stationary(model: RateModel, B: BirthKernel) -> tuple[float, Density]:
    """Stationary activity and density of the discrete distributed-birth scheme (bisection)."""
    if not model.inhibitory:
        raise ValueError("stationary search requires an inhibitory model")
    f = lambda i: _stationary_masses(model, B, i)[1] - i  # noqa: E731
    lo, hi = 0.0, model.rM
    if f(lo) < 0 or f(hi) > 0:
        raise NumericalError("no sign change for the distributed fixed point")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    I = 0.5 * (lo + hi)
    m, _, w = _stationary_masses(model, B, I)
    return I, Density.from_masses(B.grid, m, w)


# ------------------------------------------------------------------ systems
@dataclass
class SystemState:
    n1: Density
    n2: Density
    I1: float
    I2: float
    m1: RateModel
    m2: RateModel
    B1: BirthKernel
    B2: BirthKernel
    t: float = 0.0

    @classmethod
    def start(cls, m1, m2, B1, B2, n1: Density, n2: Density) -> "SystemState":
        for B, n in ((B1, n1), (B2, n2)):
            _check_grid(B, n)
        if not (m1.inhibitory and m2.inhibitory):
            raise ValueError("both models must be inhibitory")
        I1 = _solve_implicit(m1, n1.grid, n1.cell_mass)[0]
        I2 = _solve_implicit(m2, n2.grid, n2.cell_mass)[0]
        return cls(n1, n2, I1, I2, m1, m2, B1, B2)

    @property
    def masses(self) -> tuple[float, float]:
        return self.n1.mass, self.n2.mass


def step_system(state: SystemState) -> SystemState:
    """Each population fires into the other's kernel: source B_i * I_j."""
    grid = state.n1.grid
    h = grid.dx
    w1 = cell_weights(state.m1, grid, state.I1)
    w2 = cell_weights(state.m2, grid, state.I2)
    a1, f1 = transport(state.n1.cell_mass, w1, h)
    a2, f2 = transport(state.n2.cell_mass, w2, h)
    a1 += f2 * state.B1.injection
    a2 += f1 * state.B2.injection
    I1, v1 = _solve_implicit(state.m1, grid, a1, state.I1)
    I2, v2 = _solve_implicit(state.m2, grid, a2, state.I2)
    return SystemState(Density.from_masses(grid, a1, v1), Density.from_masses(grid, a2, v2),
                       I1, I2, state.m1, state.m2, state.B1, state.B2, state.t + h)


def run_system(state: SystemState, T: float) -> tuple[SystemState, np.ndarray]:
    """Rows (t, I1, I2, mass1, mass2) up to time T."""
    rows = []
    h = state.n1.grid.dx
    while True:
        rows.append((state.t, state.I1, state.I2, *state.masses))
        if state.t >= T - 1e-9 * h:
            break
        state = step_system(state)
    return state, np.array(rows)


# ------------------------------------------------------------ non-expansion
def _g(model, grid, sa: State | Density, sb, Ia, Ib):
    va, vb = sa.values, sb.values
    return grid.trapezoid(g_integrand(model, grid.nodes, va, vb, Ia, Ib))


def nonexpansion_defect_distributed(model: RateModel, B: BirthKernel, n0_a: Density,
                                    n0_b: Density, T: float) -> ContractionReport:
    """Paired distributed-birth runs: cell-mass distance, G and defects per step."""
    if n0_a.grid != n0_b.grid:
        raise ValueError("mismatched grids")
    grid = n0_a.grid
    ts, ds, gs = [], [], []
    for sa, sb in zip(iter_distributed(model, B, n0_a), iter_distributed(model, B, n0_b)):
        ts.append(sa.t)
        ds.append(float(np.abs(sa.masses - sb.masses).sum()))
        gs.append(_g(model, grid, sa, sb, sa.I, sb.I))
        if sa.t >= T - 1e-9 * grid.dx:
            break
    return report_from_series(ts, ds, gs, grid.dt)


def nonexpansion_defect_system(a: SystemState, b: SystemState, T: float) -> ContractionReport:
    """Summed distances of two system solutions and the summed G functionals."""
    grid = a.n1.grid
    if b.n1.grid != grid:
        raise ValueError("mismatched grids")
    ts, ds, gs = [], [], []
    while True:
        ts.append(a.t)
        ds.append(float(np.abs(a.n1.cell_mass - b.n1.cell_mass).sum()
                        + np.abs(a.n2.cell_mass - b.n2.cell_mass).sum()))
        gs.append(_g(a.m1, grid, a.n1, b.n1, a.I1, b.I1) + _g(a.m2, grid, a.n2, b.n2, a.I2, b.I2))
        if a.t >= T - 1e-9 * grid.dx:
            break
        a, b = step_system(a), step_system(b)
    return report_from_series(ts, ds, gs, grid.dt)
