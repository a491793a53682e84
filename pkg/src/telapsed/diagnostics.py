"""L1 distances, the contraction functional G, paired-run reports and decay-rate fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .grid import Density
from .model import RateModel
from .solver import iter_autonomous


def _check_same(a: Density, b: Density) -> None:
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


def l1_distance(a: Density, b: Density) -> float:
    """Trapezoid integral of |a - b| over the node values."""
    _check_same(a, b)
    return a.grid.trapezoid(np.abs(a.values - b.values))


def mass_distance(a: Density, b: Density) -> float:
    """Sum of |cell mass differences|; the L1 norm the scheme itself contracts in.

    Unlike the trapezoid it does not misread the age-0 jump created when
    n0(0) differs from I(0).
    """
    _check_same(a, b)
    return float(np.abs(a.cell_mass - b.cell_mass).sum())


def sg(z):
    """Sign with sg(0) = 0."""
    return np.sign(z)


def g_integrand(model: RateModel, x, v1, v2, I1: float, I2: float) -> np.ndarray:
    r1 = model.rate(x, I1)
    r2 = model.rate(x, I2)
    diff = v1 - v2
    core = r1 * np.abs(diff) + np.abs(r1 - r2) * v2
    return core * (1.0 - sg(diff) * sg(I1 - I2))


def g_functional(model: RateModel, n1: Density, n2: Density, I1: float, I2: float) -> float:
    _check_same(n1, n2)
    grid = n1.grid
    return grid.trapezoid(g_integrand(model, grid.nodes, n1.values, n2.values, I1, I2))


@dataclass
class ContractionReport:
    times: np.ndarray
    distances: np.ndarray
    G_values: np.ndarray
    defects: np.ndarray      # forward-difference d/dt dist + G (mean of the two endpoints)
    max_violation: float     # largest per-step increase of the distance

    def violations(self, slack: float) -> int:
        return int(np.sum(np.diff(self.distances) > slack))

    def rows(self):
        d = np.append(self.defects, np.nan)
        return np.column_stack((self.times, self.distances, self.G_values, d))


def report_from_series(times, distances, G_values, dt: float) -> ContractionReport:
    times, distances, G_values = map(np.asarray, (times, distances, G_values))
    steps = np.diff(distances)
    defects = steps / dt + 0.5 * (G_values[:-1] + G_values[1:])
    mv = float(max(steps.max(initial=0.0), 0.0))
    return ContractionReport(times, distances, G_values, defects, mv)


def contraction_test(model: RateModel, n0_a: Density, n0_b: Density, T: float) -> ContractionReport:
    """Advance two autonomous solutions on one clock and record dist, G and defects.

    Distances are cell-mass L1 norms (see :func:`mass_distance`).
    """
    _check_same(n0_a, n0_b)
    grid = n0_a.grid
    x = grid.nodes
    ts, ds, gs = [], [], []
    for sa, sb in zip(iter_autonomous(model, n0_a), iter_autonomous(model, n0_b)):
        va, vb = sa.values, sb.values
        ts.append(sa.t)
        ds.append(float(np.abs(sa.masses - sb.masses).sum()))
        gs.append(grid.trapezoid(g_integrand(model, x, va, vb, sa.I, sb.I)))
        if sa.t >= T - 1e-9 * grid.dx:
            break
    return report_from_series(ts, ds, gs, grid.dt)


def decay_rate(t, values) -> float:
    """Least-squares exponential rate -d log(v)/dt over v in [1e-10, 0.5 v(0)].

    A trace that never falls below half its initial value has no decay window;
    it is then fitted over all samples, which gives ~0 for a flat trace.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if np.sum(v > 1e-13) < 10:
        raise ValueError("need at least 10 samples above 1e-13")
    v0 = v[0]
    mask = (v >= 1e-10) & (v <= 0.5 * v0)
    if not mask.any():
        if np.all(v > 0.5 * v0):
            mask = np.ones_like(v, dtype=bool)
        else:
            raise NumericalError("no decay regime")
    if mask.sum() < 2:
        raise NumericalError("no decay regime")
    slope = np.polyfit(t[mask], np.log(v[mask]), 1)[0]
    return float(-slope)
