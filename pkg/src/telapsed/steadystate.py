"""Survival exponent, activity map Phi and the stationary state."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, TailError
from .grid import CellWeights, Density, Grid, cell_weights
from .model import RateModel

DEFAULT_DX = 1e-3

log = logging.getLogger(__name__)


def _grid(model: RateModel, grid: Grid | None) -> Grid:
    return grid if grid is not None else Grid.for_model(model, DEFAULT_DX)


def cumulative_rate(model: RateModel, x, I: float, dx: float = DEFAULT_DX):
    """R(x, I) = int_0^x r(y, I) dy, cell by cell on a uniform grid of step dx."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(xs < 0):
        raise ValueError("x must be >= 0")
    out = np.empty_like(xs)
    for k, xv in enumerate(xs):
        n_full = int(math.floor(xv / dx + 1e-12))
        left = np.arange(n_full) * dx
        dR, _ = model.cell_terms(left, dx, I)
        total = float(np.sum(dR))
        rest = xv - n_full * dx
        if rest > 1e-15:
            dr_last, _ = model.cell_terms(np.array([n_full * dx]), rest, I)
            total += float(dr_last[0])
        out[k] = total
    return float(out[0]) if np.ndim(x) == 0 else out


@dataclass(frozen=True)
class PhiValue:
    value: float
    tail_bound: float  # width of the analytic tail bracket, propagated to Phi
    weights: CellWeights


def phi_detail(model: RateModel, I: float, grid: Grid | None = None,
               tail_tol: float = 1e-10) -> PhiValue:
    grid = _grid(model, grid)
    w = cell_weights(model, grid, I)
    R = w.R
    body = float(np.dot(np.exp(-R[:-1]), w.c))
    edge = math.exp(-R[-1])
    tail = edge / w.tail_rate
    hi = edge / model.r0 if model.r0 > 0 else math.inf
    lo = edge / model.rM
    integral = body + tail
    width = (hi - lo) / integral ** 2  # first-order effect on 1/integral
    if width > tail_tol * (1.0 / integral):
        raise TailError(f"tail bracket {width:.3e} too wide at I={I}; increase x_max")
    return PhiValue(1.0 / integral, width, w)


def phi(model: RateModel, I: float, grid: Grid | None = None) -> float:
    """Activity map Phi(I) = (int_0^inf exp(-R(x, I)) dx)^-1."""
    return phi_detail(model, I, grid).value


def stationary_density(model: RateModel, I: float, grid: Grid | None = None) -> Density:
    """Unit-mass profile Phi(I) exp(-R(x, I))."""
    grid = _grid(model, grid)
    p = phi_detail(model, I, grid)
    values = p.value * np.exp(-p.weights.R)
    return Density.from_masses(grid, values * p.weights.node_weights, p.weights)


@dataclass
class SteadyState:
    I_bar: float
    density: Density
    residual: float
    tail_bound: float


def fixed_point_phi(model: RateModel, grid: Grid | None = None) -> SteadyState:
    """Unique root of Phi(I) = I on [0, rM] by bisection (inhibitory models only)."""
    if not model.inhibitory:
        raise ValueError("fixed point search requires an inhibitory model (Phi non-increasing)")
    grid = _grid(model, grid)
    f = lambda i: phi(model, i, grid) - i  # noqa: E731
    lo, hi = 0.0, model.rM
    flo, fhi = f(lo), f(hi)
    if flo < 0 or fhi > 0:
        raise NumericalError(f"bisection bracket failed: F(0)={flo}, F(rM)={fhi}")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        fm = f(mid)
        if fm == 0.0:
            lo = hi = mid
            break
        if fm > 0:
            lo = mid
        else:
            hi = mid
    cands = [(abs(f(v)), v) for v in {lo, hi}]
    residual, i_bar = min(cands)
    if residual > 1e-12 * model.rM:
        raise NumericalError(f"fixed point residual {residual:.3e} above 1e-12*rM (Phi discontinuous?)")
    p = phi_detail(model, i_bar, grid)
    return SteadyState(i_bar, stationary_density(model, i_bar, grid), residual, p.tail_bound)


@dataclass(frozen=True)
class IntegrabilityCheck:
    survival_at_rM: float     # int exp(-R(x, rM)) dx, tail included
    sup_dI_moment: float      # max over sampled I of int |d_I R| exp(-R) dx
    I_samples: np.ndarray
    ok: bool


def check_integrability(model: RateModel, grid: Grid | None = None, samples: int = 33,
                        limit: float = 1e6) -> IntegrabilityCheck:
    """Sample the two integrability conditions the stationary theory needs.

    Only a sampled check: d_I R is a central difference on a finite I grid and
    the tail beyond x_max uses the frozen rate r(x_max, I). Warns on failure.
    """
    g = _grid(model, grid)
    nodes = g.nodes
    h = 1e-4 * model.rM

    def R(I):
        dR, _ = model.cell_terms(nodes[:-1], g.dx, I)
        return np.concatenate(([0.0], np.cumsum(dR)))

    def integral(f, decay):
        # trapezoid on the grid plus the exponential tail f(x_max) / decay
        return g.trapezoid(f) + (f[-1] / decay if decay > 0 else math.inf)

    r_tail = float(model.rate(g.x_max, model.rM))
    surv = integral(np.exp(-R(model.rM)), r_tail)
    Is = np.linspace(0.0, model.rM, samples + 2)[1:-1]
    worst = 0.0
    for I in Is:
        lo, hi = max(I - h, 0.0), min(I + h, model.rM)
        dI = np.abs(R(hi) - R(lo)) / (hi - lo)
        worst = max(worst, integral(dI * np.exp(-R(I)), float(model.rate(g.x_max, I))))
    ok = bool(math.isfinite(surv) and math.isfinite(worst) and worst <= limit)
    if not ok:
        log.warning("integrability check failed: int exp(-R(.,rM)) = %.3g, sup int |d_I R| e^-R = %.3g",
                    surv, worst)
    return IntegrabilityCheck(surv, worst, Is, ok)
