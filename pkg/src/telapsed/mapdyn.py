"""Interval-map view of the large-delay dynamics: orbits of Phi, Phi'(I_bar), period-2 pairs."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NumericalError
from .grid import Grid
from .model import RateModel
from .steadystate import fixed_point_phi, phi

log = logging.getLogger(__name__)


class Regime(str, Enum):
    CONVERGING = "Converging"
    PERIOD2 = "Period2"


def iterate_phi(model: RateModel, I0: float, k: int, grid: Grid | None = None) -> list[float]:
    if not 0 <= I0 <= model.rM:
        raise ValueError(f"I0={I0} outside [0, rM]")
    orbit = [float(I0)]
    for _ in range(k):
        orbit.append(phi(model, orbit[-1], grid))
    return orbit


def _central(f, I, h):
    return (f(I + h) - f(I - h)) / (2 * h)


def phi_prime(model: RateModel, I: float, grid: Grid | None = None, h: float | None = None) -> float:
    """Richardson-extrapolated central difference of Phi with h = 1e-5 rM."""
    h = 1e-5 * model.rM if h is None else h
    f = lambda v: phi(model, v, grid)  # noqa: E731
    if I - 2 * h < 0 or I + 2 * h > model.rM:
        log.warning("phi_prime at I=%g too close to the boundary; using a one-sided difference", I)
        s = 1.0 if I - 2 * h < 0 else -1.0
        # second-order one-sided stencil
        return s * (-3 * f(I) + 4 * f(I + s * h) - f(I + 2 * s * h)) / (2 * h)
    d1 = _central(f, I, h)
    d2 = _central(f, I, 2 * h)
    return (4 * d1 - d2) / 3


def psi(model: RateModel, I: float, grid: Grid | None = None) -> float:
    return phi(model, phi(model, I, grid), grid)


def period2_points(model: RateModel, grid: Grid | None = None, I_bar: float | None = None,
                   n_scan: int = 200, xtol: float = 1e-14) -> tuple[float, float] | None:
    """Extreme fixed points (I_minus, I_plus) of Phi o Phi, or None when Phi'(I_bar) >= -1.

    H = Psi - I is scanned upward from 0 on [0, I_bar - eps]; the first sign
    change is refined by bisection.
    """
    if I_bar is None:
        I_bar = fixed_point_phi(model, grid).I_bar
    if phi_prime(model, I_bar, grid) >= -1:
        return None
    H = lambda v: psi(model, v, grid) - v  # noqa: E731
    eps = 1e-3 * model.rM
    for _ in range(11):
        top = I_bar - eps
        if top > 0:
            xs = np.linspace(0.0, top, n_scan + 1)
            prev_x, prev_h = xs[0], H(xs[0])
            for x in xs[1:]:
                hx = H(x)
                if prev_h == 0:
                    return _pair(model, prev_x, grid)
                if np.sign(hx) != np.sign(prev_h):
                    return _pair(model, _bisect(H, prev_x, x, prev_h, xtol), grid)
                prev_x, prev_h = x, hx
        eps /= 2
    raise NumericalError("Phi'(I_bar) < -1 but Psi - I has no sign change below I_bar; refine the grid")


def _bisect(H, a, b, ha, xtol):
    while b - a > xtol:
        m = 0.5 * (a + b)
        if m in (a, b):
            break
        hm = H(m)
        if hm == 0:
            return m
        if np.sign(hm) == np.sign(ha):
            a, ha = m, hm
        else:
            b = m
    return 0.5 * (a + b)


def _pair(model, I_minus, grid):
    return float(I_minus), phi(model, I_minus, grid)


@dataclass
class MapAnalysis:
    I_bar: float
    phi_prime_at_fp: float
    period2: tuple[float, float] | None
    classification: Regime

    def to_dict(self) -> dict:
        return {
            "I_bar": self.I_bar,
            "phi_prime_at_fp": self.phi_prime_at_fp,
            "period2": list(self.period2) if self.period2 else None,
            "classification": self.classification.value,
        }


def classify(model: RateModel, grid: Grid | None = None) -> MapAnalysis:
    I_bar = fixed_point_phi(model, grid).I_bar
    d = phi_prime(model, I_bar, grid)
    pair = period2_points(model, grid, I_bar) if d < -1 else None
    regime = Regime.PERIOD2 if pair is not None else Regime.CONVERGING
    return MapAnalysis(I_bar, d, pair, regime)


def map_table(model: RateModel, n_points: int = 201, grid: Grid | None = None) -> np.ndarray:
    """Columns (I, Phi(I), Psi(I)) on a uniform grid of [0, rM]."""
    I = np.linspace(0.0, model.rM, n_points)
    p = np.array([phi(model, v, grid) for v in I])
    q = np.array([phi(model, v, grid) for v in p])
    return np.column_stack((I, p, q))
