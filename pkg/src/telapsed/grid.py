"""Uniform age grid, densities, and the per-cell survival weights shared by all solvers.

A density is stored as cell masses: cell ``j < N`` is ``[x_j, x_{j+1}]`` and
cell ``N`` is the semi-infinite tail ``[x_max, inf)``. Inside a cell the
profile follows the survival law of the current rate,
``n(x) = n_j * exp(-(R(x) - R(x_j)))``, so node values and cell masses convert
through the weights ``c_j`` returned by :func:`cell_weights`. The representation
is closed under exact transport with a frozen rate, which is what makes the
stationary profile an exact fixed point of the discrete scheme.
"""
from __future__ import annotations

import math
from functools import cached_property
from dataclasses import dataclass

import numpy as np

from .model import RateModel, phi1

TAIL_EPS = 1e-12


@dataclass(frozen=True)
class Grid:
    dx: float
    n_cells: int

    def __post_init__(self):
        if not (self.dx > 0 and math.isfinite(self.dx)):
            raise ValueError("dx must be finite and > 0")
        if self.n_cells < 2:
            raise ValueError("grid needs at least 2 cells")

    @classmethod
    def for_model(cls, model: RateModel, dx: float, x_max: float | None = None) -> "Grid":
        """Grid with ``dt = dx``; default x_max is the smallest multiple of dx
        with ``exp(-r0 * x_max) <= 1e-12``."""
        if x_max is None:
            if model.r0 <= 0:
                raise ValueError("x_max must be given when r0 = 0")
            x_max = -math.log(TAIL_EPS) / model.r0
        return cls(dx=float(dx), n_cells=int(math.ceil(x_max / dx - 1e-9)))

    @property
    def dt(self) -> float:
        return self.dx

    @property
    def x_max(self) -> float:
        return self.n_cells * self.dx

    @cached_property
    def nodes(self) -> np.ndarray:
        out = np.arange(self.n_cells + 1) * self.dx
        out.flags.writeable = False
        return out

    def trapezoid(self, values) -> float:
        v = np.asarray(values, dtype=float)
        return float(self.dx * (v.sum() - 0.5 * (v[0] + v[-1])))


@dataclass(frozen=True)
class CellWeights:
    """Survival data of one rate snapshot ``r(., J)`` on a grid."""

    J: float
    dR: np.ndarray        # int of r over each finite cell, length N
    c: np.ndarray         # int exp(-(R - R_j)) over each finite cell, length N
    tail_rate: float      # r(x_max, J), used on [x_max, inf)

    @cached_property
    def e(self) -> np.ndarray:
        return np.exp(-self.dR)

    @cached_property
    def cell_rate(self) -> np.ndarray:
        """int r n / int n over each cell for the in-cell survival profile, tail included."""
        out = np.empty(self.c.size + 1)
        out[:-1] = -np.expm1(-self.dR) / self.c
        out[-1] = self.tail_rate
        return out

    @cached_property
    def R(self) -> np.ndarray:
        """R(x_j, J) at the N + 1 nodes."""
        return np.concatenate(([0.0], np.cumsum(self.dR)))

    @cached_property
    def node_weights(self) -> np.ndarray:
        """Mass carried per unit node value, tail included."""
        return np.concatenate((self.c, [1.0 / self.tail_rate]))

    def tail_cell(self, h: float) -> float:
        return h * float(phi1(self.tail_rate * h))


def cell_weights(model: RateModel, grid: Grid, J: float) -> CellWeights:
    J = model.clamp(J)
    left = grid.nodes[:-1]
    dR, c = model.cell_terms(left, grid.dx, J)
    tail_rate = float(model.rate(grid.x_max, J))
    if tail_rate <= 0:
        raise ValueError("rate must be positive at x_max for the tail closure")
    return CellWeights(J=J, dR=np.asarray(dR, dtype=float), c=np.asarray(c, dtype=float),
                       tail_rate=tail_rate)


@dataclass
class Density:
    """Nonnegative age density on a grid.

    ``cell_mass`` is the primary state; ``values`` are node values as
    interpreted with the rate snapshot that produced them.
    """

    grid: Grid
    values: np.ndarray
    cell_mass: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.cell_mass.sum())

    @property
    def trapezoid_mass(self) -> float:
        return self.grid.trapezoid(self.values)

    @classmethod
    def from_masses(cls, grid: Grid, masses, weights: CellWeights) -> "Density":
        m = np.asarray(masses, dtype=float)
        return cls(grid=grid, values=m / weights.node_weights, cell_mass=m)

    @classmethod
    def from_values(cls, grid: Grid, values, weights: CellWeights, normalize: bool = False) -> "Density":
        v = np.asarray(values, dtype=float)
        if v.shape != (grid.n_cells + 1,):
            raise ValueError(f"expected {grid.n_cells + 1} node values, got {v.shape}")
        if np.any(v < 0):
            raise ValueError("density must be nonnegative")
        m = v * weights.node_weights
        if normalize:
            total = m.sum()
            if total <= 0:
                raise ValueError("cannot normalize a zero density")
            m = m / total
            v = v / total
        return cls(grid=grid, values=v.copy(), cell_mass=m)

    def reinterpret(self, weights: CellWeights) -> "Density":
        """Same cell masses, node values read with another rate snapshot."""
        return Density(self.grid, self.cell_mass / weights.node_weights, self.cell_mass)

    def copy(self) -> "Density":
        return Density(self.grid, self.values.copy(), self.cell_mass.copy())


def project(model: RateModel, grid: Grid, f, J: float = 0.0, normalize: bool = True) -> Density:
    """Evaluate ``f`` at the nodes and normalize to unit mass."""
    values = np.asarray(f(grid.nodes), dtype=float)
    return Density.from_values(grid, values, cell_weights(model, grid, J), normalize=normalize)
