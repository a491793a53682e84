"""Mean-field particle simulation of the age/hazard process, used to cross-check the PDE solver.

Each particle carries an age. Over a step of length dt it fires with
probability ``1 - exp(-int_a^{a+dt} r(y, J) dy)``. A fired particle restarts
at its firing time and may fire again before the step ends, so the step is
exact for a rate frozen over the step, up to where the firing lands inside it. The autonomous activity closes the loop on the empirical measure:
``I = mean(r(age_i, I))``, solved by bisection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import Density
from .model import RateModel

log = logging.getLogger(__name__)


@dataclass
class ParticleEnsemble:
    ages: np.ndarray
    rng_seed: int = 0
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        self.ages = np.asarray(self.ages, dtype=float)
        if self.ages.size < 1:
            raise ValueError("ensemble needs at least one particle")
        if np.any(self.ages < 0):
            raise ValueError("ages must be >= 0")
        if self.rng is None:
            self.rng = np.random.default_rng(self.rng_seed)

    @property
    def N(self) -> int:
        return self.ages.size

    @classmethod
    def sample(cls, density: Density, N: int, seed: int = 0) -> "ParticleEnsemble":
        """Draw N ages from a grid density (uniform inside cells, exponential in the tail)."""
        rng = np.random.default_rng(seed)
        grid = density.grid
        p = density.cell_mass / density.cell_mass.sum()
        cells = rng.choice(p.size, size=N, p=p)
        ages = (cells + rng.random(N)) * grid.dx
        tail = cells == grid.n_cells
        if tail.any():
            ages[tail] = grid.x_max + rng.exponential(1.0, int(tail.sum()))
        return cls(ages, seed, rng)


def _fire_time(dR: np.ndarray, width: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Firing time inside an interval, given that the particle fires there.

    Inverts the cumulative hazard as if the rate were constant on the interval.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -np.log1p(u * np.expm1(-dR)) / dR * width
    return np.where(dR > 0, np.clip(s, 0.0, width), u * width)


def mc_step(model: RateModel, ens: ParticleEnsemble, I_rate_arg: float, dt: float
            ) -> tuple[ParticleEnsemble, float]:
    """Advance one step; returns the ensemble and the fired count / (N dt).

    A particle reset during the step may fire again before the step ends.
    """
    if model.rM * dt > 0.2:
        log.warning("rM*dt = %.3g > 0.2; firing probabilities are coarse", model.rM * dt)
    rng = ens.rng
    dR, _ = model.cell_terms(ens.ages, dt, I_rate_arg)
    fire = rng.random(ens.N) < -np.expm1(-dR)
    ages = ens.ages + dt
    idx = np.flatnonzero(fire)
    rem = dt - _fire_time(dR[fire], np.full(idx.size, dt), rng.random(idx.size))
    n_fired = idx.size
    while idx.size:
        ages[idx] = rem
        dR, _ = model.cell_terms(np.zeros(idx.size), rem, I_rate_arg)
        again = rng.random(idx.size) < -np.expm1(-dR)
        idx, rem, dR = idx[again], rem[again], dR[again]
        rem = rem - _fire_time(dR, rem, rng.random(idx.size))
        n_fired += idx.size
    ens.ages = ages
    return ens, n_fired / (ens.N * dt)


def explicit_empirical_activity(model: RateModel, ages: np.ndarray, J: float) -> float:
    return float(np.mean(model.rate(ages, J)))


def implicit_empirical_activity(model: RateModel, ages: np.ndarray, tol: float = 1e-13) -> float:
    """Root of I = mean(r(age_i, I)) by bisection on [0, rM] (inhibitory models).

    For step rates the mean is piecewise constant in I; bisection then lands on the jump.
    """
    if not model.inhibitory:
        raise ValueError("implicit activity requires inhibition")
    if model.kind in ("step", "tanh_phi"):
        srt = np.sort(ages)
        N = srt.size

        def mean_rate(I):
            return model.r0 + (N - np.searchsorted(srt, model.threshold(I), side="left")) / N
    else:
        def mean_rate(I):
            return float(np.mean(model.rate(ages, I)))
    lo, hi = 0.0, model.rM
    if mean_rate(hi) >= hi:
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if mid - mean_rate(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass
class MCResult:
    t: np.ndarray
    I: np.ndarray          # mean-field activity per step
    fired: np.ndarray      # fired count / (N dt) per step
    ensemble: ParticleEnsemble


def mc_run(model: RateModel, ensemble: ParticleEnsemble, T: float, dt: float,
           mode: str = "autonomous", d: float | None = None, I_ini: float | None = None
           ) -> MCResult:
    """Run the particle system to time T; ``mode`` is ``autonomous`` or ``delayed``."""
    steps = int(round(T / dt))
    t = np.arange(steps + 1) * dt
    I = np.empty(steps + 1)
    fired = np.full(steps + 1, np.nan)
    if mode == "autonomous":
        for k in range(steps + 1):
            I[k] = implicit_empirical_activity(model, ensemble.ages)
            if k < steps:
                ensemble, fired[k] = mc_step(model, ensemble, I[k], dt)
    elif mode == "delayed":
        if d is None or d <= 0 or I_ini is None:
            raise ValueError("delayed mode needs d > 0 and I_ini")
        lag = max(int(round(d / dt)), 1)
        for k in range(steps + 1):
            J = I[k - lag] if k >= lag else model.clamp(I_ini)
            I[k] = explicit_empirical_activity(model, ensemble.ages, J)
            if k < steps:
                ensemble, fired[k] = mc_step(model, ensemble, J, dt)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return MCResult(t, I, fired, ensemble)


def histogram(ages: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin masses (fractions of particles) on ``edges``; the last bin extends to infinity."""
    idx = np.searchsorted(edges, ages, side="right") - 1
    idx = np.clip(idx, 0, edges.size - 1)
    return np.bincount(idx, minlength=edges.size) / ages.size


def binned_masses(density: Density, edges: np.ndarray) -> np.ndarray:
    """Masses of a grid density over the same bins (edges should be multiples of dx)."""
    grid = density.grid
    cum = np.concatenate(([0.0], np.cumsum(density.cell_mass[:-1])))
    at = np.interp(edges, grid.nodes, cum)
    total = density.cell_mass.sum()
    return np.diff(np.append(at, total))


def histogram_l1(ages: np.ndarray, density: Density, edges: np.ndarray) -> float:
    return float(np.abs(histogram(ages, edges) - binned_masses(density, edges)).sum())


def batch_means(x: np.ndarray, n_batches: int = 20) -> tuple[float, float]:
    """Mean and batch-means standard error of a correlated series."""
    x = np.asarray(x, dtype=float)
    size = x.size // n_batches
    if size < 1:
        raise ValueError("series shorter than the number of batches")
    b = x[: size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(b.mean()), float(b.std(ddof=1) / np.sqrt(n_batches))
