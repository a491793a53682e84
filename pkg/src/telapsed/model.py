"""Discharge-rate families r(x, I) for the time-elapsed neuron model.

Four kinds are supported:

* ``constant``  -- r(x, I) = level
* ``step``      -- r(x, I) = r0 + 1{x >= sigma(I)}
* ``tanh_phi``  -- a step rate whose threshold is reconstructed so that the
  activity map equals a prescribed tanh profile
* ``tabulated`` -- values on an (I, x) grid, linearly interpolated

Models are immutable; the activity argument is always clamped into [0, rM].
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

KINDS = ("constant", "step", "tanh_phi", "tabulated")


class ModelError(ValueError):
    """Invalid rate-model parameters."""


class NonDifferentiableError(ValueError):
    """The family has no pointwise derivative in I."""


def phi1(z):
    """(1 - exp(-z)) / z, continuous at z = 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    safe = np.where(small, 1.0, z)
    return np.where(small, 1.0 - 0.5 * z, -np.expm1(-safe) / safe)


def phi_step(sigma, r0: float):
    """Closed-form activity map of the step rate r0 + 1{x >= sigma}."""
    sigma = np.asarray(sigma, dtype=float)
    if r0 == 0.0:
        return 1.0 / (sigma + 1.0)
    v = np.exp(-r0 * sigma)
    return 1.0 / ((1.0 - v) / r0 + v / (1.0 + r0))


def sigma_from_phi(phi_value, r0: float):
    """Threshold age sigma such that ``phi_step(sigma, r0) == phi_value``.

    Only values in (r0, r0 + 1] have a finite preimage.
    """
    p = np.asarray(phi_value, dtype=float)
    if np.any(p <= r0) or np.any(p > r0 + 1.0 + 1e-15):
        raise ValueError(f"phi value outside ({r0}, {r0 + 1}]: no finite threshold")
    if r0 == 0.0:
        out = 1.0 / p - 1.0
    else:
        u = (1.0 + r0) * (1.0 - r0 / p)
        out = -np.log(np.minimum(u, 1.0)) / r0
    out = np.maximum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def tanh_phi_target(I, r0: float, gamma: float):
    """Prescribed decreasing map with fixed point (1 + r0)/2 and slope -gamma there."""
    amp = abs(1.0 - r0) / 2.0
    i_bar = (1.0 + r0) / 2.0
    return amp * np.tanh(gamma / amp * (i_bar - np.asarray(I, dtype=float))) + i_bar


@dataclass(frozen=True)
class RateModel:
    kind: str
    r0: float
    rM: float
    gamma_bar: float
    inhibitory: bool = True
    strictly_decreasing: bool = False  # user assertion for the strict-monotonicity condition
    level: float | None = None
    sigma: Callable[[float], float] | None = field(default=None, compare=False)
    gamma: float | None = None
    table_x: np.ndarray | None = field(default=None, compare=False, repr=False)
    table_I: np.ndarray | None = field(default=None, compare=False, repr=False)
    table_r: np.ndarray | None = field(default=None, compare=False, repr=False)

    # ------------------------------------------------------------------ builders
    @classmethod
    def constant(cls, level: float) -> "RateModel":
        if not np.isfinite(level) or level <= 0:
            raise ModelError("constant rate level must be finite and > 0")
        return cls(kind="constant", r0=float(level), rM=float(level), gamma_bar=0.0,
                   inhibitory=True, level=float(level))

    @classmethod
    def step(cls, r0: float, sigma, gamma_bar: float | None = None,
             strictly_decreasing: bool = False) -> "RateModel":
        """Step rate r0 + 1{x >= sigma(I)}.

        ``sigma`` is a float, a callable, or a pair ``(I_grid, sigma_values)``
        used as a tabulated fallback with linear interpolation.
        ``gamma_bar`` is a Lipschitz bound for sigma; sampled when omitted.
        """
        if not np.isfinite(r0) or r0 < 0:
            raise ModelError("r0 must be finite and >= 0")
        rM = r0 + 1.0
        if callable(sigma):
            fn = sigma
        elif isinstance(sigma, tuple):
            ig, sv = (np.asarray(a, dtype=float) for a in sigma)
            fn = lambda I, ig=ig, sv=sv: float(np.interp(I, ig, sv))  # noqa: E731
        else:
            val = float(sigma)
            fn = lambda I, val=val: val  # noqa: E731
        samples = np.linspace(0.0, rM, 513)
        svals = np.array([fn(float(i)) for i in samples])
        if not np.all(np.isfinite(svals)) or np.any(svals < 0):
            raise ModelError("sigma must be finite and nonnegative on [0, rM]")
        inhibitory = bool(np.all(np.diff(svals) >= -1e-14))
        lip = float(np.max(np.abs(np.diff(svals)) / np.diff(samples))) if svals.size > 1 else 0.0
        if gamma_bar is None:
            gamma_bar = lip
        elif gamma_bar < lip * (1 - 1e-9):
            raise ModelError(f"gamma_bar={gamma_bar} below sampled Lipschitz bound {lip} of sigma")
        return cls(kind="step", r0=float(r0), rM=rM, gamma_bar=float(gamma_bar),
                   inhibitory=inhibitory, strictly_decreasing=strictly_decreasing, sigma=fn)

    @classmethod
    def tanh_phi(cls, r0: float, gamma: float) -> "RateModel":
        if not np.isfinite(gamma) or gamma <= 0:
            raise ModelError("gamma must be finite and > 0")
        if not 0.0 < r0 < 1.0:
            raise ModelError("tanh_phi family needs 0 < r0 < 1 so that Phi stays in (r0, r0+1)")

        def sigma(I, r0=r0, gamma=gamma):
            target = tanh_phi_target(min(max(I, 0.0), r0 + 1.0), r0, gamma)
            # tanh saturates to exactly +-1 in floating point for large arguments
            target = min(max(float(target), r0 * (1.0 + 1e-15) + 1e-300), r0 + 1.0)
            return sigma_from_phi(target, r0)

        rM = r0 + 1.0
        grid = np.linspace(0.0, rM, 4097)
        svals = np.array([sigma(float(i)) for i in grid])
        lip = float(np.max(np.abs(np.diff(svals)) / np.diff(grid)))
        return cls(kind="tanh_phi", r0=float(r0), rM=rM, gamma_bar=lip, inhibitory=True,
                   strictly_decreasing=True, sigma=sigma, gamma=float(gamma))

    @classmethod
    def tabulated(cls, x, I, values, gamma_bar: float | None = None,
                  inhibitory: bool | None = None, strictly_decreasing: bool = False,
                  r0: float | None = None) -> "RateModel":
        """Rates ``values[i, j] = r(x[j], I[i])``; constant extrapolation outside the x range."""
        x = np.asarray(x, dtype=float)
        I = np.asarray(I, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (I.size, x.size):
            raise ModelError(f"table shape {values.shape} != ({I.size}, {x.size})")
        if np.any(np.diff(x) <= 0) or np.any(np.diff(I) <= 0):
            raise ModelError("table grids must be strictly increasing")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ModelError("table rates must be finite and nonnegative")
        rM = float(values.max())
        lo = float(values.min())
        if r0 is None:
            r0 = lo
        elif r0 > lo + 1e-14:
            raise ModelError(f"declared r0={r0} exceeds table minimum {lo}")
        if I[0] > 0 or I[-1] < rM:
            raise ModelError("table I-grid must cover [0, rM]")
        dI = np.diff(values, axis=0) / np.diff(I)[:, None] if I.size > 1 else np.zeros((1, x.size))
        lip = float(np.max(np.abs(dI))) if dI.size else 0.0
        if gamma_bar is None:
            gamma_bar = lip
        elif gamma_bar < lip * (1 - 1e-9):
            raise ModelError(f"gamma_bar={gamma_bar} below sampled |dr/dI| = {lip}")
        sampled_inhib = bool(np.all(dI <= 1e-14))
        if inhibitory is None:
            inhibitory = sampled_inhib
        elif inhibitory and not sampled_inhib:
            raise ModelError("table flagged inhibitory but dr/dI > 0 somewhere")
        return cls(kind="tabulated", r0=float(r0), rM=rM, gamma_bar=float(gamma_bar),
                   inhibitory=bool(inhibitory), strictly_decreasing=strictly_decreasing,
                   table_x=x, table_I=I, table_r=values)

    @classmethod
    def from_csv(cls, path: str | Path, **kwargs) -> "RateModel":
        """Load a tabulated model: header row ``I\\x, x0, x1, ...``; then ``I_i, r...`` rows."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r]
        x = [float(v) for v in rows[0][1:]]
        I = [float(r[0]) for r in rows[1:]]
        values = [[float(v) for v in r[1:]] for r in rows[1:]]
        return cls.tabulated(x, I, values, **kwargs)

    @property
    def strictly_excitable(self) -> bool:
        """r >= r0 > 0 everywhere."""
        return self.r0 > 0

    # ------------------------------------------------------------------ evaluation
    def clamp(self, I: float) -> float:
        return min(max(float(I), 0.0), self.rM)

    def threshold(self, I: float) -> float:
        """sigma(I) for the step-like kinds."""
        if self.sigma is None:
            raise ModelError(f"{self.kind} model has no threshold")
        return float(self.sigma(self.clamp(I)))

    def _table_row(self, I: float) -> np.ndarray:
        ig, tab = self.table_I, self.table_r
        k = int(np.clip(np.searchsorted(ig, I, side="right") - 1, 0, ig.size - 2)) if ig.size > 1 else 0
        if ig.size == 1:
            return tab[0]
        w = (I - ig[k]) / (ig[k + 1] - ig[k])
        return (1.0 - w) * tab[k] + w * tab[k + 1]

    def rate(self, x, I: float):
        I = self.clamp(I)
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.full(x.shape, self.level)
        elif self.kind in ("step", "tanh_phi"):
            out = self.r0 + (x >= self.threshold(I)).astype(float)
        else:
            out = np.interp(x, self.table_x, self._table_row(I))
        return float(out) if out.ndim == 0 else out

    def d_rate_dI(self, x, I: float):
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.zeros(x.shape)
        elif self.kind in ("step", "tanh_phi"):
            raise NonDifferentiableError(f"non-differentiable family: {self.kind}")
        else:
            I = self.clamp(I)
            ig, tab = self.table_I, self.table_r
            k = int(np.clip(np.searchsorted(ig, I, side="right") - 1, 0, ig.size - 2))
            slope = (tab[k + 1] - tab[k]) / (ig[k + 1] - ig[k])
            out = np.interp(x, self.table_x, slope)
        return float(out) if out.ndim == 0 else out

    def cell_terms(self, left, width, I: float):
        """Exact-in-cell survival quantities for cells ``[left, left + width]``.

        Returns ``(dR, c)`` with ``dR = int r`` over the cell and
        ``c = int exp(-(R(x) - R(left))) dx`` over the cell. Exact for the
        step kinds and the constant kind; midpoint rule otherwise.
        """
        left = np.asarray(left, dtype=float)
        width = np.broadcast_to(np.asarray(width, dtype=float), left.shape)
        if self.kind in ("step", "tanh_phi"):
            s = self.threshold(I)
            lo, hi = self.r0, self.r0 + 1.0
            a = np.clip(s - left, 0.0, width)
            below = a >= width
            above = a <= 0.0
            dR = np.where(below, lo * width, hi * width)
            if width.size == 0:
                return dR, np.zeros(left.shape)
            if np.all(width == width.flat[0]):
                w0 = float(width.flat[0]) if width.size else 0.0
                c = np.where(below, w0 * float(phi1(lo * w0)), w0 * float(phi1(hi * w0)))
            else:
                c = np.where(below, width * phi1(lo * width), width * phi1(hi * width))
            part = ~(below | above)
            if np.any(part):
                ap, wp = a[part], width[part]
                bp = wp - ap
                dR[part] = lo * ap + hi * bp
                c[part] = ap * phi1(lo * ap) + np.exp(-lo * ap) * bp * phi1(hi * bp)
            return dR, c
        r = self.rate(left + 0.5 * width, I)
        dR = r * width
        return dR, width * phi1(dR)

    # ------------------------------------------------------------------ checks
    def check_bounds(self, n_samples: int = 10_000, x_max: float = 50.0, seed: int = 0) -> None:
        """Sample (x, I) pairs and raise ModelError on any structural violation."""
        rng = np.random.default_rng(seed)
        xs = rng.uniform(0.0, x_max, n_samples)
        Is = rng.uniform(0.0, self.rM, n_samples)
        vals = np.array([self.rate(x, i) for x, i in zip(xs, Is)])
        if np.any(vals < 0) or np.any(vals > self.rM * (1 + 1e-12)):
            raise ModelError("rate leaves [0, rM]")
        if np.any(vals < self.r0 * (1 - 1e-12)):
            raise ModelError("rate drops below r0")
        if self.kind == "tabulated":
            ds = np.array([self.d_rate_dI(x, i) for x, i in zip(xs[:2000], Is[:2000])])
            if np.any(np.abs(ds) > self.gamma_bar * (1 + 1e-9)):
                raise ModelError("|dr/dI| exceeds gamma_bar")
            if self.inhibitory and np.any(ds > 1e-14):
                raise ModelError("inhibitory model with dr/dI > 0")
