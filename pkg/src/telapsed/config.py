"""Experiment configuration: a single JSON document validated by pydantic."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .grid import Density, Grid, project
from .model import RateModel

Mode = Literal["autonomous", "linear", "delayed", "distr", "system", "oracle", "map", "steady", "contract"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SigmaTable(_Strict):
    I: list[float]
    sigma: list[float]


class ModelSpec(_Strict):
    kind: Literal["constant", "step", "tanh_phi", "tabulated"]
    level: Optional[float] = None
    r0: Optional[float] = None
    sigma: Optional[float] = Field(None, description="constant threshold (step)")
    sigma_affine: Optional[tuple[float, float]] = Field(None, description="sigma(I) = a + b I (step)")
    sigma_table: Optional[SigmaTable] = None
    gamma: Optional[float] = Field(None, description="slope parameter (tanh_phi)")
    table_csv: Optional[str] = Field(None, description="rate table (tabulated)")
    gamma_bar: Optional[float] = None
    inhibitory: Optional[bool] = None

    @model_validator(mode="after")
    def _needs(self):
        need = {
            "constant": ["level"],
            "step": ["r0"],
            "tanh_phi": ["r0", "gamma"],
            "tabulated": ["table_csv"],
        }[self.kind]
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"model.{name} is required for kind={self.kind}")
        if self.kind == "step":
            given = [s for s in (self.sigma, self.sigma_affine, self.sigma_table) if s is not None]
            if len(given) != 1:
                raise ValueError("step model needs exactly one of sigma, sigma_affine, sigma_table")
        return self

    def build(self, base: Path | None = None) -> RateModel:
        if self.kind == "constant":
            m = RateModel.constant(self.level)
        elif self.kind == "step":
            if self.sigma is not None:
                sig = self.sigma
            elif self.sigma_affine is not None:
                a, b = self.sigma_affine
                sig = lambda I, a=a, b=b: a + b * I  # noqa: E731
            else:
                sig = (self.sigma_table.I, self.sigma_table.sigma)
            m = RateModel.step(self.r0, sig, gamma_bar=self.gamma_bar)
        elif self.kind == "tanh_phi":
            m = RateModel.tanh_phi(self.r0, self.gamma)
        else:
            path = Path(self.table_csv)
            if base is not None and not path.is_absolute():
                path = base / path
            m = RateModel.from_csv(path, gamma_bar=self.gamma_bar)
        if self.inhibitory is not None and self.inhibitory != m.inhibitory:
            raise ValueError(f"model.inhibitory={self.inhibitory} contradicts the sampled rate")
        return m


class GridSpec(_Strict):
    dx: float = Field(1e-2, gt=0)
    x_max: Optional[float] = Field(None, gt=0)

    def build(self, model: RateModel) -> Grid:
        return Grid.for_model(model, self.dx, self.x_max)


class InitialSpec(_Strict):
    family: Literal["exp", "indicator", "stationary", "csv"] = "exp"
    rate: float = Field(1.0, gt=0, description="exp: n0 ~ exp(-rate x)")
    width: float = Field(1.0, gt=0, description="indicator: n0 ~ 1{x < width}")
    at_I: Optional[float] = Field(None, description="stationary: n(., at_I); default is the steady state")
    path: Optional[str] = None

    @model_validator(mode="after")
    def _csv(self):
        if self.family == "csv" and not self.path:
            raise ValueError("initial.path is required for family=csv")
        return self

    def build(self, model: RateModel, grid: Grid, base: Path | None = None) -> Density:
        from .steadystate import fixed_point_phi, stationary_density
        if self.family == "exp":
            return project(model, grid, lambda x: np.exp(-self.rate * x))
        if self.family == "indicator":
            return project(model, grid, lambda x: (x < self.width).astype(float))
        if self.family == "stationary":
            if self.at_I is None:
                return fixed_point_phi(model, grid).density
            return stationary_density(model, self.at_I, grid)
        path = Path(self.path)
        if base is not None and not path.is_absolute():
            path = base / path
        x, n = np.loadtxt(path, delimiter=",", skiprows=1, unpack=True)
        return project(model, grid, lambda z: np.interp(z, x, n, right=0.0))


class KernelSpec(_Strict):
    family: Literal["delta0", "uniform", "csv"] = "uniform"
    width: float = Field(1.0, gt=0)
    path: Optional[str] = None


class InputSpec(_Strict):
    """J(t) = I_bar + c exp(-alpha t) when ``relax``; a constant otherwise."""

    constant: Optional[float] = None
    c: float = 0.0
    alpha: Optional[float] = Field(None, gt=0)


class RunSpec(_Strict):
    mode: Optional[Mode] = None
    T: float = Field(20.0, gt=0)
    d: Optional[float] = None
    I_ini: Optional[Union[float, Literal["I_minus", "I_plus", "I_bar"]]] = None
    intervals: int = Field(6, ge=1)
    input: Optional[InputSpec] = None
    particles: int = Field(100_000, ge=1)
    dt: Optional[float] = Field(None, gt=0, description="oracle step; default grid dx")
    burn_in: float = Field(5.0, ge=0)
    map_points: int = Field(201, ge=3)
    renormalize: bool = False


class ExperimentConfig(_Strict):
    model: ModelSpec
    grid: GridSpec = GridSpec()
    initial: InitialSpec = InitialSpec()
    initial_b: Optional[InitialSpec] = None
    kernel: Optional[KernelSpec] = None
    run: RunSpec = RunSpec()
    out: Optional[str] = None
    seed: int = 0

    @model_validator(mode="after")
    def _cross(self):
        mode = self.run.mode
        if mode == "delayed":
            if self.run.d is None or self.run.d <= 0:
                raise ValueError("run.d must be > 0 for delayed mode")
            if self.run.I_ini is None:
                raise ValueError("run.I_ini is required for delayed mode")
        if mode == "linear" and self.run.input is None:
            raise ValueError("run.input is required for linear mode")
        if mode == "contract" and self.initial_b is None:
            raise ValueError("initial_b is required for contract mode")
        if isinstance(self.run.I_ini, float) and self.run.I_ini < 0:
            raise ValueError("run.I_ini must be >= 0")
        return self

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path: str | Path, **overrides) -> ExperimentConfig:
    """Parse and validate; ``overrides`` are dotted keys such as ``run.mode``."""
    data = json.loads(Path(path).read_text())
    for key, value in overrides.items():
        if value is None:
            continue
        node = data
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return ExperimentConfig.model_validate(data)


def schema() -> dict:
    return ExperimentConfig.model_json_schema()
