"""Run configuration: a JSON document validated with pydantic, plus cross-field checks.

Schema version 1. Scalar fields may be overridden with dotted keys (``solver.tol=1e-8``).
Complex coefficients are written as ``[re, im]`` pairs.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigurationError
from .grid import AsymptoticData, GridSpec, TimeAxis, read_dump
from .modules import ModuleNormSpec
from .nonlinear import Factor, Monomial, NonlinearitySpec, SolverParams, power, validate_spec
from .potential import CutoffSpec, PotentialSpec, gaussian_bump

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridConfig(_Strict):
    n: int = 1
    L: float = 20.0
    N: int = 512


class TimeConfig(_Strict):
    t_min: float = -20.0
    t_max: float = 20.0
    M: int = 401


class PotentialConfig(_Strict):
    family: Literal["none", "gaussian-bump"] = "none"
    amplitude: float = 0.0
    width: float = 1.0
    center: list[float] | None = None
    t_support: float = 3.0
    t_center: float = 0.0


class FactorConfig(_Strict):
    base: Literal["u", "ubar"] = "u"
    derivative: int | None = None


class MonomialConfig(_Strict):
    coefficient: tuple[float, float] = (1.0, 0.0)
    factors: list[FactorConfig]


class NonlinearityConfig(_Strict):
    kind: Literal["none", "power", "monomials"] = "none"
    p: int | None = None
    coefficient: tuple[float, float] = (1.0, 0.0)
    monomials: list[MonomialConfig] = Field(default_factory=list)


class DataConfig(_Strict):
    family: Literal["zero", "gaussian", "file"] = "gaussian"
    amplitude: float = 1.0
    width: float = 1.0
    center: float | list[float] = 0.0
    velocity: float | list[float] = 0.0
    path: str | None = None
    decay_order: int = 0


class SolverConfig(_Strict):
    epsilon: float = 0.1
    k: int = 0
    max_iter: int = 60
    tol: float = 1e-10
    norm: Literal["weighted-l2", "module"] = "weighted-l2"
    substeps: int = 1
    tail_tol: float = 0.9
    initial: Literal["zero", "u_plus"] = "zero"
    cutoff_t0: float = 0.0
    cutoff_width: float = 1.0


class NormConfig(_Strict):
    s: float = 0.0
    r: float = -0.6
    k: int = 2
    c: float = 1.0


class ScatteringConfig(_Strict):
    k: int = 2
    ell: float = 0.0
    order: int = 1
    rate: bool = True


class RunConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    name: str = "run"
    grid: GridConfig = Field(default_factory=GridConfig)
    time: TimeConfig = Field(default_factory=TimeConfig)
    potential: PotentialConfig = Field(default_factory=PotentialConfig)
    nonlinearity: NonlinearityConfig = Field(default_factory=NonlinearityConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    norms: list[NormConfig] = Field(default_factory=list)
    scattering: ScatteringConfig = Field(default_factory=ScatteringConfig)
    seed: int = 0
    save_fields: bool = True

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, v):
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema version {v}")
        return v

    # -- builders ------------------------------------------------------------------

    def grid_spec(self) -> GridSpec:
        return GridSpec(self.grid.n, self.grid.L, self.grid.N)

    def time_axis(self) -> TimeAxis:
        return TimeAxis(self.time.t_min, self.time.t_max, self.time.M)

    def potential_spec(self) -> PotentialSpec | None:
        p = self.potential
        if p.family == "none":
            return None
        center = p.center if p.center is not None else [0.0] * self.grid.n
        if len(center) != self.grid.n:
            raise ConfigurationError("potential centre has the wrong dimension")
        return gaussian_bump(p.amplitude, p.width, center, p.t_support, p.t_center)

    def nonlinearity_spec(self) -> NonlinearitySpec:
        nl = self.nonlinearity
        if nl.kind == "none":
            return NonlinearitySpec((), allow_degenerate=True)
        if nl.kind == "power":
            if nl.p is None:
                raise ConfigurationError("power nonlinearity needs p")
            return power(nl.p, complex(*nl.coefficient))
        monos = tuple(
            Monomial(complex(*m.coefficient),
                     tuple(Factor(f.base == "ubar", f.derivative) for f in m.factors))
            for m in nl.monomials)
        return NonlinearitySpec(monos)

    def solver_params(self) -> SolverParams:
        s = self.solver
        return SolverParams(s.epsilon, s.k, s.max_iter, s.tol, s.norm, s.substeps, s.tail_tol,
                            s.initial)

    def cutoff(self) -> CutoffSpec:
        return CutoffSpec(self.solver.cutoff_t0, self.solver.cutoff_width, ">=")

    def norm_specs(self) -> list:
        return [ModuleNormSpec(nc.s, nc.r, nc.k, nc.c) for nc in self.norms]

    def asymptotic_data(self, base_dir: Path | None = None) -> AsymptoticData:
        from .oracle import gaussian_data
        grid = self.grid_spec()
        d = self.data
        if d.family == "zero":
            return AsymptoticData(grid, np.zeros(grid.shape, dtype=complex), d.decay_order)
        if d.family == "gaussian":
            vals = gaussian_data(grid, d.amplitude, d.width, d.center, d.velocity)
            return AsymptoticData(grid, vals, d.decay_order)
        if d.path is None:
            raise ConfigurationError("file data needs a path")
        path = Path(d.path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        dump = read_dump(path)
        if dump.grid != grid or not dump.dual:
            raise ConfigurationError("data file does not hold dual-grid samples for this grid")
        return AsymptoticData(grid, dump.values, d.decay_order)

    # -- checks ------------------------------------------------------------------

    def check(self) -> "RunConfig":
        """Cross-field consistency; raises the specific configuration errors."""
        grid = self.grid_spec()
        axis = self.time_axis()
        spec = validate_spec(self.nonlinearity_spec(), grid.n)
        params = self.solver_params()
        params.check_against(spec)
        lo, hi = self.cutoff().transition
        if not (axis.t_min < lo and hi < axis.t_max):
            raise ConfigurationError("cutoff transition must lie inside the time window")
        V = self.potential_spec()
        if V is not None:
            V.check_window(axis, grid)
            vlo, vhi = V.t_support
            if hi > vlo and lo < vhi:
                raise ConfigurationError("cutoff transition overlaps the potential's time support")
        if spec.has_derivatives and self.data.decay_order < 1:
            raise ConfigurationError("derivative nonlinearities need data with decay_order >= 1")
        for nc in self.norms:
            ModuleNormSpec(nc.s, nc.r, nc.k, nc.c)
        return self

    # -- serialisation -------------------------------------------------------------

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _coerce(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict, overrides) -> dict:
    """Set dotted keys, e.g. ``solver.tol=1e-8`` or ``grid.N=1024``."""
    doc = copy.deepcopy(doc)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"override {key!r} does not name a scalar field")
        node[parts[-1]] = _coerce(value.strip())
    return doc


def parse_config(doc: dict, overrides=()) -> RunConfig:
    try:
        cfg = RunConfig.model_validate(apply_overrides(doc, overrides))
    except ValidationError as exc:
        raise ConfigurationError(f"invalid configuration: {exc}") from None
    return cfg.check()


def load_config(path, overrides=()) -> RunConfig:
    path = Path(path)
    if not path.exists():
        bundled = bundled_config_path(str(path))
        if bundled is None:
            raise ConfigurationError(f"configuration {path} not found")
        path = bundled
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}") from None
    return parse_config(doc, overrides)


def bundled_configs() -> dict:
    root = Path(__file__).parent / "configs"
    return {p.stem: p for p in sorted(root.glob("*.json"))}


def bundled_config_path(name: str) -> Path | None:
    return bundled_configs().get(name)
