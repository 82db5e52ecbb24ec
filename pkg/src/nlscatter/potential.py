"""Time-dependent potentials with compact time support, and smooth time cutoffs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, PotentialError
from .grid import GridSpec, TimeAxis

VANISH_LEVEL = 1e-12


def _bump(s: np.ndarray) -> np.ndarray:
    """exp(1 - 1/(1 - s^2)) on |s| < 1, zero outside; equals 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


class PotentialSpec:
    """Potential V(z, t) with t-support inside [t_lo, t_hi] and z-support in a box.

    Outside the declared support the potential is below VANISH_LEVEL.
    """

    def __init__(self, family: str, params: dict, t_support: tuple, center, radius: float,
                 smoothness: str = "C-infinity", sampler=None):
        self.family = family
        self.params = dict(params)
        self.t_support = (float(t_support[0]), float(t_support[1]))
        self.center = tuple(float(c) for c in center)
        self.radius = float(radius)
        self.smoothness = smoothness
        self._sampler = sampler

    def sample(self, grid: GridSpec, t: float) -> np.ndarray:
        if len(self.center) != grid.n:
            raise ConfigurationError("potential dimension does not match the grid")
        if t <= self.t_support[0] or t >= self.t_support[1]:
            return np.zeros(grid.shape)
        v = self._sampler(grid, t)
        if not np.isfinite(v).all():
            raise PotentialError(f"potential is non-finite at t={t}")
        return v

    def max_abs(self, grid: GridSpec, axis: TimeAxis) -> float:
        return max(float(np.abs(self.sample(grid, t)).max()) for t in axis.t)

    def check_window(self, axis: TimeAxis, grid: GridSpec | None = None):
        lo, hi = self.t_support
        if not (axis.t_min < lo and hi < axis.t_max):
            raise ConfigurationError(
                f"potential time support [{lo}, {hi}] is not inside the window "
                f"[{axis.t_min}, {axis.t_max}]"
            )
        if grid is not None:
            reach = self.radius + max(abs(c) for c in self.center)
            if reach >= grid.L:
                raise ConfigurationError("potential spatial support does not fit inside the box")

    def to_dict(self) -> dict:
        return {"family": self.family, **self.params}


def gaussian_bump(amplitude: float, width: float, center=(0.0,), t_support: float = 3.0,
                  t_center: float = 0.0) -> PotentialSpec:
    """a exp(-|z - c|^2 / width^2) times a smooth compact bump of half-width t_support in t."""
    center = tuple(np.atleast_1d(np.asarray(center, dtype=float)))
    if width <= 0 or t_support <= 0:
        raise ConfigurationError("bump width and time support must be positive")
    if not np.isfinite(amplitude):
        raise PotentialError("non-finite potential amplitude")
    a = abs(amplitude)
    radius = width * np.sqrt(np.log(a / VANISH_LEVEL)) if a > VANISH_LEVEL else 0.0

    def sampler(grid, t):
        r2 = sum((c - c0) ** 2 for c, c0 in zip(grid.coords(), center))
        env = _bump(np.array([(t - t_center) / t_support]))[0]
        return amplitude * env * np.exp(-r2 / width ** 2)

    params = {"amplitude": amplitude, "width": width, "center": list(center),
              "t_support": t_support, "t_center": t_center}
    return PotentialSpec("gaussian-bump", params, (t_center - t_support, t_center + t_support),
                         center, radius, sampler=sampler)


def sampled_potential(values: np.ndarray, grid: GridSpec, axis: TimeAxis) -> PotentialSpec:
    """Potential given as samples on a time axis; linear interpolation between samples."""
    values = np.asarray(values, dtype=float)
    if values.shape != (axis.M,) + grid.shape:
        raise ConfigurationError("sampled potential does not match its grid and axis")
    if not np.isfinite(values).all():
        raise PotentialError("sampled potential contains non-finite values")
    peak = np.abs(values).reshape(axis.M, -1).max(axis=1)
    live = np.nonzero(peak > VANISH_LEVEL)[0]
    t = axis.t
    if live.size == 0:
        support = (0.0, 0.0)
    else:
        support = (t[max(live[0] - 1, 0)], t[min(live[-1] + 1, axis.M - 1)])
    spatial = np.abs(values).max(axis=0) > VANISH_LEVEL
    radius = 0.0
    if spatial.any():
        rs = np.sqrt(grid.radius_sq())
        radius = float(np.broadcast_to(rs, grid.shape)[spatial].max())

    def sampler(g, tt):
        if g != grid:
            raise ConfigurationError("sampled potential used on a different grid")
        x = (tt - axis.t_min) / axis.dt
        j = int(np.clip(np.floor(x), 0, axis.M - 2))
        a = x - j
        return (1 - a) * values[j] + a * values[j + 1]

    return PotentialSpec("sampled", {"grid": grid.to_dict(), "axis": axis.to_dict()}, support,
                         (0.0,) * grid.n, radius, smoothness="piecewise-linear in t",
                         sampler=sampler)


def _psi(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth step chi(t) rising from 0 at t0 to 1 at t0 + width (side '>=').

    side '<=' gives the complementary step 1 - chi.
    """

    t0: float = 0.0
    width: float = 1.0
    side: str = ">="

    def __post_init__(self):
        if self.width <= 0:
            raise ConfigurationError("cutoff width must be positive")
        if self.side not in (">=", "<="):
            raise ConfigurationError(f"unknown cutoff side {self.side!r}")

    def _x(self, t):
        return (np.asarray(t, dtype=float) - self.t0) / self.width

    def chi(self, t) -> np.ndarray:
        x = self._x(t)
        a, b = _psi(x), _psi(1.0 - x)
        up = a / (a + b)
        return up if self.side == ">=" else 1.0 - up

    def dchi(self, t) -> np.ndarray:
        x = self._x(t)
        a, b = _psi(x), _psi(1.0 - x)
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(x > 0, a / np.where(x > 0, x, 1.0) ** 2, 0.0)
            db = np.where(x < 1, b / np.where(x < 1, 1.0 - x, 1.0) ** 2, 0.0)
        d = (da * b + a * db) / (a + b) ** 2 / self.width
        return d if self.side == ">=" else -d

    @property
    def transition(self) -> tuple:
        return (self.t0, self.t0 + self.width)
