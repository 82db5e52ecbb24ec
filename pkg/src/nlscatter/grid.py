"""Periodic spatial grid, time axis, sampled fields and the shared numerical substrate.

The spatial box is the torus [-L, L)^n sampled at z_j = -L + j h, h = 2L/N. The dual
grid holds the wavenumbers zeta_k = pi k / L, k = -N/2 .. N/2 - 1, stored in ascending
order. The Fourier transform approximated here is

    F g(zeta) = integral of exp(-i z . zeta) g(z) dz,

so the inverse carries the factor (2 pi)^-n.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DomainError, RejectedInputError, UnsupportedOrderError

# Guard rails on user-supplied weights.
MAX_ABS_R = 10.0
MAX_ABS_S = 4.0


def _is_pow2(N: int) -> bool:
    return N > 0 and (N & (N - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    n: int
    L: float
    N: int

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigurationError(f"spatial dimension must be 1 or 2, got {self.n}")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ConfigurationError(f"box half-width must be positive, got {self.L}")
        if not _is_pow2(int(self.N)) or self.N < 8:
            raise ConfigurationError(f"N must be a power of two >= 8, got {self.N}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", int(self.N))

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def cell(self) -> float:
        """Volume element h^n."""
        return self.h ** self.n

    @property
    def dzeta(self) -> float:
        return np.pi / self.L

    @property
    def z(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    @property
    def zeta(self) -> np.ndarray:
        """Ascending dual grid."""
        return self.dzeta * np.arange(-self.N // 2, self.N // 2)

    @property
    def zeta_fft(self) -> np.ndarray:
        """Dual grid in FFT storage order."""
        return 2.0 * np.pi * sfft.fftfreq(self.N, d=self.h)

    def coords(self) -> list:
        """Sparse broadcastable coordinate arrays, one per axis."""
        return _sparse(self.z, self.n)

    def wavenumbers(self) -> list:
        return _sparse(self.zeta_fft, self.n)

    def dual_coords(self) -> list:
        return _sparse(self.zeta, self.n)

    def radius_sq(self) -> np.ndarray:
        return sum(c ** 2 for c in self.coords())

    def zeta_sq(self) -> np.ndarray:
        """|zeta|^2 in FFT order, Nyquist mode kept."""
        return sum(k ** 2 for k in self.wavenumbers())

    def derivative_symbol(self, j: int) -> np.ndarray:
        """Symbol of D_{z_j} = -i d/dz_j in FFT order; the Nyquist mode is zeroed."""
        k = self.zeta_fft.copy()
        k[self.N // 2] = 0.0
        return _sparse(k, self.n)[j]

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n, self.L, self.N * factor)

    def to_dict(self) -> dict:
        return {"n": self.n, "L": self.L, "N": self.N}


def _sparse(v: np.ndarray, n: int) -> list:
    out = []
    for j in range(n):
        shape = [1] * n
        shape[j] = v.size
        out.append(v.reshape(shape))
    return out


@dataclass(frozen=True)
class TimeAxis:
    t_min: float
    t_max: float
    M: int

    def __post_init__(self):
        if not (np.isfinite(self.t_min) and np.isfinite(self.t_max)):
            raise ConfigurationError("time window must be finite")
        if not (self.t_min < 0.0 < self.t_max):
            raise ConfigurationError(
                f"time window must straddle zero, got [{self.t_min}, {self.t_max}]"
            )
        if int(self.M) < 16:
            raise ConfigurationError(f"need at least 16 time samples, got {self.M}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "t_min", float(self.t_min))
        object.__setattr__(self, "t_max", float(self.t_max))

    @classmethod
    def from_step(cls, t_min: float, t_max: float, dt: float) -> "TimeAxis":
        steps = int(round((t_max - t_min) / dt))
        if abs(steps * dt - (t_max - t_min)) > 1e-9 * max(1.0, abs(t_max - t_min)):
            raise ConfigurationError(f"step {dt} does not divide [{t_min}, {t_max}]")
        return cls(t_min, t_max, steps + 1)

    @property
    def t(self) -> np.ndarray:
        return np.linspace(self.t_min, self.t_max, self.M)

    @property
    def dt(self) -> float:
        return (self.t_max - self.t_min) / (self.M - 1)

    def index_of(self, t: float) -> int:
        j = int(round((t - self.t_min) / self.dt))
        if j < 0 or j >= self.M or abs(self.t_min + j * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ConfigurationError(f"time {t} is not a sample of the axis")
        return j

    def to_dict(self) -> dict:
        return {"t_min": self.t_min, "t_max": self.t_max, "M": self.M}


def _freeze(values, dtype=complex) -> np.ndarray:
    v = np.asarray(values, dtype=dtype).view()
    v.flags.writeable = False
    return v


def _check_finite(values: np.ndarray, what: str):
    if not np.isfinite(values).all():
        raise RejectedInputError(f"{what} contains non-finite values")


@dataclass(frozen=True)
class Field:
    """Complex samples on the spatial grid (space='z') or its dual (space='zeta')."""

    grid: GridSpec
    values: np.ndarray
    space: str = "z"
    t: float | None = None

    def __post_init__(self):
        v = _freeze(self.values)
        if v.shape != self.grid.shape:
            raise ConfigurationError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if self.space not in ("z", "zeta"):
            raise ConfigurationError(f"unknown space {self.space!r}")
        _check_finite(v, "field")
        object.__setattr__(self, "values", v)

    def l2_norm(self) -> float:
        dv = self.grid.cell if self.space == "z" else self.grid.dzeta ** self.grid.n
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * dv))


@dataclass(frozen=True)
class SpacetimeField:
    grid: GridSpec
    axis: TimeAxis
    values: np.ndarray

    def __post_init__(self):
        v = _freeze(self.values)
        if v.shape != (self.axis.M,) + self.grid.shape:
            raise ConfigurationError(
                f"spacetime shape {v.shape} does not match {(self.axis.M,) + self.grid.shape}"
            )
        _check_finite(v, "spacetime field")
        object.__setattr__(self, "values", v)

    def slice(self, j: int) -> Field:
        return Field(self.grid, self.values[j], t=float(self.axis.t[j]))

    @property
    def slices(self) -> list:
        return [self.slice(j) for j in range(self.axis.M)]

    def with_values(self, values) -> "SpacetimeField":
        return SpacetimeField(self.grid, self.axis, values)

    def __add__(self, other: "SpacetimeField") -> "SpacetimeField":
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "SpacetimeField") -> "SpacetimeField":
        return self.with_values(self.values - other.values)


def zeros(grid: GridSpec, axis: TimeAxis) -> SpacetimeField:
    return SpacetimeField(grid, axis, np.zeros((axis.M,) + grid.shape, dtype=complex))


@dataclass(frozen=True)
class AsymptoticData:
    """Asymptotic profile on the dual grid (ascending zeta).

    decay_order records how many powers of <zeta> the profile is known to carry;
    it gates derivative nonlinearities.
    """

    grid: GridSpec
    values: np.ndarray
    decay_order: int = 0

    def __post_init__(self):
        v = _freeze(self.values)
        if v.shape != self.grid.shape:
            raise ConfigurationError("asymptotic data shape does not match grid")
        _check_finite(v, "asymptotic data")
        object.__setattr__(self, "values", v)

    def as_field(self) -> Field:
        return Field(self.grid, self.values, space="zeta")

    def l2_norm(self) -> float:
        return self.as_field().l2_norm()

    def scaled(self, factor) -> "AsymptoticData":
        return AsymptoticData(self.grid, self.values * factor, self.decay_order)


@dataclass(frozen=True)
class WeightSpec:
    """Weight <Z>^r with <Z> = (1 + |z|^2 + t^2)^(1/2) and s parabolic derivatives."""

    r: float
    s: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.r) and abs(self.r) <= MAX_ABS_R):
            raise ConfigurationError(f"weight exponent r={self.r} outside [-{MAX_ABS_R}, {MAX_ABS_R}]")
        if not np.isfinite(self.s) or self.s > MAX_ABS_S:
            raise ConfigurationError(f"derivative order s={self.s} outside the supported range")
        if self.s < 0:
            raise UnsupportedOrderError("negative parabolic Sobolev order is not supported")


@dataclass(frozen=True)
class WindowSpec:
    """Raised-cosine taper applied to both ends of the time window."""

    taper_fraction: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.taper_fraction <= 0.5):
            raise ConfigurationError("taper fraction must lie in (0, 0.5]")

    def profile(self, axis: TimeAxis) -> np.ndarray:
        x = (axis.t - axis.t_min) / (axis.t_max - axis.t_min)
        a = self.taper_fraction
        w = np.ones_like(x)
        lo = x < a
        hi = x > 1 - a
        w[lo] = 0.5 - 0.5 * np.cos(np.pi * x[lo] / a)
        w[hi] = 0.5 - 0.5 * np.cos(np.pi * (1 - x[hi]) / a)
        return w


# -- transforms --------------------------------------------------------------------

def _space_axes(grid: GridSpec) -> tuple:
    return tuple(range(-grid.n, 0))


def fft_space(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.fftn(values, axes=_space_axes(grid))


def ifft_space(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    return sfft.ifftn(values, axes=_space_axes(grid))


def _origin_phase(grid: GridSpec) -> np.ndarray:
    # exp(-i z_0 zeta_k) with z_0 = -L is (-1)^k in FFT order
    k = np.round(grid.zeta_fft / grid.dzeta).astype(int)
    s = np.where(k % 2 == 0, 1.0, -1.0)
    out = 1.0
    for c in _sparse(s, grid.n):
        out = out * c
    return out


def to_dual(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Forward transform of samples (leading batch axes allowed) to the ascending dual grid."""
    spec = fft_space(values, grid) * (_origin_phase(grid) * grid.cell)
    return sfft.fftshift(spec, axes=_space_axes(grid))


def from_dual(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    spec = sfft.ifftshift(values, axes=_space_axes(grid)) * (_origin_phase(grid) / grid.cell)
    return ifft_space(spec, grid)


def fourier_transform(f: Field, direction: str = "forward") -> Field:
    if direction == "forward":
        if f.space != "z":
            raise ConfigurationError("forward transform expects a field on the spatial grid")
        return Field(f.grid, to_dual(f.values, f.grid), space="zeta", t=f.t)
    if direction == "inverse":
        if f.space != "zeta":
            raise ConfigurationError("inverse transform expects a field on the dual grid")
        return Field(f.grid, from_dual(f.values, f.grid), space="z", t=f.t)
    raise ConfigurationError(f"unknown direction {direction!r}")


def spatial_derivative(values: np.ndarray, grid: GridSpec, j: int) -> np.ndarray:
    """D_{z_j} = -i d/dz_j, spectral."""
    return ifft_space(fft_space(values, grid) * grid.derivative_symbol(j), grid)


def laplacian(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Positive Laplacian -sum d^2/dz_j^2, spectral."""
    return ifft_space(fft_space(values, grid) * grid.zeta_sq(), grid)


def time_derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """D_t = -i d/dt along axis 0, fourth order (one-sided five-point stencils at the ends)."""
    v = values
    if v.shape[0] < 5:
        raise ConfigurationError("need at least five time samples for the time derivative")
    d = np.empty_like(v, dtype=complex)
    d[2:-2] = v[:-4] - 8.0 * v[1:-3] + 8.0 * v[3:-1] - v[4:]
    d[0] = -25.0 * v[0] + 48.0 * v[1] - 36.0 * v[2] + 16.0 * v[3] - 3.0 * v[4]
    d[1] = -3.0 * v[0] - 10.0 * v[1] + 18.0 * v[2] - 6.0 * v[3] + v[4]
    d[-1] = 25.0 * v[-1] - 48.0 * v[-2] + 36.0 * v[-3] - 16.0 * v[-4] + 3.0 * v[-5]
    d[-2] = 3.0 * v[-1] + 10.0 * v[-2] - 18.0 * v[-3] + 6.0 * v[-4] - v[-5]
    d *= -1j / (12.0 * dt)
    return d


# -- norms ---------------------------------------------------------------------------

def time_weights(axis: TimeAxis, rule: str = "trapezoid") -> np.ndarray:
    dt = axis.dt
    if rule == "trapezoid":
        w = np.full(axis.M, dt)
        w[0] = w[-1] = dt / 2
        return w
    if rule == "simpson":
        if axis.M % 2 == 0:
            raise ConfigurationError("Simpson quadrature needs an odd number of samples")
        w = np.full(axis.M, 2.0)
        w[1::2] = 4.0
        w[0] = w[-1] = 1.0
        return w * dt / 3.0
    raise ConfigurationError(f"unknown quadrature rule {rule!r}")


def bracket_sq(grid: GridSpec, t: np.ndarray) -> np.ndarray:
    """<Z>^2 = 1 + |z|^2 + t^2 broadcast over (t, z)."""
    t = np.asarray(t, dtype=float).reshape((-1,) + (1,) * grid.n)
    return 1.0 + grid.radius_sq()[None, ...] + t ** 2


def weighted_density(values: np.ndarray, grid: GridSpec, axis: TimeAxis, r: float) -> np.ndarray:
    """Per-time-slice integral of <Z>^(2r) |u|^2 over the box."""
    out = np.empty(axis.M)
    rs = grid.radius_sq()
    t = axis.t
    for j in range(axis.M):
        w = (1.0 + rs + t[j] ** 2) ** r
        out[j] = np.sum(w * (values[j].real ** 2 + values[j].imag ** 2)) * grid.cell
    return out


def parabolic_bessel(values: np.ndarray, grid: GridSpec, axis: TimeAxis, s: float) -> np.ndarray:
    """Apply the spacetime multiplier (1 + |zeta|^4 + tau^2)^(s/4)."""
    tau = 2.0 * np.pi * sfft.fftfreq(axis.M, d=axis.dt)
    tau = tau.reshape((-1,) + (1,) * grid.n)
    zeta4 = grid.zeta_sq()[None, ...] ** 2
    mult = (1.0 + zeta4 + tau ** 2) ** (s / 4.0)
    axes = (0,) + tuple(range(1, grid.n + 1))
    return sfft.ifftn(sfft.fftn(values, axes=axes) * mult, axes=axes)


def weighted_l2_norm(
    u: SpacetimeField,
    w: WeightSpec,
    window: WindowSpec | None = None,
    quadrature: str = "trapezoid",
) -> float:
    """Discrete norm of <Z>^r B_s u over the window (trapezoid or Simpson in t, sum in z)."""
    values = u.values
    if w.s > 0:
        if window is None:
            raise ConfigurationError("positive derivative order requires a time window taper")
        taper = window.profile(u.axis).reshape((-1,) + (1,) * u.grid.n)
        values = parabolic_bessel(values * taper, u.grid, u.axis, w.s)
    dens = weighted_density(values, u.grid, u.axis, w.r)
    return float(np.sqrt(np.dot(time_weights(u.axis, quadrature), dens)))


def integrate_density(density: np.ndarray, axis: TimeAxis, t_lo: float, t_hi: float) -> float:
    """Trapezoid integral of a per-slice density over the samples inside [t_lo, t_hi]."""
    t = axis.t
    tol = 1e-9 * max(1.0, abs(t_lo), abs(t_hi))
    mask = (t >= t_lo - tol) & (t <= t_hi + tol)
    d = density[mask]
    if d.size < 2:
        return 0.0
    return float(axis.dt * (d.sum() - 0.5 * (d[0] + d[-1])))


# -- interpolation -------------------------------------------------------------------

def _interp_matrix(x: np.ndarray, grid: GridSpec) -> np.ndarray:
    k = grid.zeta_fft
    E = np.exp(1j * np.outer(x + grid.L, k))
    E[:, grid.N // 2] = np.cos((x + grid.L) * k[grid.N // 2])
    return E


def interpolate(f: Field, points) -> np.ndarray:
    """Trigonometric interpolation of a periodic field at arbitrary points (shape (P, n))."""
    grid = f.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if grid.n == 1 and pts.shape[0] == 1 and pts.shape[1] != 1:
        pts = pts.T
    if pts.shape[1] != grid.n:
        raise ConfigurationError("points must have shape (P, n)")
    if not np.isfinite(pts).all():
        raise RejectedInputError("non-finite interpolation points")
    if (pts < -grid.L).any() or (pts >= grid.L).any():
        raise DomainError("interpolation point outside the periodic box")
    c = fft_space(f.values, grid) / grid.N ** grid.n
    if grid.n == 1:
        return _interp_matrix(pts[:, 0], grid) @ c
    E1 = _interp_matrix(pts[:, 0], grid)
    E2 = _interp_matrix(pts[:, 1], grid)
    return np.einsum("pi,ij,pj->p", E1, c, E2)


def interpolate_tensor(values: np.ndarray, grid: GridSpec, x: np.ndarray) -> np.ndarray:
    """Interpolate at the tensor grid x^n (x one-dimensional, inside the box)."""
    c = fft_space(values, grid) / grid.N ** grid.n
    E = _interp_matrix(np.asarray(x, dtype=float), grid)
    if grid.n == 1:
        return E @ c
    return E @ c @ E.T


# -- monitors ------------------------------------------------------------------------

def spectral_tail(values: np.ndarray, grid: GridSpec, band: float = 5.0 / 6.0,
                  floor: float = 0.0) -> float:
    """Fraction of spectral energy in the outer band |zeta_j| > band * zeta_Nyquist.

    floor is a lower bound on the normalising energy, so fields at rounding level
    (e.g. a rotation applied to radial data) do not read as under-resolved.
    """
    spec = np.abs(fft_space(values, grid)) ** 2
    total = max(spec.sum(), floor)
    if total == 0.0:
        return 0.0
    kabs = np.abs(grid.zeta_fft) > band * np.pi / grid.h
    outer = np.zeros(grid.shape, dtype=bool)
    for m in _sparse(kabs, grid.n):
        outer = outer | m
    return float(spec[..., outer].sum() / total)


def edge_fraction(values: np.ndarray, grid: GridSpec) -> float:
    """max |u| on the outermost sample layer relative to max |u|."""
    a = np.abs(values)
    peak = a.max()
    if peak == 0.0:
        return 0.0
    edge = 0.0
    for j in range(grid.n):
        ax = a.ndim - grid.n + j
        edge = max(edge, np.take(a, 0, axis=ax).max(), np.take(a, -1, axis=ax).max())
    return float(edge / peak)


# -- binary dump ---------------------------------------------------------------------

_HEADER = struct.Struct("<qqdqdd")
DUAL_MARKER = -1


@dataclass
class Dump:
    grid: GridSpec
    values: np.ndarray
    axis: TimeAxis | None = None
    dual: bool = False
    t: float | None = None
    meta: dict = field(default_factory=dict)


def write_dump(path, values: np.ndarray, grid: GridSpec, axis: TimeAxis | None = None,
               dual: bool = False, t: float | None = None) -> Path:
    """Little-endian header (n, N, L, M, t_min, t_max) then interleaved re/im float64.

    M = 0 marks a single spatial slice (t_min = t_max = its time), M = -1 a dual-grid field.
    """
    path = Path(path)
    if axis is not None:
        M, t0, t1 = axis.M, axis.t_min, axis.t_max
    else:
        M = DUAL_MARKER if dual else 0
        t0 = t1 = 0.0 if t is None else float(t)
    arr = np.ascontiguousarray(np.asarray(values, dtype="<c16"))
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(grid.n, grid.N, grid.L, M, t0, t1))
        fh.write(arr.view("<f8").tobytes())
    return path


def read_dump(path) -> Dump:
    raw = Path(path).read_bytes()
    n, N, L, M, t0, t1 = _HEADER.unpack_from(raw, 0)
    grid = GridSpec(n, L, N)
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    vals = data.view("<c16")
    if M > 0:
        axis = TimeAxis(t0, t1, M)
        return Dump(grid, vals.reshape((M,) + grid.shape).copy(), axis=axis)
    return Dump(grid, vals.reshape(grid.shape).copy(), dual=(M == DUAL_MARKER), t=t0)
