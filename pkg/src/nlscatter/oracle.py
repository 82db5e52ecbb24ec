"""Reference computations that do not share code with the propagation sweeps.

* closed-form free evolution of boosted Gaussians,
* an interaction-picture RK4 integrator for the initial value problem,
* manufactured forcings g = P u* - N[u*],
* brute-force enumeration of reduced words.

Closed form. For u(z, 0) = A exp(-(z - z0)^2 / (2 w^2) + i k0 z) with k0 = v/2, the
solution of u_t = i u_zz is, per spatial axis,

    u(z, t) = A (1 + 2it/w^2)^(-1/2) exp(-(z - z0 - 2 k0 t)^2 / (2 (w^2 + 2it)) + i (k0 z - k0^2 t)),

with the principal square root. The packet centre moves at speed v = 2 k0 and
|u(z0, t)|^2 = A^2 (1 + 4 t^2 / w^4)^(-1/2) per axis.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StepSizeError
from .grid import (
    Field,
    GridSpec,
    SpacetimeField,
    TimeAxis,
    fft_space,
    ifft_space,
    laplacian,
    time_derivative,
)
from .nonlinear import NonlinearitySpec, eval_nonlinearity
from .potential import PotentialSpec


@dataclass(frozen=True)
class OracleConfig:
    scheme: str = "rk4-interaction-picture"
    refine: int = 4
    tolerance: float = 1e-4

    def __post_init__(self):
        if self.scheme not in ("rk4-interaction-picture", "strang-richardson"):
            raise ConfigurationError(f"unknown oracle scheme {self.scheme!r}")
        if self.refine < 4:
            raise ConfigurationError("the reference step must be at most a quarter of the main step")


def gaussian_free_closed_form(amplitude, width, center, velocity, z, t):
    """Closed-form free solution; z is a list of coordinate arrays (one per axis)."""
    if width <= 0:
        raise ConfigurationError("Gaussian width must be positive")
    n = len(z)
    center = np.broadcast_to(np.asarray(center, dtype=float), (n,))
    velocity = np.broadcast_to(np.asarray(velocity, dtype=float), (n,))
    w2 = width ** 2
    out = amplitude
    for j in range(n):
        k0 = velocity[j] / 2.0
        zj = z[j]
        out = out * (1.0 + 2j * t / w2) ** -0.5 * np.exp(
            -(zj - center[j] - 2.0 * k0 * t) ** 2 / (2.0 * (w2 + 2j * t)) + 1j * (k0 * zj - k0 ** 2 * t))
    return out


def gaussian_spacetime(grid: GridSpec, axis: TimeAxis, amplitude=1.0, width=1.0, center=0.0,
                       velocity=0.0) -> SpacetimeField:
    t = axis.t.reshape((-1,) + (1,) * grid.n)
    z = [c[None, ...] for c in grid.coords()]
    vals = gaussian_free_closed_form(amplitude, width, center, velocity, z, t)
    return SpacetimeField(grid, axis, np.broadcast_to(vals, (axis.M,) + grid.shape))


def gaussian_data(grid: GridSpec, amplitude=1.0, width=1.0, center=0.0, velocity=0.0) -> np.ndarray:
    """Asymptotic data F u(., 0) of the closed-form Gaussian on the ascending dual grid."""
    n = grid.n
    center = np.broadcast_to(np.asarray(center, dtype=float), (n,))
    velocity = np.broadcast_to(np.asarray(velocity, dtype=float), (n,))
    out = amplitude
    for j, zeta in enumerate(grid.dual_coords()):
        k0 = velocity[j] / 2.0
        out = out * width * np.sqrt(2 * np.pi) * np.exp(
            -width ** 2 * (zeta - k0) ** 2 / 2.0 - 1j * (zeta - k0) * center[j])
    return np.broadcast_to(out, grid.shape).astype(complex)


# -- IVP reference --------------------------------------------------------------------

def _rk4_rhs(v_hat, t, grid, k2, spec, V):
    """d/dt of the interaction-picture variable exp(it|zeta|^2) F u."""
    u = ifft_space(v_hat * np.exp(-1j * t * k2), grid)
    src = np.zeros_like(u)
    if V is not None:
        src = src - 1j * V.sample(grid, t) * u
    if spec is not None and not spec.is_zero:
        src = src + 1j * eval_nonlinearity(spec, Field(grid, u)).values
    return fft_space(src, grid) * np.exp(1j * t * k2)


def ivp_reference_solve(u_init: Field, spec: NonlinearitySpec | None, V: PotentialSpec | None,
                        axis: TimeAxis, config: OracleConfig = OracleConfig()) -> SpacetimeField:
    """RK4 in the interaction picture for u_t = -i (Delta + V) u + i N[u], from u_init at t_min."""
    grid = u_init.grid
    k2 = grid.zeta_sq()
    q = config.refine
    h = axis.dt / q
    if V is not None:
        vmax = V.max_abs(grid, axis)
        if h * vmax > 2.5:
            raise StepSizeError(f"reference step {h} too large for potential of size {vmax}")
    out = np.empty((axis.M,) + grid.shape, dtype=complex)
    out[0] = u_init.values
    v = fft_space(np.asarray(u_init.values), grid) * np.exp(1j * axis.t_min * k2)
    scale0 = np.sqrt(np.sum(np.abs(v) ** 2))
    t = axis.t
    for m in range(axis.M - 1):
        for s in range(q):
            tt = t[m] + s * h
            a = _rk4_rhs(v, tt, grid, k2, spec, V)
            b = _rk4_rhs(v + 0.5 * h * a, tt + 0.5 * h, grid, k2, spec, V)
            c = _rk4_rhs(v + 0.5 * h * b, tt + 0.5 * h, grid, k2, spec, V)
            d = _rk4_rhs(v + h * c, tt + h, grid, k2, spec, V)
            v = v + (h / 6.0) * (a + 2 * b + 2 * c + d)
        size = np.sqrt(np.sum(np.abs(v) ** 2))
        if not np.isfinite(size) or size > 1e6 * max(scale0, 1e-300):
            raise StepSizeError(f"reference integration became unstable near t={t[m + 1]}")
        out[m + 1] = ifft_space(v * np.exp(-1j * t[m + 1] * k2), grid)
    return SpacetimeField(grid, axis, out)


def manufactured_source(u_exact: SpacetimeField, spec: NonlinearitySpec | None,
                        V: PotentialSpec | None = None) -> SpacetimeField:
    """g = P u* - N[u*] with fourth-order D_t and spectral Laplacian."""
    vals = time_derivative(u_exact.values, u_exact.axis.dt) + laplacian(u_exact.values, u_exact.grid)
    if V is not None:
        for j, tj in enumerate(u_exact.axis.t):
            vals[j] += V.sample(u_exact.grid, tj) * u_exact.values[j]
    if spec is not None and not spec.is_zero:
        vals -= eval_nonlinearity(spec, u_exact).values
    return u_exact.with_values(vals)


def smooth_pulse(t: np.ndarray, sigma: float) -> tuple:
    """a(t) = erfc(-t / sigma) / 2 and its derivative; rises from 0 to 1 around t = 0."""
    from scipy.special import erfc
    a = 0.5 * erfc(-t / sigma)
    da = np.exp(-(t / sigma) ** 2) / (sigma * np.sqrt(np.pi))
    return a, da


# -- enumeration ------------------------------------------------------------------------

def brute_force_word_count(k: int, n: int) -> int:
    """Count distinct multisets of generators over all sequences with parabolic order <= k."""
    gens = [("Dz", j, 1) for j in range(n)] + [("Gal", j, 1) for j in range(n)]
    if n >= 2:
        gens.append(("Rot", 0, 1))
    gens += [("Dt", 0, 2), ("Dil", 0, 2)]
    seen = set()
    for length in range(k + 1):
        for seq in itertools.product(range(len(gens)), repeat=length):
            if sum(gens[i][2] for i in seq) <= k:
                seen.add(tuple(sorted(seq)))
    return len(seen)


# -- quadrature oracles ---------------------------------------------------------------------

def gaussian_wk_norm(k: int) -> float:
    """W^k norm of f(zeta) = exp(-zeta^2) in one dimension, by exact Gauss-Hermite quadrature.

    Words are multisets of {zeta, D_zeta} with zeta applied first; each word maps
    P(zeta) exp(-zeta^2) to another polynomial times exp(-zeta^2).
    """
    from numpy.polynomial import Polynomial
    from numpy.polynomial.hermite import hermgauss

    x, wts = hermgauss(40)
    zeta = x / np.sqrt(2.0)

    def sq_norm(q_re, q_im):
        vals = q_re(zeta) ** 2 + q_im(zeta) ** 2
        return float(np.dot(wts, vals) / np.sqrt(2.0))

    zpoly = Polynomial([0.0, 1.0])
    total = 0.0
    for d in range(k + 1):
        for a in range(d + 1):  # a factors of zeta applied first, then d - a of D_zeta
            re, im = Polynomial([1.0]), Polynomial([0.0])
            for _ in range(a):
                re, im = re * zpoly, im * zpoly
            for _ in range(d - a):
                # D (P e^{-z^2}) = -i (P' - 2 z P) e^{-z^2}
                dre = re.deriv() - 2 * zpoly * re
                dim = im.deriv() - 2 * zpoly * im
                re, im = dim, -dre
            total += sq_norm(re, im)
    return float(np.sqrt(total))


def dense_weighted_norm(amplitude: float, width: float, t_lo: float, t_hi: float, r: float,
                        z_max: float = 60.0) -> float:
    """Adaptive-quadrature spacetime norm of <(t, z)>^r u for the closed-form 1D Gaussian."""
    from scipy.integrate import quad

    def slice_density(t):
        f = lambda z: (1.0 + z * z + t * t) ** r * abs(
            gaussian_free_closed_form(amplitude, width, 0.0, 0.0, [np.array(z)], t)) ** 2
        return quad(f, -z_max, z_max, limit=400, epsabs=1e-14, epsrel=1e-12)[0]

    return float(np.sqrt(quad(slice_density, t_lo, t_hi, limit=200, epsabs=1e-13, epsrel=1e-11)[0]))
