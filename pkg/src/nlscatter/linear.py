"""Linear propagation: free and potential flows, Poisson operators, forced sweeps and
the splitting of a global solution into forward and backward pieces.

The operator is P = D_t + Delta + V with D_t = -i d/dt and Delta = -sum d^2/dz_j^2,
so solutions of P u = 0 satisfy u_t = -i (Delta + V) u and the free flow is the
Fourier multiplier exp(-i t |zeta|^2).
"""
from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, PreconditionError, TruncationError
from .grid import (
    AsymptoticData,
    Field,
    GridSpec,
    SpacetimeField,
    TimeAxis,
    fft_space,
    from_dual,
    ifft_space,
    laplacian,
    time_derivative,
    time_weights,
    weighted_l2_norm,
    WeightSpec,
)
from .potential import CutoffSpec, PotentialSpec, gaussian_bump, sampled_potential  # noqa: F401


def sign_of(sign) -> int:
    if sign in ("+", 1, "+1", "plus"):
        return 1
    if sign in ("-", -1, "-1", "minus"):
        return -1
    raise ConfigurationError(f"sign must be '+' or '-', got {sign!r}")


def free_evolve(u0: Field, t0: float, t1: float) -> Field:
    """Exact free flow on the torus from time t0 to t1."""
    g = u0.grid
    vals = ifft_space(fft_space(u0.values, g) * np.exp(-1j * (t1 - t0) * g.zeta_sq()), g)
    return Field(g, vals, t=t1)


class Stepper:
    """Strang splitting: half potential kick at the midpoint time, free step, half kick."""

    def __init__(self, grid: GridSpec, V: PotentialSpec | None = None):
        self.grid = grid
        self.V = V
        self._k2 = grid.zeta_sq()
        self._cache = {}

    def _free(self, u: np.ndarray, dt: float) -> np.ndarray:
        ph = self._cache.get(dt)
        if ph is None:
            ph = np.exp(-1j * dt * self._k2)
            self._cache[dt] = ph
        return ifft_space(fft_space(u, self.grid) * ph, self.grid)

    def _touches(self, a: float, b: float) -> bool:
        if self.V is None:
            return False
        lo, hi = self.V.t_support
        return max(a, b) > lo and min(a, b) < hi

    def step(self, u: np.ndarray, t: float, dt: float, substeps: int = 1) -> np.ndarray:
        """Advance u from t to t + dt (dt may be negative) with the given substeps."""
        d = dt / substeps
        for q in range(substeps):
            a = t + q * d
            if self._touches(a, a + d):
                kick = np.exp(-0.5j * d * self.V.sample(self.grid, a + 0.5 * d))
                u = kick * self._free(kick * u, d)
            else:
                u = self._free(u, d)
        return u


def _n_steps(span: float, dt_sub: float) -> int:
    if dt_sub <= 0:
        raise ConfigurationError("substep size must be positive")
    n = int(round(abs(span) / dt_sub))
    if abs(n * dt_sub - abs(span)) > 1e-9 * max(1.0, abs(span)):
        raise ConfigurationError(f"substep {dt_sub} does not divide the interval length {abs(span)}")
    return n


def evolve(u0: Field, t0: float, t1: float, V: PotentialSpec | None = None,
           dt_sub: float = 0.01) -> Field:
    """Flow of P u = 0 from t0 to t1 (either direction) by Strang splitting."""
    if V is None:
        return free_evolve(u0, t0, t1)
    n = _n_steps(t1 - t0, dt_sub)
    if n == 0:
        return Field(u0.grid, u0.values, t=t1)
    st = Stepper(u0.grid, V)
    d = (t1 - t0) / n
    u = np.array(u0.values)
    for m in range(n):
        u = st.step(u, t0 + m * d, d)
    return Field(u0.grid, u, t=t1)


def free_data_field(f: AsymptoticData, t: np.ndarray) -> np.ndarray:
    """Samples of the free solution with asymptotic data f at the given times."""
    g = f.grid
    base = fft_space(from_dual(f.values, g), g)
    k2 = g.zeta_sq()
    out = np.empty((len(t),) + g.shape, dtype=complex)
    for j, tj in enumerate(t):
        out[j] = base * np.exp(-1j * tj * k2)
    return ifft_space(out, g)


def poisson(f: AsymptoticData, sign, V: PotentialSpec | None, axis: TimeAxis,
            substeps: int = 1) -> SpacetimeField:
    """Global solution of P u = 0 that behaves like the free wave with data f at t -> sign * inf."""
    s = sign_of(sign)
    g = f.grid
    if V is None:
        return SpacetimeField(g, axis, free_data_field(f, axis.t))
    V.check_window(axis, g)
    t = axis.t
    out = np.empty((axis.M,) + g.shape, dtype=complex)
    st = Stepper(g, V)
    if s < 0:
        out[0] = free_data_field(f, t[:1])[0]
        for m in range(axis.M - 1):
            out[m + 1] = st.step(out[m], t[m], axis.dt, substeps)
    else:
        out[-1] = free_data_field(f, t[-1:])[0]
        for m in range(axis.M - 1, 0, -1):
            out[m - 1] = st.step(out[m], t[m], -axis.dt, substeps)
    return SpacetimeField(g, axis, out)


def forcing_tail(g: SpacetimeField) -> float:
    """Largest end-slice L2 norm relative to the largest slice norm."""
    norms = np.sqrt(np.sum(np.abs(g.values.reshape(g.axis.M, -1)) ** 2, axis=1))
    peak = norms.max()
    if peak == 0.0:
        return 0.0
    return float(max(norms[0], norms[-1]) / peak)


def propagator_inverse(g: SpacetimeField, sign, V: PotentialSpec | None = None,
                       substeps: int = 1, tail_tol: float = 1e-6) -> SpacetimeField:
    """Solve P u = g with u = 0 at t_min (sign '+', forward) or at t_max (sign '-').

    The forcing enters through the trapezoid rule in the discrete interaction picture,
        forward:  u[m+1] = S (u[m] + i dt/2 g[m]) + i dt/2 g[m+1],
        backward: u[m]   = S^-1 (u[m+1] - i dt/2 g[m+1]) - i dt/2 g[m],
    so the two sweeps split the full time integral exactly and each is causal.
    """
    s = sign_of(sign)
    tail = forcing_tail(g)
    if tail > tail_tol:
        raise TruncationError(f"forcing does not vanish at the window ends (tail {tail:.3e})",
                              tail_mass=tail)
    grid, axis = g.grid, g.axis
    c = 0.5j * axis.dt
    if V is None:
        return SpacetimeField(grid, axis, _free_sweep(g.values, grid, axis, s))
    V.check_window(axis, grid)
    st = Stepper(grid, V)
    t = axis.t
    gv = g.values
    out = np.zeros_like(gv)
    if s > 0:
        for m in range(axis.M - 1):
            out[m + 1] = st.step(out[m] + c * gv[m], t[m], axis.dt, substeps) + c * gv[m + 1]
    else:
        for m in range(axis.M - 1, 0, -1):
            out[m - 1] = st.step(out[m] - c * gv[m], t[m], -axis.dt, substeps) - c * gv[m - 1]
    return SpacetimeField(grid, axis, out)


def _free_sweep(gv: np.ndarray, grid: GridSpec, axis: TimeAxis, s: int) -> np.ndarray:
    # Exact free steps make the sweep a cumulative trapezoid sum of exp(it|zeta|^2) F g.
    k2 = grid.zeta_sq()
    t = axis.t
    G = fft_space(gv, grid)
    for j in range(axis.M):
        G[j] *= np.exp(1j * t[j] * k2)
    c = 0.5j * axis.dt
    order = range(axis.M - 1) if s > 0 else range(axis.M - 1, 0, -1)
    first = 0 if s > 0 else axis.M - 1
    prev = G[first].copy()
    G[first] = 0.0
    running = np.zeros(grid.shape, dtype=complex)
    for j in order:
        nxt_idx = j + s
        nxt = G[nxt_idx].copy()
        running += c * (prev + nxt)
        G[nxt_idx] = s * running
        prev = nxt
    for j in range(axis.M):
        G[j] *= np.exp(-1j * t[j] * k2)
    return sfft.ifftn(G, axes=tuple(range(-grid.n, 0)), overwrite_x=True)


def apply_P(u: SpacetimeField, V: PotentialSpec | None = None) -> np.ndarray:
    """Discrete P u: fourth-order D_t, spectral Laplacian, pointwise potential."""
    out = time_derivative(u.values, u.axis.dt) + laplacian(u.values, u.grid)
    if V is not None:
        for j, tj in enumerate(u.axis.t):
            out[j] += V.sample(u.grid, tj) * u.values[j]
    return out


def residual_density(u: SpacetimeField, V: PotentialSpec | None = None,
                     rhs: np.ndarray | None = None, r: float = 0.0, block: int = 64) -> np.ndarray:
    """Per-slice weighted density of P u - rhs, computed in overlapping time blocks."""
    M = u.axis.M
    t = u.axis.t
    out = np.empty(M)
    for a in range(0, M, block):
        b = min(a + block, M)
        lo, hi = max(a - 4, 0), min(b + 4, M)
        if hi - lo < 5:
            lo = max(hi - 5, 0)
        vals = u.values[lo:hi]
        res = time_derivative(vals, u.axis.dt) + laplacian(vals, u.grid)
        if V is not None:
            for j in range(lo, hi):
                res[j - lo] += V.sample(u.grid, t[j]) * vals[j - lo]
        if rhs is not None:
            res -= rhs[lo:hi]
        rs = u.grid.radius_sq()
        for j in range(a, b):
            wgt = (1.0 + rs + t[j] ** 2) ** r
            out[j] = np.sum(wgt * np.abs(res[j - lo]) ** 2) * u.grid.cell
    return out


def residual_norm(u: SpacetimeField, V: PotentialSpec | None = None,
                  rhs: np.ndarray | None = None, r: float = 0.0) -> float:
    dens = residual_density(u, V, rhs, r)
    return float(np.sqrt(np.dot(time_weights(u.axis), dens)))


def relative_residual(u: SpacetimeField, V: PotentialSpec | None = None, r: float = 0.0,
                      rhs: SpacetimeField | None = None) -> float:
    num = residual_norm(u, V, None if rhs is None else rhs.values, r)
    den = weighted_l2_norm(u, WeightSpec(r))
    return num / den if den > 0 else num


def split_solution(u0: SpacetimeField, cutoff: CutoffSpec, V: PotentialSpec | None = None,
                   substeps: int = 1, residual_tol: float = 1e-3):
    """Split a global solution as u0 = u_minus + u_plus via the commutator with a time cutoff.

    With chi rising across [t0, t0 + width], g = [P, chi] u0 = -i chi' u0 and
    u_plus = P_+^-1 g ~ chi u0, u_minus = -P_-^-1 g ~ (1 - chi) u0. The discrete forcing is
    normalised to unit trapezoid mass so that u_minus + u_plus = u0 holds to rounding.
    """
    axis = u0.axis
    lo, hi = cutoff.transition
    if not (axis.t_min < lo and hi < axis.t_max):
        raise ConfigurationError("cutoff transition must lie inside the time window")
    if V is not None:
        vlo, vhi = V.t_support
        if hi > vlo and lo < vhi:
            raise ConfigurationError("cutoff transition must avoid the time support of the potential")
    res = relative_residual(u0, V)
    if res > residual_tol:
        raise PreconditionError(f"input is not a global solution (relative residual {res:.3e})",
                                residual=res)
    up = CutoffSpec(cutoff.t0, cutoff.width, ">=")
    d = up.dchi(axis.t)
    mass = axis.dt * (d.sum() - 0.5 * (d[0] + d[-1]))
    shape = (-1,) + (1,) * u0.grid.n
    g = u0.with_values((-1j * d / mass).reshape(shape) * u0.values)
    u_plus = propagator_inverse(g, "+", V, substeps)
    u_minus = propagator_inverse(g, "-", V, substeps)
    return u_minus.with_values(-u_minus.values), u_plus
