"""Phase-invariant polynomial nonlinearities and the Picard solver for the final-state problem.

A monomial is a product of factors u, conj(u), d_j u, d_j conj(u). Phase invariance
N[e^{i theta} u] = e^{i theta} N[u] holds exactly when (#u) - (#conj u) = 1.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .errors import (
    ConfigurationError,
    ConvergenceError,
    ExcludedCaseError,
    NonContractionError,
    PhaseInvarianceError,
    RejectedInputError,
    ResolutionError,
)
from .grid import (
    AsymptoticData,
    Field,
    GridSpec,
    SpacetimeField,
    TimeAxis,
    WeightSpec,
    fft_space,
    ifft_space,
    spectral_tail,
    weighted_l2_norm,
    zeros,
)
from .linear import forcing_tail, poisson, propagator_inverse, residual_norm, split_solution
from .potential import CutoffSpec, PotentialSpec

ALIAS_TOL = 1e-6


@dataclass(frozen=True)
class Factor:
    conj: bool = False
    derivative: int | None = None

    def to_dict(self) -> dict:
        return {"base": "ubar" if self.conj else "u", "derivative": self.derivative}

    @classmethod
    def from_dict(cls, d) -> "Factor":
        base = d.get("base", "u")
        if base not in ("u", "ubar"):
            raise ConfigurationError(f"factor base must be 'u' or 'ubar', got {base!r}")
        return cls(base == "ubar", d.get("derivative"))


@dataclass(frozen=True)
class Monomial:
    coefficient: complex
    factors: tuple

    @property
    def degree(self) -> int:
        return len(self.factors)

    @property
    def balance(self) -> int:
        return sum(-1 if f.conj else 1 for f in self.factors)

    @property
    def has_derivatives(self) -> bool:
        return any(f.derivative is not None for f in self.factors)

    def to_dict(self) -> dict:
        c = complex(self.coefficient)
        return {"coefficient": [c.real, c.imag], "factors": [f.to_dict() for f in self.factors]}

    @classmethod
    def from_dict(cls, d) -> "Monomial":
        c = d.get("coefficient", 1.0)
        c = complex(c[0], c[1]) if isinstance(c, (list, tuple)) else complex(c)
        return cls(c, tuple(Factor.from_dict(f) for f in d["factors"]))


@dataclass(frozen=True)
class NonlinearitySpec:
    monomials: tuple = ()
    allow_degenerate: bool = False

    @property
    def p(self) -> int | None:
        return min((m.degree for m in self.monomials), default=None)

    @property
    def has_derivatives(self) -> bool:
        return any(m.has_derivatives for m in self.monomials)

    @property
    def is_zero(self) -> bool:
        return len(self.monomials) == 0

    def to_dict(self) -> dict:
        return {"monomials": [m.to_dict() for m in self.monomials],
                "allow_degenerate": self.allow_degenerate}

    @classmethod
    def from_dict(cls, d) -> "NonlinearitySpec":
        return cls(tuple(Monomial.from_dict(m) for m in d.get("monomials", [])),
                   bool(d.get("allow_degenerate", False)))


def power(p: int, coefficient: complex = 1.0) -> NonlinearitySpec:
    """coefficient * |u|^(p-1) u."""
    if p < 1 or p % 2 == 0:
        raise ConfigurationError(f"power nonlinearity needs odd p, got {p}")
    nu = (p + 1) // 2
    factors = (Factor(False),) * nu + (Factor(True),) * (p - nu)
    return NonlinearitySpec((Monomial(complex(coefficient), factors),))


def zero_nonlinearity() -> NonlinearitySpec:
    return NonlinearitySpec((), allow_degenerate=True)


def validate_spec(spec: NonlinearitySpec, n: int) -> NonlinearitySpec:
    if spec.is_zero:
        if spec.allow_degenerate:
            return spec
        raise ConfigurationError("empty nonlinearity requires the degenerate flag")
    for m in spec.monomials:
        if m.balance != 1:
            raise PhaseInvarianceError(
                f"monomial with balance {m.balance} breaks phase invariance (balance must be +1)")
        if m.degree < 3 or m.degree % 2 == 0:
            raise ConfigurationError(f"monomial degree must be odd and at least 3, got {m.degree}")
        for f in m.factors:
            if f.derivative is not None and not (0 <= f.derivative < n):
                raise ConfigurationError(f"derivative index {f.derivative} out of range for n={n}")
    if n == 1 and spec.p == 3:
        raise ExcludedCaseError(
            "(n, p) = (1, 3) is excluded: the cubic nonlinearity in one dimension resonates "
            "with the propagators and the asymptotic expansion picks up a logarithmic correction")
    return spec


# -- evaluation ------------------------------------------------------------------------

def _resize(spec: np.ndarray, n: int, N: int, Np: int) -> np.ndarray:
    """Zero-pad (Np > N) or truncate (Np < N) FFT-ordered coefficients on the last n axes."""
    out = spec
    lead = spec.ndim - n
    for ax in range(lead, lead + n):
        half = min(N, Np) // 2
        shape = list(out.shape)
        shape[ax] = Np
        new = np.zeros(shape, dtype=complex)
        src = [slice(None)] * out.ndim
        dst = [slice(None)] * out.ndim
        src[ax] = slice(0, half)
        dst[ax] = slice(0, half)
        new[tuple(dst)] = out[tuple(src)]
        src[ax] = slice(out.shape[ax] - half, out.shape[ax])
        dst[ax] = slice(Np - half, Np)
        new[tuple(dst)] = out[tuple(src)]
        out = new
    return out


def dealiased_product(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Product a*b computed on a 3/2-padded grid and truncated back."""
    N, n = grid.N, grid.n
    Np = 3 * N // 2
    axes = tuple(range(-n, 0))
    scale = (Np / N) ** n
    ap = sfft.ifftn(_resize(sfft.fftn(a, axes=axes), n, N, Np), axes=axes)
    bp = sfft.ifftn(_resize(sfft.fftn(b, axes=axes), n, N, Np), axes=axes)
    prod = sfft.fftn(ap * bp, axes=axes) * scale
    return sfft.ifftn(_resize(prod, n, Np, N), axes=axes)


def _factor_values(u: np.ndarray, grid: GridSpec, f: Factor, cache: dict) -> np.ndarray:
    key = (f.conj, f.derivative)
    if key in cache:
        return cache[key]
    if f.derivative is None:
        v = np.conj(u) if f.conj else u
    else:
        # d/dz_j = i D_{z_j}
        du = ifft_space(fft_space(u, grid) * (1j * grid.derivative_symbol(f.derivative)), grid)
        v = np.conj(du) if f.conj else du
    cache[key] = v
    return v


def _eval_block(spec: NonlinearitySpec, u: np.ndarray, grid: GridSpec) -> np.ndarray:
    out = np.zeros_like(u, dtype=complex)
    cache = {}
    for m in spec.monomials:
        acc = _factor_values(u, grid, m.factors[0], cache)
        for f in m.factors[1:]:
            acc = dealiased_product(acc, _factor_values(u, grid, f, cache), grid)
        out += m.coefficient * acc
    return out


def eval_nonlinearity(spec: NonlinearitySpec, u, alias_tol: float = ALIAS_TOL):
    """N[u] for a Field or SpacetimeField, slice-blocked to bound memory."""
    if isinstance(u, Field):
        vals = _eval_block(spec, u.values[None], u.grid)[0] if not spec.is_zero else np.zeros_like(u.values)
        _monitor(vals, u.grid, alias_tol)
        return Field(u.grid, vals, t=u.t)
    grid = u.grid
    if spec.is_zero:
        return u.with_values(np.zeros_like(u.values))
    out = np.empty_like(u.values)
    block = max(1, (1 << 21) // (grid.N ** grid.n))
    for a in range(0, u.axis.M, block):
        out[a:a + block] = _eval_block(spec, u.values[a:a + block], grid)
    _monitor(out, grid, alias_tol)
    return u.with_values(out)


def _monitor(vals, grid, alias_tol):
    tail = spectral_tail(vals, grid)
    if tail > alias_tol:
        raise ResolutionError(f"nonlinear term is under-resolved (spectral tail {tail:.2e})", tail=tail)


# -- Picard solver ---------------------------------------------------------------------

@dataclass(frozen=True)
class SolverParams:
    epsilon: float = 0.1
    k: int = 0
    max_iter: int = 60
    tol: float = 1e-10
    norm: str = "weighted-l2"
    substeps: int = 1
    tail_tol: float = 0.9
    initial: str = "zero"

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("tolerance must be positive")
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.norm not in ("weighted-l2", "module"):
            raise ConfigurationError(f"unknown contraction norm {self.norm!r}")
        if self.initial not in ("zero", "u_plus"):
            raise ConfigurationError(f"unknown initial iterate {self.initial!r}")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be at least 1")

    def check_against(self, spec: NonlinearitySpec):
        p = spec.p
        if p is not None and not self.epsilon < 1.0 / (p + 1):
            raise ConfigurationError(f"epsilon={self.epsilon} must be below 1/(p+1) = {1.0 / (p + 1):.4f}")

    @property
    def r_minus(self) -> float:
        return -0.5 - self.epsilon

    @property
    def r_plus(self) -> float:
        return 0.5 + self.epsilon


@dataclass
class SolveResult:
    u: SpacetimeField
    w: SpacetimeField
    u_minus: SpacetimeField
    u_plus: SpacetimeField
    history: list
    diagnostics: dict = field(default_factory=dict)


def _contraction_norm(v: SpacetimeField, params: SolverParams) -> float:
    if params.norm == "module":
        from .modules import ModuleNormSpec, module_norm
        return module_norm(v, ModuleNormSpec(0.0, params.r_minus, params.k, 1.0))
    return weighted_l2_norm(v, WeightSpec(params.r_minus))


BLOWUP = 1e3  # an increment this many times the free part plus the first iterate means divergence


def _data_norm(f: AsymptoticData, params: SolverParams) -> float:
    from .modules import wk_norm
    return wk_norm(f, max(params.k, 2), f.decay_order)


def _iterate(f: AsymptoticData, spec: NonlinearitySpec, V, params: SolverParams,
             axis: TimeAxis, cutoff: CutoffSpec, g: SpacetimeField | None) -> SolveResult:
    grid = f.grid
    validate_spec(spec, grid.n)
    params.check_against(spec)
    if spec.has_derivatives and f.decay_order < 1:
        raise ConfigurationError("derivative nonlinearities need data with one extra order of decay")
    if g is not None:
        if g.grid != grid or g.axis != axis:
            raise ConfigurationError("forcing lives on a different grid or time axis")
    t_start = time.perf_counter()
    u0 = poisson(f, "-", V, axis, params.substeps)
    u_minus, u_plus = split_solution(u0, cutoff, V, params.substeps)
    del u0
    w = u_plus if params.initial == "u_plus" else zeros(grid, axis)
    free_size = _contraction_norm(u_minus, params) + _contraction_norm(u_plus, params)
    history = []
    prev = None
    bad = 0
    tails = []
    for m in range(1, params.max_iter + 1):
        u = u_minus + w
        try:
            forcing = eval_nonlinearity(spec, u)
        except RejectedInputError:
            raise NonContractionError(
                f"iterates overflowed at step {m}; data norm {_data_norm(f, params):.4e} is too large",
                history=history, data_norm=_data_norm(f, params)) from None
        if g is not None:
            forcing = forcing + g
        resid = residual_norm(u, V, forcing.values, params.r_minus)
        del u
        tails.append(forcing_tail(forcing))
        w_new = propagator_inverse(forcing, "+", V, params.substeps, params.tail_tol)
        del forcing
        w_new = u_plus + w_new
        diff = _contraction_norm(w_new - w, params)
        scale = max(_contraction_norm(w_new, params), 1e-300)
        ratio = diff / prev if prev not in (None, 0.0) else None
        history.append({"m": m, "diff": diff, "ratio": ratio, "residual": resid,
                        "wall_time": time.perf_counter() - t_start})
        w = w_new
        if diff <= params.tol * scale or diff == 0.0:
            break
        if not np.isfinite(diff) or diff > BLOWUP * (free_size + history[0]["diff"]):
            raise NonContractionError(
                f"iterates blew up at step {m}; data norm {_data_norm(f, params):.4e} is too large",
                history=history, data_norm=_data_norm(f, params))
        bad = bad + 1 if (ratio is not None and ratio >= 1.0) else 0
        if bad >= 3:
            raise NonContractionError(
                f"iteration is not contracting (ratio >= 1 three times); data norm "
                f"{_data_norm(f, params):.4e} is too large", history=history,
                data_norm=_data_norm(f, params))
        prev = diff
    else:
        raise ConvergenceError(f"no convergence within {params.max_iter} iterations", history=history)
    u = u_minus + w
    final_forcing = eval_nonlinearity(spec, u)
    if g is not None:
        final_forcing = final_forcing + g
    w_res = residual_norm(u, V, final_forcing.values, params.r_minus)
    u_norm = weighted_l2_norm(u, WeightSpec(params.r_minus))
    n_norm = weighted_l2_norm(final_forcing if g is None else final_forcing - g, WeightSpec(params.r_plus))
    if not np.isfinite(n_norm):
        raise ConfigurationError("nonlinear forcing has no finite weighted norm")
    ratios = [h["ratio"] for h in history if h["ratio"] is not None]
    diag = {
        "iterations": len(history),
        "converged": True,
        "max_ratio": max(ratios) if ratios else 0.0,
        "residual": w_res,
        "relative_residual": w_res / u_norm if u_norm > 0 else 0.0,
        "forcing_weighted_norm": n_norm,
        "forcing_weight_r": params.r_plus,
        "tail_mass": max(tails) if tails else 0.0,
        "wall_time": time.perf_counter() - t_start,
    }
    return SolveResult(u, w, u_minus, u_plus, history, diag)


def picard_solve(f: AsymptoticData, spec: NonlinearitySpec, V: PotentialSpec | None,
                 params: SolverParams, *, axis: TimeAxis, cutoff: CutoffSpec = CutoffSpec()) -> SolveResult:
    """Fixed point of w -> u_plus + P_+^-1 N[u_minus + w] for incoming data f."""
    return _iterate(f, spec, V, params, axis, cutoff, None)


def inhomogeneous_solve(f: AsymptoticData, g: SpacetimeField, spec: NonlinearitySpec,
                        V: PotentialSpec | None, params: SolverParams, *,
                        cutoff: CutoffSpec = CutoffSpec()) -> SolveResult:
    """Fixed point of w -> u_plus + P_+^-1 (N[u_minus + w] + g)."""
    return _iterate(f, spec, V, params, g.axis, cutoff, g)


def picard_map(w: SpacetimeField, u_minus: SpacetimeField, u_plus: SpacetimeField,
               spec: NonlinearitySpec, V=None, params: SolverParams = SolverParams()) -> SpacetimeField:
    """One application of the contraction map (used for fixed-point certificates)."""
    forcing = eval_nonlinearity(spec, u_minus + w)
    return u_plus + propagator_inverse(forcing, "+", V, params.substeps, params.tail_tol)
