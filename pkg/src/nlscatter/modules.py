"""Module-regularity calculus: generators, reduced-power words, module and flat-module
norms, data-space norms on the dual grid, and the empirical multiplication-gain harness.

Words are written left to right as Rot^b Gal^g Dz^a Dt^p Dil^q and applied right to left.
A word is admissible at level k when its total parabolic order is at most k, where
Dz, Rot and Gal count 1 and Dt, Dil count 2.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    PreconditionError,
    ResolutionError,
    SingularityError,
    UnsupportedGeneratorError,
)
from .grid import (
    AsymptoticData,
    GridSpec,
    SpacetimeField,
    TimeAxis,
    WindowSpec,
    fft_space,
    from_dual,
    integrate_density,
    parabolic_bessel,
    spatial_derivative,
    spectral_tail,
    time_derivative,
    time_weights,
    to_dual,
    weighted_density,
)

MAX_LEVEL = 6
ALIAS_TOL = 1e-6
REFINEMENT_TOL = 0.05
NOISE_FLOOR = 1.0  # aliased energy is measured against max(word, base field)

_PARABOLIC = {"Id": 0, "Dz": 1, "Rot": 1, "Gal": 1, "Dt": 2, "Dil": 2,
              "TDz": 1, "ZT": 1, "TDt": 2}
_SPACETIME = {"Rot": 1, "Gal": 1, "Dil": 1}


@dataclass(frozen=True)
class Generator:
    kind: str
    axes: tuple = ()
    c: float | None = None

    def __post_init__(self):
        if self.kind not in _PARABOLIC:
            raise UnsupportedGeneratorError(f"unknown generator {self.kind!r}")

    @property
    def parabolic_order(self) -> int:
        return _PARABOLIC[self.kind]

    @property
    def spacetime_order(self) -> int:
        return _SPACETIME.get(self.kind, 0)

    def __str__(self):
        idx = "".join(str(a + 1) for a in self.axes)
        return f"{self.kind}{idx}"


def Dz(j=0):
    return Generator("Dz", (j,))


def Dt():
    return Generator("Dt")


def Rot(i=0, j=1):
    return Generator("Rot", (i, j))


def Galilean(j=0, c=1.0):
    return Generator("Gal", (j,), float(c))


def Dilation():
    return Generator("Dil")


IDENTITY = Generator("Id")


@dataclass(frozen=True)
class GeneratorWord:
    factors: tuple
    c: float = 1.0

    @property
    def total_parabolic_order(self) -> int:
        return sum(g.parabolic_order for g in self.factors)

    @property
    def total_factor_count(self) -> int:
        return len(self.factors)

    def admissible(self, k: int) -> bool:
        return self.total_parabolic_order <= k and self.total_factor_count <= k

    @property
    def label(self) -> str:
        return " ".join(str(g) for g in self.factors) if self.factors else "Id"

    def __str__(self):
        return self.label


@dataclass(frozen=True)
class ModuleNormSpec:
    s: float = 0.0
    r: float = -0.6
    k: int = 2
    c: float = 1.0

    def __post_init__(self):
        if not (0 <= int(self.k) <= MAX_LEVEL):
            raise ConfigurationError(f"module level k must lie in 0..{MAX_LEVEL}, got {self.k}")


def _check_level(k):
    if not (0 <= int(k) <= MAX_LEVEL):
        raise ConfigurationError(f"module level k must lie in 0..{MAX_LEVEL}, got {k}")


def canonical_families(n: int, c: float = 1.0) -> list:
    """Generator families in left-to-right canonical order."""
    fam = []
    if n >= 2:
        fam.append(Rot(0, 1))
    fam += [Galilean(j, c) for j in range(n)]
    fam += [Dz(j) for j in range(n)]
    fam += [Dt(), Dilation()]
    return fam


def _multi_indices(orders: list, k: int):
    """All exponent tuples e with sum(e_i * orders_i) <= k."""
    def rec(i, budget):
        if i == len(orders):
            yield ()
            return
        for e in range(budget // orders[i] + 1):
            for rest in rec(i + 1, budget - e * orders[i]):
                yield (e,) + rest
    return list(rec(0, k))


def _word_from_exponents(fam, exps, c) -> GeneratorWord:
    factors = []
    for g, e in zip(fam, exps):
        factors += [g] * e
    return GeneratorWord(tuple(factors), c)


def _sort_key(word: GeneratorWord):
    return (word.total_parabolic_order, word.total_factor_count, word.label)


def enumerate_reduced_words(k: int, n: int, c: float = 1.0) -> list:
    """One canonical representative per admissible multi-index, sorted, including Id."""
    _check_level(k)
    fam = canonical_families(n, c)
    words = [_word_from_exponents(fam, e, c) for e in _multi_indices([g.parabolic_order for g in fam], k)]
    return sorted(words, key=_sort_key)


# -- application ---------------------------------------------------------------------

def _tcol(axis: TimeAxis, grid: GridSpec, t_shift: float = 0.0) -> np.ndarray:
    return (axis.t - t_shift).reshape((-1,) + (1,) * grid.n)


def _apply(v: np.ndarray, grid: GridSpec, axis: TimeAxis, g: Generator, c=None) -> np.ndarray:
    kind = g.kind
    if kind == "Id":
        return v
    if kind in ("Rot",) and grid.n < 2:
        raise UnsupportedGeneratorError("rotations need at least two spatial dimensions")
    if any(a >= grid.n for a in g.axes):
        raise UnsupportedGeneratorError(f"generator {g} does not fit dimension {grid.n}")
    z = grid.coords()
    if kind == "Dz":
        return spatial_derivative(v, grid, g.axes[0])
    if kind == "Dt":
        return time_derivative(v, axis.dt)
    if kind == "Rot":
        i, j = g.axes
        return z[i] * spatial_derivative(v, grid, j) - z[j] * spatial_derivative(v, grid, i)
    if kind == "Gal":
        j = g.axes[0]
        cc = g.c if g.c is not None else c
        if cc is None:
            raise ConfigurationError("Galilean generator needs a module parameter c")
        return _tcol(axis, grid) * spatial_derivative(v, grid, j) - (0.5 * cc) * z[j] * v
    if kind == "Dil":
        out = 2.0 * _tcol(axis, grid) * time_derivative(v, axis.dt)
        for j in range(grid.n):
            out += z[j] * spatial_derivative(v, grid, j)
        return out
    tb = np.sqrt(1.0 + _tcol(axis, grid) ** 2)
    if kind == "TDz":
        return tb * spatial_derivative(v, grid, g.axes[0])
    if kind == "ZT":
        return np.sqrt(1.0 + grid.radius_sq()) / tb * v
    if kind == "TDt":
        return tb * time_derivative(v, axis.dt)
    raise UnsupportedGeneratorError(f"cannot apply {g}")


def apply_generator(u: SpacetimeField, g: Generator, c: float | None = None) -> SpacetimeField:
    return u.with_values(_apply(u.values, u.grid, u.axis, g, c))


def apply_word(u: SpacetimeField, word: GeneratorWord) -> SpacetimeField:
    v = u.values
    for g in reversed(word.factors):
        v = _apply(v, u.grid, u.axis, g, word.c)
    return u.with_values(v)


# -- norms ---------------------------------------------------------------------------

@dataclass
class NormReport:
    """Module norm with per-word contributions and per-time-slice densities."""

    norm: float
    rows: list
    densities: dict = field(default_factory=dict)
    axis: TimeAxis | None = None

    def total_density(self, r=None) -> np.ndarray:
        key = r if r is not None else next(iter(self.densities))
        return np.sum([d for d in self.densities[key].values()], axis=0)

    def window_norms(self, windows, r=None, symmetric=True) -> list:
        dens = self.total_density(r)
        out = []
        for T in windows:
            lo = -T if symmetric else self.axis.t_min
            out.append(float(np.sqrt(integrate_density(dens, self.axis, lo, T))))
        return out


def _word_tree(values, grid, axis, fam_applied, k, c, visit, alias_tol):
    """Depth-first walk over canonical words; fam_applied lists families in application order."""
    floor = NOISE_FLOOR * float(np.sum(np.abs(fft_space(values, grid)) ** 2))

    def rec(v, start, used, word):
        visit(word, v)
        for idx in range(start, len(fam_applied)):
            g = fam_applied[idx]
            if used + g.parabolic_order > k:
                continue
            child = _apply(v, grid, axis, g, c)
            new_word = (g,) + word
            tail = spectral_tail(child, grid, floor=floor)
            if tail > alias_tol:
                label = " ".join(str(x) for x in new_word)
                raise ResolutionError(
                    f"word {label} is under-resolved (spectral tail {tail:.2e})", word=label, tail=tail)
            rec(child, idx, used + g.parabolic_order, new_word)
            del child
    rec(values, 0, 0, ())


def _norm_report(u: SpacetimeField, fam: list, k: int, c, rs, s=0.0, window=None,
                 quadrature="trapezoid", alias_tol=ALIAS_TOL) -> NormReport:
    _check_level(k)
    rs = list(rs)
    if s > 0 and window is None:
        raise ConfigurationError("positive derivative order requires a time window taper")
    taper = None
    if s > 0:
        taper = window.profile(u.axis).reshape((-1,) + (1,) * u.grid.n)
    tw = time_weights(u.axis, quadrature)
    dens = {r: {} for r in rs}
    rows = []

    def visit(word, v):
        w = GeneratorWord(word, c)
        if s > 0:
            v = parabolic_bessel(v * taper, u.grid, u.axis, s)
        for r in rs:
            d = weighted_density(v, u.grid, u.axis, r)
            dens[r][w.label] = d
            if r == rs[0]:
                rows.append({"word": w.label, "orders": [w.total_parabolic_order, w.total_factor_count],
                             "norm_contribution": float(np.sqrt(max(np.dot(tw, d), 0.0)))})

    _word_tree(u.values, u.grid, u.axis, list(reversed(fam)), k, c, visit, alias_tol)
    order = {w.label: i for i, w in enumerate(sorted(
        (GeneratorWord(tuple(_parse(fam, r["word"])), c) for r in rows), key=_sort_key))}
    rows.sort(key=lambda r: order[r["word"]])
    total = float(np.sqrt(sum(r["norm_contribution"] ** 2 for r in rows)))
    return NormReport(total, rows, dens, u.axis)


def _parse(fam, label):
    if label == "Id":
        return []
    names = {str(g): g for g in fam}
    return [names[x] for x in label.split()]


def module_norm_report(u: SpacetimeField, spec: ModuleNormSpec, *, extra_r=(), window=None,
                       quadrature="trapezoid", alias_tol=ALIAS_TOL) -> NormReport:
    fam = canonical_families(u.grid.n, spec.c)
    return _norm_report(u, fam, spec.k, spec.c, (spec.r,) + tuple(extra_r), spec.s, window,
                        quadrature, alias_tol)


def module_norm(u: SpacetimeField, spec: ModuleNormSpec, *, window: WindowSpec | None = None,
                quadrature: str = "trapezoid", alias_tol: float = ALIAS_TOL) -> float:
    """Square root of the sum over reduced words A of the weighted norm of A u squared."""
    return module_norm_report(u, spec, window=window, quadrature=quadrature,
                              alias_tol=alias_tol).norm


# -- flat module -----------------------------------------------------------------------

def _support_start(u: SpacetimeField, side: str, level=1e-14):
    peak = np.abs(u.values).reshape(u.axis.M, -1).max(axis=1)
    live = np.nonzero(peak > level * max(peak.max(), 1e-300))[0]
    if live.size == 0:
        return None
    t = u.axis.t
    return t[live[0]] if side == ">=" else t[live[-1]]


def _flat_phase(u: SpacetimeField, c: float, t_star: float, side: str, t0=None, sign=-1.0):
    if c == 0:
        raise ConfigurationError("flat conjugation needs c != 0")
    if side not in (">=", "<="):
        raise ConfigurationError(f"unknown side {side!r}")
    start = _support_start(u, side) if t0 is None else t0
    t = u.axis.t
    if start is not None:
        if side == ">=" and not t_star < start:
            raise SingularityError(f"t_star={t_star} must lie before the support start {start}")
        if side == "<=" and not t_star > start:
            raise SingularityError(f"t_star={t_star} must lie after the support end {start}")
    dt = t - t_star
    live = (dt > 0) if side == ">=" else (dt < 0)
    inv = np.zeros_like(t)
    inv[live] = 1.0 / dt[live]
    inv = inv.reshape((-1,) + (1,) * u.grid.n)
    return np.exp(sign * 1j * c * u.grid.radius_sq()[None, ...] * inv / 4.0)


def flat_conjugate(u: SpacetimeField, c: float, t_star: float, side: str = ">=",
                   t0: float | None = None) -> SpacetimeField:
    """Multiply by exp(-i c |z|^2 / 4 (t - t_star)) on the supported side."""
    return u.with_values(u.values * _flat_phase(u, c, t_star, side, t0, -1.0))


def flat_unconjugate(w: SpacetimeField, c: float, t_star: float, side: str = ">=",
                     t0: float | None = None) -> SpacetimeField:
    return w.with_values(w.values * _flat_phase(w, c, t_star, side, t0, +1.0))


def flat_families(n: int) -> list:
    fam = []
    if n >= 2:
        fam.append(Rot(0, 1))
    fam.append(Generator("ZT"))
    fam += [Generator("TDz", (j,)) for j in range(n)]
    fam.append(Generator("TDt"))
    return fam


def flat_module_norm(w: SpacetimeField, r: float, k: int, side: str = ">=", t0: float = 0.0,
                     alias_tol: float = ALIAS_TOL, report: bool = False):
    """Reduced-power norm with generators <t>D_z, <z>/<t>, <t>D_t (order 2) and Rot."""
    t = w.axis.t
    outside = (t < t0) if side == ">=" else (t > t0)
    peak = np.abs(w.values).max()
    if outside.any() and np.abs(w.values[outside]).max() > 1e-14 * max(peak, 1e-300):
        raise PreconditionError(f"field is not supported on the side {side} {t0}")
    rep = _norm_report(w, flat_families(w.grid.n), k, None, (r,), alias_tol=alias_tol)
    return rep if report else rep.norm


def conjugation_phase(grid: GridSpec, axis: TimeAxis, c: float, t_star: float) -> np.ndarray:
    """exp(i c |z|^2 / 4 (t - t_star)) on the whole axis (t_star must lie outside it)."""
    if axis.t_min <= t_star <= axis.t_max:
        raise SingularityError(f"t_star={t_star} lies inside the time window")
    inv = (1.0 / (axis.t - t_star)).reshape((-1,) + (1,) * grid.n)
    return np.exp(1j * c * grid.radius_sq()[None, ...] * inv / 4.0)


def commutator_defects(v: SpacetimeField, c: float, t_star: float) -> dict:
    """Relative defects of A(Phi v) = Phi A_vec(v) + kappa_A Phi v for the shifted generators.

    A runs over D_z, D_t, (t - t*) D_z - c z/2, 2 (t - t*) D_t + z.D_z and Rot; A_vec is the
    vector-field part of A and kappa_A the multiplier by which A fails to commute with Phi:
    c z/2(t - t*), -c|z|^2/4(t - t*)^2, and zero for the last three.
    """
    grid, axis = v.grid, v.axis
    phi = conjugation_phase(grid, axis, c, t_star)
    z = grid.coords()
    s = _tcol(axis, grid, t_star)
    dz = lambda a, j: spatial_derivative(a, grid, j)
    dt = lambda a: time_derivative(a, axis.dt)
    pv = phi * v.values
    x = v.values
    out = {}

    def record(name, lhs, rhs):
        scale = max(float(np.linalg.norm(lhs)), 1e-300)
        out[name] = float(np.linalg.norm(lhs - rhs) / scale)

    for j in range(grid.n):
        record(f"Dz{j + 1}", dz(pv, j), phi * dz(x, j) + c * z[j] / (2.0 * s) * pv)
    record("Dt", dt(pv), phi * dt(x) - c * grid.radius_sq() / (4.0 * s ** 2) * pv)
    for j in range(grid.n):
        record(f"Gal{j + 1}", s * dz(pv, j) - 0.5 * c * z[j] * pv, phi * (s * dz(x, j)))
    dil = lambda a: 2.0 * s * dt(a) + sum(z[j] * dz(a, j) for j in range(grid.n))
    record("Dil", dil(pv), phi * dil(x))
    if grid.n >= 2:
        rot = lambda a: z[0] * dz(a, 1) - z[1] * dz(a, 0)
        record("Rot12", rot(pv), phi * rot(x))
    return out


# -- data norms on the dual grid ---------------------------------------------------------

def _dzeta(values: np.ndarray, grid: GridSpec, j: int) -> np.ndarray:
    """D_{zeta_j} f = -F(z_j F^-1 f)."""
    return -to_dual(grid.coords()[j] * from_dual(values, grid), grid)


def _wk_apply(v, grid, kind, j):
    zeta = grid.dual_coords()
    if kind == "zeta":
        return zeta[j] * v
    if kind == "dzeta":
        return _dzeta(v, grid, j)
    # rotation zeta_1 D_zeta_2 - zeta_2 D_zeta_1
    return zeta[0] * _dzeta(v, grid, 1) - zeta[1] * _dzeta(v, grid, 0)


def wk_norm(f: AsymptoticData, k: int, ell: float = 0.0, report: bool = False):
    """Square root of the sum over words of at most k generators
    {Id, rotations, D_zeta_j, zeta_j} of the L2(dzeta) norm of word(<zeta>^ell f), squared."""
    _check_level(k)
    grid = f.grid
    n = grid.n
    fam = ([("rot", 0)] if n >= 2 else []) + [("dzeta", j) for j in range(n)] + [("zeta", j) for j in range(n)]
    applied = list(reversed(fam))
    g0 = f.values * (1.0 + sum(z ** 2 for z in grid.dual_coords())) ** (ell / 2.0)
    dv = grid.dzeta ** n
    rows = []

    def rec(v, start, depth, word):
        label = " ".join(f"{a}{b + 1}" if a != "rot" else "rot12" for a, b in word) or "Id"
        rows.append({"word": label, "norm_contribution": float(np.sqrt(np.sum(np.abs(v) ** 2) * dv))})
        if depth == k:
            return
        for idx in range(start, len(applied)):
            kind, j = applied[idx]
            rec(_wk_apply(v, grid, kind, j), idx, depth + 1, ((kind, j),) + word)

    rec(g0, 0, 0, ())
    total = float(np.sqrt(sum(r["norm_contribution"] ** 2 for r in rows)))
    return (total, rows) if report else total


def wk_word_count(k: int, n: int) -> int:
    m = 2 * n + (1 if n >= 2 else 0)
    return sum(len(list(itertools.combinations_with_replacement(range(m), d))) for d in range(k + 1))


# -- verdicts and the multiplication-gain harness ----------------------------------------

def increment_ratio(values) -> float:
    """Largest ratio of successive increments of a squared-norm sequence over doubling windows.

    Logarithmic growth gives 1; anything convergent gives a ratio below 1.
    """
    sq = np.asarray(values, dtype=float) ** 2
    inc = np.diff(sq)
    ratios = []
    for a, b in zip(inc[:-1], inc[1:]):
        if a <= 0:
            ratios.append(0.0 if b <= 0 else np.inf)
        else:
            ratios.append(b / a)
    return float(max(ratios)) if ratios else float("nan")


def finiteness_verdict(refinement_change: float | None, window_ratio: float | None) -> dict:
    ref_ok = None if refinement_change is None else bool(refinement_change < REFINEMENT_TOL)
    win_ok = None if window_ratio is None else bool(window_ratio < 1.0)
    if win_ok is False:
        verdict = "divergent"
    elif ref_ok is False:
        verdict = "unresolved"
    elif ref_ok and win_ok:
        verdict = "finite"
    else:
        verdict = "incomplete"
    return {"refinement_stable": ref_ok, "window_stable": win_ok,
            "refinement_change": refinement_change, "window_increment_ratio": window_ratio,
            "verdict": verdict}


def _product(u1: SpacetimeField, u2: SpacetimeField) -> SpacetimeField:
    return u1.with_values(u1.values * u2.values)


def multiplication_gain_report(u1, u2, c1: float, c2: float, r1: float, r2: float, k: int, *,
                               windows=(10.0, 20.0, 40.0), symmetric: bool = False,
                               offsets=(0.0, 0.5), refine=None, alias_tol: float = ALIAS_TOL) -> dict:
    """Module norm of u1*u2 in the module c1+c2 at weight r1+r2+(n+1)/2 (+ each offset).

    u1, u2 are SpacetimeFields, or callables grid -> SpacetimeField when a refinement study
    is wanted; refine is then a callable returning the refined (u1, u2) pair restricted to the
    smallest window.
    """
    c = c1 + c2
    if c == 0:
        raise UnsupportedGeneratorError("products of a conjugate pair leave the oscillatory family")
    n = u1.grid.n
    gain = (n + 1) / 2.0
    r_targets = [r1 + r2 + gain + off for off in offsets]
    prod = _product(u1, u2)
    rep = module_norm_report(prod, ModuleNormSpec(0.0, r_targets[0], k, c),
                             extra_r=r_targets[1:], alias_tol=alias_tol)
    in1 = module_norm_report(u1, ModuleNormSpec(0.0, r1, k, c1), alias_tol=alias_tol)
    in2 = in1 if (u2 is u1 and c2 == c1 and r2 == r1) else module_norm_report(
        u2, ModuleNormSpec(0.0, r2, k, c2), alias_tol=alias_tol)
    refined = None
    if refine is not None:
        v1, v2 = refine()
        rr = module_norm_report(_product(v1, v2), ModuleNormSpec(0.0, r_targets[0], k, c),
                                extra_r=r_targets[1:], alias_tol=alias_tol)
        refined = rr
    out = {"n": n, "k": k, "c": c, "gain": gain, "windows": list(windows), "inputs": {}, "targets": []}
    for name, rp, cc, rr_ in (("u1", in1, c1, r1), ("u2", in2, c2, r2)):
        wn = rp.window_norms(windows, r=rr_, symmetric=symmetric)
        out["inputs"][name] = {"c": cc, "r": rr_, "norm": rp.norm, "window_norms": wn,
                               "window_increment_ratio": increment_ratio(wn)}
    base_window = min(windows)
    for off, r in zip(offsets, r_targets):
        wn = rep.window_norms(windows, r=r, symmetric=symmetric)
        ratio = increment_ratio(wn)
        change = None
        if refined is not None:
            a = rep.window_norms([base_window], r=r, symmetric=symmetric)[0]
            b = refined.window_norms([base_window], r=r, symmetric=symmetric)[0]
            change = abs(b - a) / a if a > 0 else 0.0
        prod_norm = wn[-1]
        denom = out["inputs"]["u1"]["window_norms"][-1] * out["inputs"]["u2"]["window_norms"][-1]
        out["targets"].append({
            "offset": off, "r": r, "product_norm": prod_norm, "window_norms": wn,
            "ratio": prod_norm / denom if denom > 0 else float("nan"),
            **finiteness_verdict(change, ratio),
        })
    return out
