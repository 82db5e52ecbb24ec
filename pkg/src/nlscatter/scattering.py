"""Asymptotic-data extraction, the nonlinear scattering map and convergence-rate fits.

Two discretisations of the limit profile are provided:

* pullback: f_t(zeta) = exp(i t |zeta|^2) (F u(., t))(zeta), exact for free waves;
* direct:   f_t(zeta) = (4 pi i t)^(n/2) exp(-i t |zeta|^2) u(2 t zeta, t), using the
  principal square root of 4 pi i t on each sign of t; only |2 t zeta_j| < L is covered,
  and the field must stay clear of the box edge, since periodic images enter u(2 t zeta, t).

Both are sampled at the largest |t| on one side and extrapolated to 1/t = 0.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InconclusiveRateWarning, WindowTooSmallError
from .grid import AsymptoticData, SpacetimeField, TimeAxis, interpolate_tensor, to_dual
from .modules import finiteness_verdict, wk_norm
from .nonlinear import NonlinearitySpec, SolverParams, picard_solve
from .potential import CutoffSpec, PotentialSpec

TAIL_TOL = 0.05
EDGE_TOL = 1e-6  # field amplitude allowed in the outer tenth of the box for the direct route


def _direction(direction) -> int:
    if direction in ("+", "+inf", 1, "plus", "+∞"):
        return 1
    if direction in ("-", "-inf", -1, "minus", "-∞"):
        return -1
    raise ConfigurationError(f"direction must be '+inf' or '-inf', got {direction!r}")


@dataclass
class ExtractionReport:
    data: AsymptoticData
    t_samples: np.ndarray
    errors: np.ndarray
    method: str
    order: int
    rate: float | None = None
    cross: AsymptoticData | None = None
    mask: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"method": self.method, "order": self.order,
                "t_samples": [float(t) for t in self.t_samples],
                "errors": [float(e) for e in self.errors], "rate": self.rate, **self.extras}


def pullback(u: SpacetimeField, j: int) -> np.ndarray:
    t = u.axis.t[j]
    zeta2 = sum(z ** 2 for z in u.grid.dual_coords())
    return np.exp(1j * t * zeta2) * to_dual(u.values[j], u.grid)


def direct_profile(u: SpacetimeField, j: int, mask_axis: np.ndarray) -> np.ndarray:
    """(4 pi i t)^(n/2) exp(-i t |zeta|^2) u(2 t zeta, t) on the masked tensor sub-grid."""
    grid = u.grid
    t = u.axis.t[j]
    zeta = grid.zeta[mask_axis]
    vals = interpolate_tensor(u.values[j], grid, 2.0 * t * zeta)
    pref = np.sqrt(4.0 * np.pi * 1j * t) ** grid.n
    zs = [z for z in np.meshgrid(*([zeta] * grid.n), indexing="ij", sparse=True)]
    return pref * np.exp(-1j * t * sum(z ** 2 for z in zs)) * vals


def _sample_indices(axis, side: int, samples: int, stride: int) -> list:
    if side > 0:
        idx = [axis.M - 1 - stride * i for i in range(samples)]
    else:
        idx = [stride * i for i in range(samples)]
    if min(idx) < 0 or max(idx) >= axis.M:
        raise ConfigurationError("not enough time samples for the extraction")
    return sorted(idx, key=lambda j: abs(axis.t[j]))


def richardson(t: np.ndarray, values: np.ndarray, order: int) -> np.ndarray:
    """Least-squares polynomial in 1/t of the given degree, evaluated at 1/t = 0."""
    x = 1.0 / np.asarray(t, dtype=float)
    if order < 0 or order >= len(x):
        raise ConfigurationError(f"extrapolation order {order} needs more than {len(x)} samples")
    if order == 0:
        return values.mean(axis=0)
    A = np.vander(x, order + 1, increasing=True)
    flat = values.reshape(len(x), -1)
    coef, *_ = np.linalg.lstsq(A, flat, rcond=None)
    return coef[0].reshape(values.shape[1:])


def _l2_dual(v: np.ndarray, grid) -> float:
    return float(np.sqrt(np.sum(np.abs(v) ** 2) * grid.dzeta ** grid.n))


def _edge_fraction(u: SpacetimeField, idx) -> float:
    """max |u| over |z_j| > 0.9 L on any axis, relative to max |u|, over the given slices."""
    grid = u.grid
    outer = np.zeros(grid.shape, dtype=bool)
    for z in grid.coords():
        outer |= np.abs(z) > 0.9 * grid.L
    worst = 0.0
    for j in idx:
        a = np.abs(u.values[j])
        top = a.max()
        if top > 0:
            worst = max(worst, float(a[outer].max() / top))
    return worst


def extract_asymptotic(u: SpacetimeField, direction="+inf", method: str = "pullback", *,
                       samples: int = 5, order: int | None = None, stride: int | None = None,
                       V: PotentialSpec | None = None, tail_tol: float = TAIL_TOL,
                       decay_order: int = 0) -> ExtractionReport:
    """Limit profile at t -> +inf or -inf from the last `samples` slices on that side.

    Pullback defaults to consecutive slices and a linear fit in 1/t. The direct formula
    carries O(1/t) stationary-phase corrections even for free waves, so it defaults to
    slices M/40 apart and a quartic fit; the pullback cross-check then uses the same slices.
    """
    side = _direction(direction)
    if method not in ("pullback", "direct"):
        raise ConfigurationError(f"unknown extraction method {method!r}")
    axis, grid = u.axis, u.grid
    if order is None:
        order = 1 if method == "pullback" else 4
    if stride is None:
        stride = 1 if method == "pullback" else max(1, axis.M // 40)
    idx = _sample_indices(axis, side, samples, stride)
    ts = axis.t[idx]
    if V is not None:
        lo, hi = V.t_support
        if ts.min() < hi and ts.max() > lo:
            raise WindowTooSmallError("potential is still active at the sampled times")
    pulled = np.stack([pullback(u, j) for j in idx])
    f_lim = richardson(ts, pulled, order)
    errs = np.array([_l2_dual(p - f_lim, grid) for p in pulled])
    scale = _l2_dual(f_lim, grid)
    spread = errs.max() / scale if scale > 0 else 0.0
    if spread > tail_tol:
        raise WindowTooSmallError(
            f"profile still drifting at the window end (relative spread {spread:.3e})")
    pb = AsymptoticData(grid, f_lim, decay_order)
    extras = {"relative_spread": float(spread)}
    if method == "pullback":
        return ExtractionReport(pb, np.abs(ts), errs, method, order, extras=extras)
    edge = _edge_fraction(u, idx)
    extras["edge_fraction"] = edge
    if edge > EDGE_TOL:
        raise WindowTooSmallError(
            f"field reaches the box edge at the sampled times (relative amplitude {edge:.2e}); "
            "the direct formula would read periodic images")
    t_far = np.abs(ts).max()
    mask_axis = np.abs(2.0 * t_far * grid.zeta) < grid.L
    direct = np.stack([direct_profile(u, j, mask_axis) for j in idx])
    d_lim = richardson(ts, direct, order)
    full = np.zeros(grid.shape, dtype=complex)
    sub = np.ix_(*([np.nonzero(mask_axis)[0]] * grid.n))
    full[sub] = d_lim
    d_errs = np.array([_l2_dual(d - d_lim, grid) for d in direct])
    pb_sub = f_lim[sub]
    denom = _l2_dual(pb_sub, grid)
    extras["direct_vs_pullback"] = _l2_dual(d_lim - pb_sub, grid) / denom if denom > 0 else 0.0
    mask = np.zeros(grid.shape, dtype=bool)
    mask[sub] = True
    return ExtractionReport(AsymptoticData(grid, full, decay_order), np.abs(ts), d_errs, method,
                            order, cross=pb, mask=mask, extras=extras)


def wk_window_ratio(u: SpacetimeField, k: int, ell: float = 0.0, direction="+inf",
                    fractions=(0.25, 0.5, 1.0), order: int = 1) -> tuple:
    """W^k norms of profiles extracted on nested windows and the ratio of their last two changes."""
    side = _direction(direction)
    t = u.axis.t
    t_end = abs(t[-1] if side > 0 else t[0])
    norms = []
    for frac in fractions:
        keep = np.nonzero(np.abs(t) <= frac * t_end + 1e-9 * t_end)[0]
        sub = SpacetimeField(u.grid, _sub_axis(u.axis, keep), u.values[keep])
        ext = extract_asymptotic(sub, direction, order=order, tail_tol=np.inf)
        norms.append(wk_norm(ext.data, k, ell))
    d = np.abs(np.diff(np.asarray(norms) ** 2))
    scale = max(norms[-1] ** 2, 1e-300)
    if d[-1] <= 1e-12 * scale:
        return norms, 0.0
    return norms, float(d[-1] / d[-2]) if d[-2] > 0 else float("inf")


def _sub_axis(axis, keep):
    return TimeAxis(float(axis.t[keep[0]]), float(axis.t[keep[-1]]), len(keep))


@dataclass
class RateFit:
    rate: float | str
    r_squared: float | None
    t: np.ndarray
    errors: np.ndarray
    monotone: bool = True

    def to_dict(self) -> dict:
        return {"rate": self.rate, "r_squared": self.r_squared, "t": [float(x) for x in self.t],
                "errors": [float(e) for e in self.errors], "monotone": self.monotone}


def convergence_rate(u: SpacetimeField, direction="+inf", *, t_fraction: float = 0.25,
                     points: int = 16, order: int = 1, exact_tol: float = 1e-12,
                     noise: float = 0.05) -> RateFit:
    """Log-log least-squares fit of |f_t - f| against |t| on the chosen side."""
    side = _direction(direction)
    axis, grid = u.axis, u.grid
    t = axis.t
    t_end = abs(t[-1] if side > 0 else t[0])
    live = np.nonzero((side * t) >= t_fraction * t_end)[0]
    if live.size < 4:
        raise ConfigurationError("need at least four usable time samples for a rate fit")
    live = live[np.argsort(np.abs(t[live]))[::-1]]
    pick = np.unique(np.round(np.geomspace(1, live.size, min(points, live.size))).astype(int) - 1)
    use = live[pick]
    ref = extract_asymptotic(u, direction, order=order, tail_tol=np.inf).data.values
    scale = _l2_dual(ref, grid)
    ts = np.abs(t[use])
    errs = np.array([_l2_dual(pullback(u, j) - ref, grid) for j in use])
    order_t = np.argsort(ts)
    ts, errs = ts[order_t], errs[order_t]
    if scale == 0 or errs.max() <= exact_tol * scale:
        return RateFit("exact", None, ts, errs)
    keep = errs > exact_tol * scale
    x, y = np.log(ts[keep]), np.log(errs[keep])
    if x.size < 4:
        warnings.warn("too few resolvable error samples for a rate fit", InconclusiveRateWarning)
        return RateFit(float("nan"), None, ts, errs, False)
    slope, icpt = np.polyfit(x, y, 1)
    pred = slope * x + icpt
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    monotone = bool(np.all(np.diff(errs[keep]) <= noise * errs[keep][:-1]))
    if not monotone:
        warnings.warn("error curve is not monotone; rate is inconclusive", InconclusiveRateWarning)
    return RateFit(float(-slope), r2, ts, errs, monotone)


@dataclass
class ScatteringResult:
    f_tilde: AsymptoticData
    report: dict
    solve: object
    extraction: ExtractionReport


def scattering_map(f: AsymptoticData, spec: NonlinearitySpec, V: PotentialSpec | None,
                   params: SolverParams, *, axis, cutoff: CutoffSpec = CutoffSpec(),
                   k: int = 2, ell: float = 0.0, order: int = 1,
                   refine: Callable[[], AsymptoticData] | None = None) -> ScatteringResult:
    """Incoming data f to outgoing data f_tilde, with data-space norms of both.

    The finiteness verdict on the W^k norm of f_tilde combines the change against an
    optional refined run (`refine` returns its f_tilde) with the nested-window ratio.
    """
    sol = picard_solve(f, spec, V, params, axis=axis, cutoff=cutoff)
    ext = extract_asymptotic(sol.u, "+inf", V=V, order=order, decay_order=f.decay_order)
    wf = wk_norm(f, k, ell)
    wft = wk_norm(ext.data, k, ell)
    window_norms, ratio = wk_window_ratio(sol.u, k, ell, order=order)
    change = None
    if refine is not None:
        w_ref = wk_norm(refine(), k, ell)
        change = abs(w_ref - wft) / max(abs(wft), 1e-300)
    verdict = finiteness_verdict(change, ratio)
    verdict["window_norms"] = window_norms
    report = {
        "wk_k": k, "wk_ell": ell,
        "wk_norm_f": wf, "wk_norm_f_tilde": wft,
        "wk_ratio": wft / wf if wf > 0 else None,
        "l2_f": f.l2_norm(), "l2_f_tilde": ext.data.l2_norm(),
        "verdict": verdict,
        "extraction": ext.to_dict(),
        "solver": sol.diagnostics,
    }
    return ScatteringResult(ext.data, report, sol, ext)
