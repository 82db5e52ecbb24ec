"""Run orchestration: solve a RunConfig, persist the run directory, export flat files.

Run directory layout (append-only)::

    runs/<hash>/manifest.json        config, hashes, diagnostics, timings, paths
    runs/<hash>/fields/*.bin         u (spacetime), f and f_tilde (dual grid)
    runs/<hash>/reports/*.json|csv   solver history, norms, scattering summary
    runs/<hash>/exports/             files written by ``export``

A repeated solve of the same configuration goes to ``runs/<hash>-r<k>/``.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import InconclusiveRateWarning, NotFoundError
from .grid import read_dump, weighted_l2_norm, WeightSpec, write_dump
from .modules import finiteness_verdict, module_norm_report, wk_norm
from .nonlinear import picard_solve
from .scattering import convergence_rate, extract_asymptotic, wk_window_ratio

EXPORT_SCHEMA = 1


def content_version() -> str:
    """Git-style blob hash over the package sources, so records pin the code that made them."""
    h = hashlib.sha1()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        data = p.read_bytes()
        h.update(f"blob {len(data)}\0".encode() + data)
    return h.hexdigest()


@dataclass
class RunRecord:
    config_hash: str
    content_version: str
    run_dir: Path
    diagnostics: dict
    norms: dict
    paths: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "content_version": self.content_version,
                "run_dir": str(self.run_dir), "diagnostics": self.diagnostics, "norms": self.norms,
                "paths": self.paths, "timings": self.timings}

    @classmethod
    def load(cls, run_dir) -> "RunRecord":
        run_dir = Path(run_dir)
        man = run_dir / "manifest.json"
        if not man.exists():
            raise NotFoundError(f"no run record at {run_dir}")
        doc = json.loads(man.read_text())
        norms = json.loads((run_dir / doc["paths"]["norms"]).read_text())
        return cls(doc["config_hash"], doc["content_version"], run_dir, doc["diagnostics"], norms,
                   doc["paths"], doc["timings"])


def _new_run_dir(root: Path, h: str) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    cand = root / h
    k = 2
    while cand.exists():
        cand = root / f"{h}-r{k}"
        k += 1
    cand.mkdir()
    (cand / "fields").mkdir()
    (cand / "reports").mkdir()
    return cand


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _clean(d: dict) -> dict:
    return {k: v for k, v in d.items() if k != "wall_time"}


def solve_config(cfg: RunConfig, base_dir: Path | None = None) -> dict:
    """Run the pipeline in memory; returns the result objects and the norm summary."""
    timings = {}
    t0 = time.perf_counter()
    grid, axis = cfg.grid_spec(), cfg.time_axis()
    V = cfg.potential_spec()
    spec = cfg.nonlinearity_spec()
    params = cfg.solver_params()
    f = cfg.asymptotic_data(base_dir)
    sol = picard_solve(f, spec, V, params, axis=axis, cutoff=cfg.cutoff())
    timings["solve"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    sc = cfg.scattering
    ext = extract_asymptotic(sol.u, "+inf", V=V, order=sc.order, decay_order=f.decay_order)
    wf, wft = wk_norm(f, sc.k, sc.ell), wk_norm(ext.data, sc.k, sc.ell)
    window_norms, ratio = wk_window_ratio(sol.u, sc.k, sc.ell, order=sc.order)
    rate = None
    if sc.rate:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InconclusiveRateWarning)
            rate = convergence_rate(sol.u, "+inf", order=sc.order).to_dict()
    timings["scattering"] = time.perf_counter() - t1

    t2 = time.perf_counter()
    module_reports = []
    for ns in cfg.norm_specs():
        rep = module_norm_report(sol.u, ns)
        module_reports.append({"s": ns.s, "r": ns.r, "k": ns.k, "c": ns.c, "norm": rep.norm,
                               "rows": rep.rows})
    timings["norms"] = time.perf_counter() - t2

    norms = {
        "weighted_l2_u": weighted_l2_norm(sol.u, WeightSpec(params.r_minus)),
        "module_norms": module_reports,
        "scattering": {
            "wk_k": sc.k, "wk_ell": sc.ell, "wk_norm_f": wf, "wk_norm_f_tilde": wft,
            "wk_ratio": wft / wf if wf > 0 else None,
            "l2_f": f.l2_norm(), "l2_f_tilde": ext.data.l2_norm(),
            "verdict": {**finiteness_verdict(None, ratio), "window_norms": window_norms},
            "extraction": ext.to_dict(),
            "rate": rate,
        },
        "solver": _clean(sol.diagnostics),
        "history": [_clean(h) for h in sol.history],
    }
    return {"solution": sol, "f": f, "f_tilde": ext.data, "norms": norms, "timings": timings}


def cmd_solve(cfg: RunConfig, runs_root="runs", *, base_dir: Path | None = None,
              save_fields: bool | None = None) -> RunRecord:
    """Solve, extract and measure; write the run directory and return its record."""
    out = solve_config(cfg, base_dir)
    h = cfg.config_hash()
    run_dir = _new_run_dir(Path(runs_root), h)
    paths = {"config": "config.json", "norms": "reports/norms.json",
             "history": "reports/history.csv", "word_table": "reports/norms.csv"}
    (run_dir / "config.json").write_text(cfg.to_json())
    (run_dir / paths["norms"]).write_text(_json(out["norms"]))
    _write_history(run_dir / paths["history"], out["solution"].history)
    _write_word_table(run_dir / paths["word_table"], out["norms"]["module_norms"])
    save = cfg.save_fields if save_fields is None else save_fields
    if save:
        sol = out["solution"]
        grid, axis = sol.u.grid, sol.u.axis
        write_dump(run_dir / "fields/u.bin", sol.u.values, grid, axis)
        write_dump(run_dir / "fields/f.bin", out["f"].values, grid, dual=True)
        write_dump(run_dir / "fields/f_tilde.bin", out["f_tilde"].values, grid, dual=True)
        paths.update({"u": "fields/u.bin", "f": "fields/f.bin", "f_tilde": "fields/f_tilde.bin"})
    diagnostics = out["solution"].diagnostics
    manifest = {
        "schema_version": EXPORT_SCHEMA,
        "package_version": __version__,
        "config_hash": h,
        "content_version": content_version(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seed": cfg.seed,
        "config": json.loads(cfg.canonical_json()),
        "diagnostics": diagnostics,
        "paths": paths,
        "timings": out["timings"],
    }
    (run_dir / "manifest.json").write_text(_json(manifest))
    return RunRecord(h, manifest["content_version"], run_dir, diagnostics, out["norms"], paths,
                     out["timings"])


def _write_history(path: Path, history: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["m", "diff", "ratio", "residual", "wall_time"])
        for h in history:
            w.writerow([h["m"], repr(h["diff"]), "" if h["ratio"] is None else repr(h["ratio"]),
                        repr(h["residual"]), f"{h['wall_time']:.6f}"])


def _write_word_table(path: Path, module_norms: list):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["norm_index", "s", "r", "k", "c", "word", "parabolic_order", "factor_count",
                    "contribution"])
        for i, rep in enumerate(module_norms):
            for row in rep["rows"]:
                w.writerow([i, rep["s"], rep["r"], rep["k"], rep["c"], row["word"], row["orders"][0],
                            row["orders"][1], repr(row["norm_contribution"])])


# -- export ------------------------------------------------------------------------------

def _need(run_dir: Path, rel: str | None, what: str) -> Path:
    if rel is None or not (run_dir / rel).exists():
        raise NotFoundError(f"run {run_dir} has no {what} artifact")
    return run_dir / rel


def _full_coords(x: np.ndarray, n: int) -> list:
    return [c.ravel() for c in np.meshgrid(*([x] * n), indexing="ij")]


def cmd_export(run_dir, what: str, *, t: float = 0.0) -> list:
    """Write plot-ready files under <run_dir>/exports; returns their paths."""
    run_dir = Path(run_dir)
    rec = RunRecord.load(run_dir)
    out_dir = run_dir / "exports"
    out_dir.mkdir(exist_ok=True)
    if what == "scattering":
        f = read_dump(_need(run_dir, rec.paths.get("f"), "f"))
        ft = read_dump(_need(run_dir, rec.paths.get("f_tilde"), "f_tilde"))
        zs = _full_coords(f.grid.zeta, f.grid.n)
        path = out_dir / "scattering.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"zeta_{j + 1}" for j in range(f.grid.n)] +
                       ["re_f", "im_f", "re_f_tilde", "im_f_tilde"])
            a, b = f.values.ravel(), ft.values.ravel()
            for i in range(a.size):
                w.writerow([repr(float(z[i])) for z in zs] +
                           [repr(a[i].real), repr(a[i].imag), repr(b[i].real), repr(b[i].imag)])
        return [path]
    if what == "norms":
        src = _need(run_dir, rec.paths.get("word_table"), "norms")
        dst = out_dir / "norms.csv"
        dst.write_text(src.read_text())
        js = out_dir / "norms.json"
        js.write_text(_json({"schema_version": EXPORT_SCHEMA, **rec.norms}))
        return [dst, js]
    if what == "fields":
        dump = read_dump(_need(run_dir, rec.paths.get("u"), "u"))
        j = int(np.clip(np.round((t - dump.axis.t_min) / dump.axis.dt), 0, dump.axis.M - 1))
        tj = float(dump.axis.t[j])
        binp = out_dir / f"u_t{tj:+.4f}.bin"
        write_dump(binp, dump.values[j], dump.grid, t=tj)
        csvp = out_dir / f"u_t{tj:+.4f}.csv"
        zs = _full_coords(dump.grid.z, dump.grid.n)
        vals = dump.values[j].ravel()
        with open(csvp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"z_{k + 1}" for k in range(dump.grid.n)] + ["re_u", "im_u"])
            for i in range(vals.size):
                w.writerow([repr(float(z[i])) for z in zs] + [repr(vals[i].real), repr(vals[i].imag)])
        return [binp, csvp]
    raise NotFoundError(f"unknown export {what!r}; choose fields, scattering or norms")
