"""Frozen oracle results, keyed by the hash of the configuration that produced them.

Each fixture is ``<name>-<hash>.json`` (config, scalar payload, array index) plus one
``<name>-<hash>-<array>.bin`` dump per array. The root is the package's ``fixtures/``
directory unless NLSCATTER_FIXTURES points elsewhere.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .errors import FixtureError
from .grid import AsymptoticData, Field, GridSpec, TimeAxis, read_dump, write_dump
from .oracle import (
    OracleConfig,
    brute_force_word_count,
    dense_weighted_norm,
    gaussian_data,
    gaussian_free_closed_form,
    gaussian_wk_norm,
    ivp_reference_solve,
)

ENV_VAR = "NLSCATTER_FIXTURES"
FIXTURE_VERSION = 1


def fixture_root() -> Path:
    env = os.environ.get(ENV_VAR)
    return Path(env) if env else Path(__file__).parent / "fixtures"


def _hash(config: dict) -> str:
    doc = json.dumps({"version": FIXTURE_VERSION, **config}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


# -- generators ------------------------------------------------------------------------

def _gen_gaussian_closed_form(cfg):
    pts = cfg["points"]
    vals = [complex(gaussian_free_closed_form(cfg["amplitude"], cfg["width"], cfg["center"],
                                              cfg["velocity"], [np.array(z)], t)) for z, t in pts]
    return {"values": [[v.real, v.imag] for v in vals]}, {}


def _gen_word_counts(cfg):
    return {"counts": {str(n): [brute_force_word_count(k, n) for k in range(cfg["k_max"] + 1)]
                       for n in cfg["dims"]}}, {}


def _gen_wk_gaussian(cfg):
    return {"norms": [gaussian_wk_norm(k) for k in range(cfg["k_max"] + 1)]}, {}


def _gen_dense_quadrature(cfg):
    return {"norm": dense_weighted_norm(cfg["amplitude"], cfg["width"], cfg["t_lo"], cfg["t_hi"],
                                        cfg["r"])}, {}


def _ivp(cfg, spec, V):
    from .linear import poisson
    grid = GridSpec(*cfg["grid"])
    axis = TimeAxis(*cfg["time"])
    f = AsymptoticData(grid, gaussian_data(grid, cfg["amplitude"], cfg["width"], cfg.get("center", 0.0),
                                           cfg.get("velocity", 0.0)))
    u_init = poisson(f, "-", V, axis, cfg.get("substeps", 1)).slice(0)
    ref = ivp_reference_solve(Field(grid, u_init.values, t=axis.t_min), spec, V, axis,
                              OracleConfig(refine=cfg["refine"]))
    return grid, axis, ref


def _gen_ivp_nonlinear(cfg):
    from .nonlinear import power
    grid, axis, ref = _ivp(cfg, power(cfg["p"]), None)
    final = ref.values[-1]
    return {"final_l2": float(np.sqrt(np.sum(np.abs(final) ** 2) * grid.cell))}, \
        {"final": (final, grid, axis.t_max)}


def _gen_ivp_linear_potential(cfg):
    from .potential import gaussian_bump
    V = gaussian_bump(*cfg["potential"])
    grid, axis, ref = _ivp(cfg, None, V)
    final = ref.values[-1]
    return {"final_l2": float(np.sqrt(np.sum(np.abs(final) ** 2) * grid.cell))}, \
        {"final": (final, grid, axis.t_max)}


def _gen_run_record(cfg):
    import tempfile
    from .config import load_config
    from .runner import cmd_solve
    with tempfile.TemporaryDirectory() as tmp:
        rec = cmd_solve(load_config(cfg["config"]), Path(tmp), save_fields=False)
        return {"norms": rec.norms}, {}


REGISTRY = {
    "gaussian-closed-form": (
        {"amplitude": 1.3, "width": 1.5, "center": 0.5, "velocity": 0.8,
         "points": [[0.0, 0.0], [1.0, 0.5], [-2.0, 3.0], [4.0, 7.5], [0.3, -2.0]]},
        _gen_gaussian_closed_form),
    "word-counts": ({"dims": [1, 2], "k_max": 4}, _gen_word_counts),
    "wk-gaussian": ({"k_max": 3}, _gen_wk_gaussian),
    "dense-quadrature": ({"amplitude": 1.0, "width": 1.0, "t_lo": -5.0, "t_hi": 5.0, "r": -1.0},
                         _gen_dense_quadrature),
    "ivp-linear-potential": (
        {"grid": [1, 64.0, 512], "time": [-20.0, 20.0, 401], "amplitude": 1.0, "width": 2.0,
         "velocity": 0.5, "potential": [0.5, 1.0, [0.0], 3.0, -6.0], "substeps": 8, "refine": 8},
        _gen_ivp_linear_potential),
    "ivp-quintic-1d": (
        {"grid": [1, 128.0, 512], "time": [-20.0, 20.0, 401], "amplitude": 0.25, "width": 2.0,
         "p": 5, "refine": 4}, _gen_ivp_nonlinear),
    "ivp-cubic-2d": (
        {"grid": [2, 48.0, 128], "time": [-10.0, 10.0, 201], "amplitude": 0.1, "width": 3.0,
         "p": 3, "refine": 4}, _gen_ivp_nonlinear),
    "record-quintic-1d": ({"config": "quintic-1d"}, _gen_run_record),
}


# -- storage ---------------------------------------------------------------------------

def fixture_hash(name: str) -> str:
    if name not in REGISTRY:
        raise FixtureError(f"unknown fixture {name!r}")
    return _hash({"name": name, **REGISTRY[name][0]})


def regenerate(names=None, root: Path | None = None) -> list:
    root = Path(root) if root is not None else fixture_root()
    root.mkdir(parents=True, exist_ok=True)
    written = []
    for name in names or list(REGISTRY):
        if name not in REGISTRY:
            raise FixtureError(f"unknown fixture {name!r}")
        cfg, gen = REGISTRY[name]
        h = fixture_hash(name)
        for old in root.glob(f"{name}-*"):
            old.unlink()
        payload, arrays = gen(cfg)
        index = {}
        for key, (values, grid, t) in arrays.items():
            fname = f"{name}-{h}-{key}.bin"
            write_dump(root / fname, values, grid, t=t)
            index[key] = fname
        doc = {"name": name, "version": FIXTURE_VERSION, "hash": h, "config": cfg,
               "payload": payload, "arrays": index}
        (root / f"{name}-{h}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        written.append(name)
    return written


def load_fixture(name: str, root: Path | None = None) -> dict:
    """Payload dict, with arrays loaded under ``arrays``; raises FixtureError if missing or stale."""
    root = Path(root) if root is not None else fixture_root()
    h = fixture_hash(name)
    path = root / f"{name}-{h}.json"
    if not path.exists():
        raise FixtureError(
            f"fixture {name!r} (hash {h}) is missing under {root}; regenerate it with "
            f"'nlscatter fixtures-regen --only {name}'")
    doc = json.loads(path.read_text())
    arrays = {}
    for key, fname in doc.get("arrays", {}).items():
        p = root / fname
        if not p.exists():
            raise FixtureError(f"fixture array {fname} is missing; run 'nlscatter fixtures-regen'")
        arrays[key] = read_dump(p).values
    return {**doc["payload"], "config": doc["config"], "arrays": arrays}
