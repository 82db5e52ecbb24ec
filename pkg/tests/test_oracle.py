import ast
from pathlib import Path

import numpy as np
import pytest
import sympy as sp

import nlscatter.oracle as oracle
from conftest import rel
from nlscatter.errors import ConfigurationError
from nlscatter.fixtures import load_fixture
from nlscatter.grid import Field, GridSpec, TimeAxis
from nlscatter.modules import enumerate_reduced_words
from nlscatter.nonlinear import power
from nlscatter.oracle import (
    OracleConfig,
    brute_force_word_count,
    dense_weighted_norm,
    gaussian_free_closed_form,
    gaussian_spacetime,
    gaussian_wk_norm,
    ivp_reference_solve,
    manufactured_source,
)
from nlscatter.potential import gaussian_bump


def test_oracle_is_independent_of_the_propagation_code():
    tree = ast.parse(Path(oracle.__file__).read_text())
    imported = set()
    for node in ast.walk(tree):
        if isinstance(node, ast.ImportFrom):
            imported.add(node.module or "")
        elif isinstance(node, ast.Import):
            imported.update(a.name for a in node.names)
    assert not any(m.split(".")[-1] in ("linear", "scattering", "modules") for m in imported)


class TestClosedForm:
    def test_solves_free_equation_symbolically(self):
        z, t = sp.symbols("z t", real=True)
        A, w, z0, k0 = sp.Rational(13, 10), sp.Rational(3, 2), sp.Rational(1, 2), sp.Rational(2, 5)
        u = A / sp.sqrt(1 + 2 * sp.I * t / w ** 2) * sp.exp(
            -(z - z0 - 2 * k0 * t) ** 2 / (2 * (w ** 2 + 2 * sp.I * t)) + sp.I * (k0 * z - k0 ** 2 * t))
        assert sp.simplify((sp.diff(u, t) - sp.I * sp.diff(u, z, 2)) / u) == 0
        f = sp.lambdify((z, t), u, "numpy")
        for zz, tt in [(0.3, 0.0), (-1.0, 2.5), (4.0, -3.0)]:
            got = complex(gaussian_free_closed_form(1.3, 1.5, 0.5, 0.8, [np.array(zz)], tt))
            assert got == pytest.approx(complex(f(zz, tt)), rel=1e-13)

    def test_frozen_values(self):
        fx = load_fixture("gaussian-closed-form")
        cfg = fx["config"]
        for (zz, tt), (re, im) in zip(cfg["points"], fx["values"]):
            got = complex(gaussian_free_closed_form(cfg["amplitude"], cfg["width"], cfg["center"],
                                                    cfg["velocity"], [np.array(zz)], tt))
            assert got == pytest.approx(complex(re, im), rel=1e-14)

    @pytest.mark.parametrize("t", [0.0, 1.0, 5.0])
    def test_peak_decay(self, t):
        u = gaussian_free_closed_form(1.0, 2.0, 0.0, 0.0, [np.array(0.0)], t)
        assert abs(u) ** 2 == pytest.approx((1 + 4 * t ** 2 / 16) ** -0.5, rel=1e-13)

    def test_rejects_bad_width(self):
        with pytest.raises(ConfigurationError):
            gaussian_free_closed_form(1.0, 0.0, 0.0, 0.0, [np.zeros(3)], 0.0)


class TestIVPReference:
    def test_free_flow_matches_closed_form(self):
        g = GridSpec(1, 40.0, 256)
        ax = TimeAxis(-2.0, 2.0, 41)
        u0 = Field(g, gaussian_free_closed_form(1.0, 1.5, 0.0, 0.5, g.coords(), -2.0), t=-2.0)
        ref = ivp_reference_solve(u0, None, None, ax)
        exact = gaussian_free_closed_form(1.0, 1.5, 0.0, 0.5, g.coords(), 2.0)
        assert rel(ref.values[-1], exact) < 1e-11

    def test_fourth_order(self):
        g = GridSpec(1, 40.0, 256)
        ax = TimeAxis(-1.0, 1.0, 21)
        u0 = Field(g, gaussian_free_closed_form(1.0, 1.5, -1.0, 1.0, g.coords(), -1.0), t=-1.0)
        V = gaussian_bump(0.5, 1.5, (0.0,), 1.0)
        finest = ivp_reference_solve(u0, power(3), V, ax, OracleConfig(refine=64)).values[-1]
        errs = [rel(ivp_reference_solve(u0, power(3), V, ax, OracleConfig(refine=q)).values[-1], finest)
                for q in (4, 8)]
        assert np.log2(errs[0] / errs[1]) == pytest.approx(4.0, abs=0.3)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            OracleConfig(refine=2)
        with pytest.raises(ConfigurationError):
            OracleConfig(scheme="euler")


def test_manufactured_source_vanishes_on_free_waves():
    g = GridSpec(1, 40.0, 256)
    ax = TimeAxis(-2.0, 2.0, 401)
    u = gaussian_spacetime(g, ax, 1.0, 1.5, 0.0, 0.5)
    src = manufactured_source(u, None).values
    assert np.abs(src[2:-2]).max() < 1e-7 * np.abs(u.values).max()
    with_nl = manufactured_source(u, power(3)).values
    assert rel(with_nl[2:-2], -np.abs(u.values[2:-2]) ** 2 * u.values[2:-2]) < 1e-6


class TestEnumeration:
    @pytest.mark.parametrize("n,k", [(1, 0), (1, 3), (2, 2), (2, 3)])
    def test_brute_force_matches_enumerator(self, n, k):
        assert brute_force_word_count(k, n) == len(enumerate_reduced_words(k, n))

    def test_small_counts(self):
        # level 1 in one dimension: identity, D_z, Galilean
        assert brute_force_word_count(1, 1) == 3


class TestQuadratureOracles:
    def test_wk_level_zero(self):
        assert gaussian_wk_norm(0) == pytest.approx((np.pi / 2) ** 0.25, rel=1e-14)

    def test_dense_norm_unweighted(self):
        # |u(t)|_2^2 = A^2 w sqrt(pi) for every t
        assert dense_weighted_norm(1.0, 1.0, -2.0, 2.0, 0.0) == pytest.approx(
            np.sqrt(4.0 * np.sqrt(np.pi)), rel=1e-9)
