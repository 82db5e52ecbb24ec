import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from conftest import rel
from nlscatter.errors import (
    ConfigurationError,
    PreconditionError,
    ResolutionError,
    SingularityError,
    UnsupportedGeneratorError,
)
from nlscatter.fixtures import load_fixture
from nlscatter.grid import AsymptoticData, GridSpec, SpacetimeField, TimeAxis
from nlscatter.linear import poisson, relative_residual
from nlscatter.modules import (
    Dilation,
    Dt,
    Dz,
    Galilean,
    GeneratorWord,
    ModuleNormSpec,
    Rot,
    apply_generator,
    apply_word,
    commutator_defects,
    enumerate_reduced_words,
    finiteness_verdict,
    flat_conjugate,
    flat_module_norm,
    flat_unconjugate,
    increment_ratio,
    module_norm,
    module_norm_report,
    multiplication_gain_report,
    wk_norm,
    wk_word_count,
)
from nlscatter.oracle import gaussian_data, gaussian_spacetime
from nlscatter.suites import random_spacetime_field


@pytest.fixture(scope="module")
def free_wave():
    g = GridSpec(1, 64.0, 256)
    ax = TimeAxis(-4.0, 4.0, 321)
    return gaussian_spacetime(g, ax, 1.0, 2.0, 0.0, 0.3)


class TestWords:
    @pytest.mark.parametrize("n", [1, 2])
    def test_counts_match_brute_force(self, n):
        counts = load_fixture("word-counts")["counts"][str(n)]
        assert [len(enumerate_reduced_words(k, n)) for k in range(len(counts))] == counts

    def test_orders_and_sorting(self):
        words = enumerate_reduced_words(2, 1)
        assert str(words[0]) == "Id"
        orders = [w.total_parabolic_order for w in words]
        assert orders == sorted(orders) and max(orders) == 2
        assert GeneratorWord((Dt(),)).admissible(2) and not GeneratorWord((Dt(), Dz())).admissible(2)

    def test_level_range(self):
        with pytest.raises(ConfigurationError):
            enumerate_reduced_words(7, 1)
        with pytest.raises(ConfigurationError):
            ModuleNormSpec(k=-1)

    def test_rotation_needs_two_dimensions(self, free_wave):
        with pytest.raises(UnsupportedGeneratorError):
            apply_generator(free_wave, Rot())


class TestGenerators:
    def test_galilean_against_symbolic(self):
        z, t = sp.symbols("z t", real=True)
        c = sp.Rational(3, 2)
        expr = (1 + t ** 2) * sp.exp(-z ** 2 / 2 + sp.I * z / 3)
        gal = t * (-sp.I) * sp.diff(expr, z) - c * z / 2 * expr
        f = sp.lambdify((z, t), gal, "numpy")
        e = sp.lambdify((z, t), expr, "numpy")
        g = GridSpec(1, 16.0, 128)
        ax = TimeAxis(-1.0, 1.0, 21)
        zz, tt = g.coords()[0][None, :], ax.t[:, None]
        u = SpacetimeField(g, ax, e(zz, tt) * np.ones_like(zz * tt))
        got = apply_generator(u, Galilean(0, 1.5)).values
        assert rel(got, f(zz, tt) * np.ones_like(zz * tt)) < 1e-12

    def test_dz_galilean_commutator(self, rng):
        g = GridSpec(1, 16.0, 128)
        ax = TimeAxis(-1.0, 1.0, 41)
        u = random_spacetime_field(rng, g, ax)
        c = 0.7
        a = apply_word(u, GeneratorWord((Dz(), Galilean(0, c)), c)).values
        b = apply_word(u, GeneratorWord((Galilean(0, c), Dz()), c)).values
        assert rel(a - b, 0.5j * c * u.values) < 1e-10

    @pytest.mark.parametrize("gen", [Dz(), Galilean(0, 1.0), Dt(), Dilation()],
                             ids=["Dz", "Gal", "Dt", "Dil"])
    def test_generators_preserve_free_solutions(self, free_wave, gen):
        # module parameter c = 1 is the one whose generators commute (up to multiples of P) with P
        v = apply_generator(free_wave, gen, 1.0)
        assert relative_residual(v) < 1e-3

    def test_galilean_with_wrong_c_breaks_free_solutions(self, free_wave):
        v = apply_generator(free_wave, Galilean(0, 3.0))
        assert relative_residual(v) > 1e-2


class TestCommutators:
    @pytest.mark.parametrize("n", [1, 2])
    def test_defects_small(self, n):
        rng = np.random.default_rng(n)
        g = GridSpec(n, 14.0, 64 if n == 2 else 128)
        ax = TimeAxis(-1.0, 1.0, 401)
        v = random_spacetime_field(rng, g, ax)
        d = commutator_defects(v, 1.0, -4.0)
        assert max(d.values()) < 1e-8
        assert len(d) == (4 if n == 1 else 7)

    def test_singular_phase(self):
        g = GridSpec(1, 14.0, 64)
        ax = TimeAxis(-1.0, 1.0, 41)
        v = random_spacetime_field(np.random.default_rng(0), g, ax)
        with pytest.raises(SingularityError):
            commutator_defects(v, 1.0, 0.5)


class TestModuleNorm:
    def test_finite_for_free_waves_below_threshold(self):
        g = GridSpec(1, 128.0, 512)
        ax = TimeAxis(-20.0, 20.0, 401)
        u = poisson(AsymptoticData(g, gaussian_data(g, 1.0, 2.0)), "-", None, ax)
        rep = module_norm_report(u, ModuleNormSpec(0.0, -0.6, 2, 1.0), extra_r=(-0.4,))
        below = increment_ratio(rep.window_norms((5.0, 10.0, 20.0), r=-0.6))
        above = increment_ratio(rep.window_norms((5.0, 10.0, 20.0), r=-0.4))
        assert below < 1.0 < above
        assert rep.norm == pytest.approx(np.sqrt(sum(r["norm_contribution"] ** 2 for r in rep.rows)))

    @given(st.floats(0.2, 3.0))
    def test_homogeneous(self, a):
        g = GridSpec(1, 32.0, 128)
        ax = TimeAxis(-2.0, 2.0, 81)
        u = gaussian_spacetime(g, ax, 1.0, 1.5)
        spec = ModuleNormSpec(0.0, -0.6, 2, 1.0)
        assert module_norm(u.with_values(a * u.values), spec) == pytest.approx(a * module_norm(u, spec), rel=1e-12)

    def test_alias_monitor(self):
        g = GridSpec(1, 8.0, 32)
        ax = TimeAxis(-1.0, 1.0, 41)
        z = g.coords()[0]
        u = SpacetimeField(g, ax, np.broadcast_to(np.exp(-(z / 0.3) ** 2), (ax.M, g.N)))
        with pytest.raises(ResolutionError):
            module_norm(u, ModuleNormSpec(0.0, -0.6, 2, 1.0))


class TestFlatModule:
    def test_conjugation_round_trip_and_norm(self):
        g = GridSpec(1, 32.0, 128)
        ax = TimeAxis(-1.0, 6.0, 141)
        u = gaussian_spacetime(g, ax, 1.0, 1.5)
        chi = np.clip(ax.t, 0.0, None) ** 3 * np.exp(-(ax.t - 3.0) ** 2)
        u = u.with_values(chi[:, None] * u.values)
        w = flat_conjugate(u, 1.0, -1.0)
        assert rel(flat_unconjugate(w, 1.0, -1.0).values, u.values) < 1e-14
        assert np.isfinite(flat_module_norm(w, -0.6, 2))
        with pytest.raises(SingularityError):
            flat_conjugate(u, 1.0, 1.0)
        with pytest.raises(PreconditionError):
            flat_module_norm(gaussian_spacetime(g, ax), -0.6, 2)


class TestDataNorm:
    def test_gaussian_against_hermite_quadrature(self):
        ref = load_fixture("wk-gaussian")["norms"]
        g = GridSpec(1, 64.0, 512)
        f = AsymptoticData(g, np.exp(-g.zeta ** 2).astype(complex))
        for k, expected in enumerate(ref):
            assert wk_norm(f, k) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("n,k", [(1, 2), (2, 2), (2, 3)])
    def test_word_count(self, n, k):
        g = GridSpec(n, 20.0, 32)
        f = AsymptoticData(g, gaussian_data(g))
        assert len(wk_norm(f, k, report=True)[1]) == wk_word_count(k, n)

    @given(st.floats(2.0, 4.0))
    def test_rotation_annihilates_radial_data(self, width):
        # wide enough that the z-side Gaussian e^{-z^2 / 2 w^2} is negligible at the box edge
        g = GridSpec(2, 40.0, 128)
        f = AsymptoticData(g, gaussian_data(g, 1.0, width))
        _, rows = wk_norm(f, 1, report=True)
        rot = [r for r in rows if r["word"] == "rot12"][0]
        assert rot["norm_contribution"] < 1e-10


class TestVerdict:
    @pytest.mark.parametrize("change,ratio,verdict", [
        (0.01, 0.5, "finite"), (0.01, 1.2, "divergent"), (0.2, 0.5, "unresolved"),
        (None, 0.5, "incomplete"), (0.2, 1.5, "divergent"),
    ])
    def test_two_flags(self, change, ratio, verdict):
        assert finiteness_verdict(change, ratio)["verdict"] == verdict

    def test_increment_ratio(self):
        assert increment_ratio(np.sqrt([1.0, 2.0, 3.0])) == pytest.approx(1.0)
        assert increment_ratio(np.sqrt([1.0, 2.0, 2.5])) == pytest.approx(0.5)

    def test_gain_needs_oscillatory_module(self):
        g = GridSpec(1, 16.0, 64)
        ax = TimeAxis(-1.0, 1.0, 41)
        u = gaussian_spacetime(g, ax)
        with pytest.raises(UnsupportedGeneratorError):
            multiplication_gain_report(u, u, 1.0, -1.0, -0.6, -0.6, 1)
