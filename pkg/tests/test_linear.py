import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rel
from nlscatter.errors import ConfigurationError, PreconditionError, TruncationError
from nlscatter.grid import AsymptoticData, Field, GridSpec, SpacetimeField, TimeAxis
from nlscatter.linear import (
    apply_P,
    evolve,
    free_evolve,
    poisson,
    propagator_inverse,
    relative_residual,
    residual_norm,
    split_solution,
)
from nlscatter.oracle import gaussian_data, gaussian_free_closed_form, ivp_reference_solve
from nlscatter.potential import CutoffSpec, gaussian_bump
from nlscatter.suites import duhamel_forcings, duhamel_order

G = GridSpec(1, 40.0, 256)


def packet(grid=G, center=0.0, velocity=0.0, width=1.5):
    return Field(grid, gaussian_free_closed_form(1.0, width, center, velocity, grid.coords(), 0.0))


class TestFreeFlow:
    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_group_property(self, s, t):
        u = packet()
        a = free_evolve(free_evolve(u, 0.0, s), s, s + t)
        b = free_evolve(u, 0.0, s + t)
        assert rel(a.values, b.values) < 1e-12

    @given(st.floats(-5, 5))
    def test_unitarity(self, t):
        u = packet(velocity=0.7)
        assert free_evolve(u, 0.0, t).l2_norm() == pytest.approx(u.l2_norm(), rel=1e-12)

    @pytest.mark.parametrize("t", [0.5, 2.0, -1.5])
    def test_matches_closed_form(self, t):
        u = packet(center=1.0, velocity=0.5)
        exact = gaussian_free_closed_form(1.0, 1.5, 1.0, 0.5, G.coords(), t)
        assert rel(free_evolve(u, 0.0, t).values, exact) < 1e-10

    @given(st.floats(-1, 1), st.floats(0.2, 2.0))
    def test_galilean_covariance(self, v, t):
        # boosting the data by e^{i v z/2} boosts the solution and translates it by v t
        u0 = packet()
        z = G.coords()[0]
        k0 = v / 2
        boosted = Field(G, np.exp(1j * k0 * z) * u0.values)
        lhs = free_evolve(boosted, 0.0, t).values
        shifted = gaussian_free_closed_form(1.0, 1.5, 0.0, 0.0, [z - v * t], t)
        rhs = np.exp(1j * (k0 * z - k0 ** 2 * t)) * shifted
        assert rel(lhs, rhs) < 1e-9


class TestPotentialFlow:
    V = gaussian_bump(0.8, 1.0, (0.0,), t_support=1.0)

    def test_strang_second_order(self):
        u0 = packet(center=-2.0, velocity=1.0)
        ref = evolve(u0, -1.5, 1.5, self.V, dt_sub=0.001).values
        errs = [rel(evolve(u0, -1.5, 1.5, self.V, dt_sub=d).values, ref) for d in (0.04, 0.02, 0.01)]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all(np.abs(ratios - 4.0) < 0.4)

    def test_unitary_and_reversible(self):
        u0 = packet(center=-2.0, velocity=1.0)
        u1 = evolve(u0, -1.5, 1.5, self.V, dt_sub=0.01)
        assert u1.l2_norm() == pytest.approx(u0.l2_norm(), rel=1e-12)
        back = evolve(u1, 1.5, -1.5, self.V, dt_sub=0.01)
        assert rel(back.values, u0.values) < 1e-10

    def test_matches_rk4_oracle(self):
        ax = TimeAxis(-1.5, 1.5, 301)
        u0 = packet(center=-2.0, velocity=1.0)
        ref = ivp_reference_solve(Field(G, u0.values, t=-1.5), None, self.V, ax)
        got = evolve(u0, -1.5, 1.5, self.V, dt_sub=0.0025)
        assert rel(got.values, ref.values[-1]) < 1e-5

    def test_substep_must_divide(self):
        with pytest.raises(ConfigurationError):
            evolve(packet(), 0.0, 1.0, self.V, dt_sub=0.3)


class TestPoisson:
    def test_free_poisson_solves_equation(self, data1, axis1):
        u = poisson(data1, "-", None, axis1)
        assert relative_residual(u) < 1e-3
        assert np.allclose(poisson(data1, "+", None, axis1).values, u.values)

    def test_potential_poisson_sides_differ(self):
        grid = GridSpec(1, 64.0, 512)
        ax = TimeAxis(-20.0, 20.0, 401)
        f = AsymptoticData(grid, gaussian_data(grid, 1.0, 2.0, 0.0, 0.5))
        V = gaussian_bump(0.5, 1.0, (0.0,), 3.0, -6.0)
        um = poisson(f, "-", V, ax, substeps=4)
        up = poisson(f, "+", V, ax, substeps=4)
        assert rel(um.values[0], up.values[0]) > 1e-3
        assert um.slice(-1).l2_norm() == pytest.approx(f.l2_norm() / np.sqrt(2 * np.pi), rel=1e-10)


class TestDuhamel:
    @pytest.mark.parametrize("name", list(duhamel_forcings()))
    def test_second_order_residual(self, name):
        order, res = duhamel_order(duhamel_forcings()[name], steps=(0.1, 0.05, 0.025))
        assert abs(order - 2.0) < 0.2

    def test_forward_vanishes_before_forcing(self):
        ax = TimeAxis(-8.0, 8.0, 321)
        fn = duhamel_forcings()["pulse"]
        g = SpacetimeField(G, ax, fn(ax.t))
        up = propagator_inverse(g, "+")
        um = propagator_inverse(g, "-")
        assert np.abs(up.values[0]).max() == 0.0
        assert np.abs(um.values[-1]).max() == 0.0
        # difference of the two sweeps is a free solution
        d = up - um
        assert residual_norm(d) < 1e-3 * residual_norm(up)

    def test_truncation_error(self):
        ax = TimeAxis(-2.0, 2.0, 81)
        g = SpacetimeField(G, ax, np.ones((ax.M,) + G.shape))
        with pytest.raises(TruncationError) as exc:
            propagator_inverse(g, "+")
        assert exc.value.tail_mass == pytest.approx(1.0)

    def test_apply_P_of_free_wave_is_small(self, data1, axis1):
        u = poisson(data1, "-", None, axis1)
        assert np.abs(apply_P(u)[5:-5]).max() < 1e-3 * np.abs(u.values).max()


class TestSplitting:
    @pytest.mark.parametrize("with_V", [False, True])
    def test_identity_and_sides(self, with_V):
        grid = GridSpec(1, 64.0, 512)
        ax = TimeAxis(-20.0, 20.0, 401)
        f = AsymptoticData(grid, gaussian_data(grid, 1.0, 2.0, 0.0, 0.5))
        V = gaussian_bump(0.5, 1.0, (0.0,), 3.0, -6.0) if with_V else None
        u0 = poisson(f, "-", V, ax, substeps=4)
        um, up = split_solution(u0, CutoffSpec(), V, substeps=4)
        assert rel((um + up).values, u0.values) < 1e-10
        t = ax.t
        assert np.abs(up.values[t < -1]).max() < 1e-12
        assert np.abs(um.values[t > 2]).max() < 1e-12

    def test_rejects_non_solution(self, axis1):
        g = GridSpec(1, 64.0, 256)
        u = SpacetimeField(g, axis1, np.ones((axis1.M,) + g.shape) * np.exp(1j * axis1.t)[:, None])
        with pytest.raises(PreconditionError):
            split_solution(u, CutoffSpec())

    def test_cutoff_must_avoid_potential(self):
        grid = GridSpec(1, 64.0, 256)
        ax = TimeAxis(-20.0, 20.0, 401)
        f = AsymptoticData(grid, gaussian_data(grid, 1.0, 2.0))
        V = gaussian_bump(0.5, 1.0, (0.0,), 3.0, 0.0)
        u0 = poisson(f, "-", V, ax)
        with pytest.raises(ConfigurationError):
            split_solution(u0, CutoffSpec(), V)
