import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import rel
from nlscatter.errors import (
    ConfigurationError,
    ExcludedCaseError,
    NonContractionError,
    PhaseInvarianceError,
    ResolutionError,
)
from nlscatter.grid import AsymptoticData, Field, GridSpec, SpacetimeField, TimeAxis
from nlscatter.linear import poisson
from nlscatter.nonlinear import (
    Factor,
    Monomial,
    NonlinearitySpec,
    SolverParams,
    dealiased_product,
    eval_nonlinearity,
    picard_map,
    picard_solve,
    power,
    validate_spec,
    zero_nonlinearity,
)
from nlscatter.oracle import gaussian_data
from nlscatter.suites import phase_specs

GRID = GridSpec(1, 64.0, 256)
AXIS = TimeAxis(-10.0, 10.0, 201)


def data(amplitude=0.25, grid=GRID):
    return AsymptoticData(grid, gaussian_data(grid, amplitude, 2.0))


@pytest.fixture(scope="module")
def quintic():
    return picard_solve(data(), power(5), None, SolverParams(), axis=AXIS)


class TestValidation:
    def test_excluded_case(self):
        with pytest.raises(ExcludedCaseError):
            validate_spec(power(3), 1)
        validate_spec(power(3), 2)
        validate_spec(power(5), 1)

    def test_phase_balance(self):
        bad = NonlinearitySpec((Monomial(1.0, (Factor(False), Factor(False), Factor(False))),))
        with pytest.raises(PhaseInvarianceError):
            validate_spec(bad, 2)

    @pytest.mark.parametrize("spec", [
        NonlinearitySpec(()),
        NonlinearitySpec((Monomial(1.0, (Factor(False),)),)),
        NonlinearitySpec((Monomial(1.0, (Factor(False), Factor(True), Factor(False, 1))),)),
    ], ids=["empty", "linear", "bad-derivative-axis"])
    def test_rejected(self, spec):
        with pytest.raises(ConfigurationError):
            validate_spec(spec, 1)

    def test_even_power(self):
        with pytest.raises(ConfigurationError):
            power(4)

    def test_epsilon_bound(self):
        with pytest.raises(ConfigurationError):
            picard_solve(data(), power(5), None, SolverParams(epsilon=0.2), axis=AXIS)

    def test_derivative_terms_need_decay(self):
        spec = phase_specs()["derivative"]
        with pytest.raises(ConfigurationError):
            picard_solve(data(grid=GridSpec(2, 16.0, 32)), spec, None, SolverParams(),
                         axis=TimeAxis(-2.0, 2.0, 41))


def random_field(seed, grid):
    rng = np.random.default_rng(seed)
    z = grid.coords()
    env = 1.0
    for zj in z:
        env = env * np.exp(-(zj - rng.uniform(-2, 2)) ** 2 / 2.0)
    return Field(grid, (rng.normal() + 1j * rng.normal()) * env * np.exp(1j * rng.uniform(-1, 1) * z[0]))


class TestEvaluation:
    @given(st.integers(0, 10 ** 6), st.floats(0, 2 * np.pi), st.sampled_from(list(phase_specs())))
    def test_phase_invariance(self, seed, theta, name):
        g = GridSpec(2, 16.0, 128)
        u = random_field(seed, g)
        spec = phase_specs()[name]
        ph = np.exp(1j * theta)
        a = eval_nonlinearity(spec, Field(g, ph * u.values)).values
        b = ph * eval_nonlinearity(spec, u).values
        assert np.abs(a - b).max() <= 1e-12 * np.abs(b).max()

    @given(st.integers(0, 10 ** 6), st.floats(0.1, 3.0), st.sampled_from([3, 5]))
    def test_power_scaling(self, seed, a, p):
        g = GridSpec(1, 16.0, 128)
        u = random_field(seed, g)
        lhs = eval_nonlinearity(power(p), Field(g, a * u.values)).values
        rhs = a ** p * eval_nonlinearity(power(p), u).values
        assert rel(lhs, rhs) < 1e-12

    @given(st.integers(0, 10 ** 6), st.integers(-3, 3))
    def test_modulation_covariance(self, seed, m):
        # multiplying by a grid-periodic plane wave commutes with gauge-invariant powers
        g = GridSpec(1, 16.0, 256)
        u = random_field(seed, g)
        e = np.exp(1j * m * g.dzeta * g.coords()[0])
        lhs = eval_nonlinearity(power(5), Field(g, e * u.values)).values
        rhs = e * eval_nonlinearity(power(5), u).values
        assert rel(lhs, rhs) < 1e-10

    def test_matches_pointwise_power(self):
        g = GridSpec(1, 20.0, 256)
        z = g.coords()[0]
        u = np.exp(-z ** 2 / 4 + 0.3j * z)
        got = eval_nonlinearity(power(3, 2.0 - 1j), Field(g, u)).values
        assert rel(got, (2.0 - 1j) * np.abs(u) ** 2 * u) < 1e-12

    def test_dealiased_product(self):
        g = GridSpec(1, 10.0, 32)
        z = g.coords()[0]
        k = 12 * g.dzeta
        a = np.exp(1j * k * z)
        # the exact product e^{2ikz} is beyond the grid; the 3/2-rule keeps it out of the low modes
        prod = dealiased_product(a, a, g)
        assert np.abs(prod).max() < 1e-12

    def test_alias_monitor(self):
        g = GridSpec(1, 10.0, 32)
        z = g.coords()[0]
        u = Field(g, np.exp(-(z / 0.4) ** 2))
        with pytest.raises(ResolutionError):
            eval_nonlinearity(power(5), u)


class TestPicard:
    def test_converges_and_contracts(self, quintic):
        d = quintic.diagnostics
        assert d["converged"] and d["max_ratio"] < 0.5
        assert d["relative_residual"] < 1e-3

    def test_fixed_point_certificate(self, quintic):
        w2 = picard_map(quintic.w, quintic.u_minus, quintic.u_plus, power(5))
        assert rel(w2.values, quintic.w.values) < 1e-9

    def test_uniqueness_from_two_starts(self, quintic):
        other = picard_solve(data(), power(5), None, SolverParams(initial="u_plus"), axis=AXIS)
        assert rel(other.w.values, quintic.w.values) < 10 * SolverParams().tol

    def test_zero_data_gives_zero(self):
        f = AsymptoticData(GRID, np.zeros(GRID.shape, dtype=complex))
        res = picard_solve(f, power(5), None, SolverParams(), axis=AXIS)
        assert np.abs(res.u.values).max() == 0.0

    def test_linear_case_returns_free_wave(self):
        f = data(1.0)
        res = picard_solve(f, zero_nonlinearity(), None, SolverParams(), axis=AXIS)
        assert rel(res.u.values, poisson(f, "-", None, AXIS).values) < 1e-12
        assert res.diagnostics["iterations"] <= 2

    def test_large_data_fails_loudly(self):
        with pytest.raises(NonContractionError) as exc:
            picard_solve(data(3.0), power(5), None, SolverParams(max_iter=40), axis=AXIS)
        assert exc.value.history and exc.value.data_norm > 0

    def test_nonlinearity_changes_outgoing_wave(self, quintic):
        u0 = quintic.u_minus + quintic.u_plus
        assert rel(quintic.u.values[-1], u0.values[-1]) > 1e-4
        assert rel(quintic.u.values[0], u0.values[0]) < 1e-3
