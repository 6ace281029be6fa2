"""Tests for repelling and opposing dynamics."""

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest

from src.dynamics import (
    default_step,
    integrate,
    picard_solve,
    picard_window,
    rhs,
    sample_initial,
    snap_step,
    solve_graphon,
    validate_initial,
    _vector_field,
)
from src.kernel import grid_kernel
from src.models import InitialCondition, LatentScheme, Model, NumericError, ParameterError
from src.registry import constant_kernel, constant_initial, linear_initial, sine_initial, vector_initial
from src.sampler import make_latents, sample_adjacency, step_graphon

TWO_NODES = grid_kernel(np.array([[0.0, 1.0], [1.0, 0.0]]))


def random_signed(seed: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    matrix = np.triu(rng.uniform(-1.0, 1.0, size=(n, n)), 1)
    return matrix + matrix.T


class TestRhs:
    """Tests for the right-hand sides."""

    @pytest.mark.parametrize("model", list(Model))
    def test_zero_kernel(self, model: Model):
        """No edges, no motion."""
        k = grid_kernel(np.zeros((3, 3)))
        assert np.all(rhs(model, k, 1.0, np.array([1.0, -2.0, 3.0])) == 0.0)

    @given(st.integers(min_value=0, max_value=10 ** 6), st.floats(min_value=-5, max_value=5))
    def test_consensus_is_an_equilibrium(self, seed: int, c: float):
        """Property: constant opinions are fixed points of the repelling model."""
        k = grid_kernel(random_signed(seed, 6))
        np.testing.assert_allclose(rhs(Model.REPELLING, k, 0.7, np.full(6, c)), 0.0, atol=1e-12)

    def test_models_coincide_on_nonnegative_kernels(self):
        """Without negative edges both models are the same."""
        k = grid_kernel(np.abs(random_signed(1, 5)))
        u = np.linspace(-1.0, 1.0, 5)
        assert np.array_equal(rhs(Model.REPELLING, k, 0.3, u), rhs(Model.OPPOSING, k, 0.3, u))

    def test_formulas(self):
        """Both right-hand sides on a single antagonistic edge."""
        k = grid_kernel(np.array([[0.0, -1.0], [-1.0, 0.0]]))
        u = np.array([1.0, 3.0])
        # repelling: -(3 - 1), -(1 - 3); opposing: -3 - 1, -1 - 3
        np.testing.assert_array_equal(rhs("repelling", k, 1.0, u), [-2.0, 2.0])
        np.testing.assert_array_equal(rhs("opposing", k, 1.0, u), [-4.0, -4.0])

    def test_dimension_mismatch(self):
        """The state must have one entry per node."""
        with pytest.raises(ParameterError):
            rhs(Model.REPELLING, TWO_NODES, 1.0, np.ones(3))


class TestIntegrate:
    """Tests for fixed-step RK4."""

    def test_two_node_repelling_closed_form(self):
        """u1 - u2 = exp(-2t)."""
        traj = integrate(Model.REPELLING, TWO_NODES, 1.0, np.array([1.0, 0.0]), 1.0, 1e-3)
        gap = traj.states[-1, 0] - traj.states[-1, 1]
        assert abs(gap - np.exp(-2.0)) < 1e-9

    def test_opposing_antagonistic_constant_decay(self):
        """W = -1, alpha = 1/n, g = c gives c exp(-2t)."""
        n = 7
        k = grid_kernel(-np.ones((n, n)))
        traj = integrate(Model.OPPOSING, k, 1.0 / n, np.full(n, 0.8), 1.0, 1e-3)
        assert np.max(np.abs(traj.states[-1] - 0.8 * np.exp(-2.0))) < 1e-9

    def test_zero_horizon(self):
        """T = 0 records only the initial state."""
        g = np.array([0.2, 0.4])
        traj = integrate(Model.REPELLING, TWO_NODES, 1.0, g, 0.0, 0.1)
        assert traj.times.tolist() == [0.0]
        assert np.array_equal(traj.states, g[None, :])

    def test_records_every_step(self):
        """Every step is recorded on the uniform grid."""
        g = np.array([0.2, 0.4])
        traj = integrate(Model.OPPOSING, TWO_NODES, 1.0, g, 1.0, 0.25)
        np.testing.assert_allclose(traj.times, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert np.array_equal(traj.states[0], g)
        assert traj.source == "graph(n=2)"

    def test_step_must_divide_horizon(self):
        """A step that does not divide T is rejected."""
        with pytest.raises(ParameterError):
            integrate(Model.REPELLING, TWO_NODES, 1.0, np.zeros(2), 1.0, 0.3)

    def test_non_finite_state_reports_time(self):
        """Overflow is reported with the time it happened."""
        with np.errstate(over='ignore', invalid='ignore'):
            with pytest.raises(NumericError) as info:
                integrate(Model.OPPOSING, TWO_NODES, 1e300, np.array([1e300, -1e300]), 2.0, 1.0)
        assert info.value.time == 1.0

    @pytest.mark.parametrize("n", [50, 500])
    def test_repelling_conserves_total_opinion(self, signed_block, n: int):
        """The sum of opinions is constant to 1e-9 relative over T=5."""
        lat = make_latents(n)
        graph = step_graphon(sample_adjacency(signed_block, lat, 1.0, 3))
        traj = integrate(Model.REPELLING, graph, 1.0 / n, sample_initial(linear_initial(), lat), 5.0, 0.01)
        totals = traj.states.sum(axis=1)
        assert np.max(np.abs(totals - totals[0])) <= 1e-9 * abs(totals[0])

    def test_fourth_order_step_halving(self, signed_block):
        """Successive step-halving differences shrink by about 16."""
        n = 200
        lat = make_latents(n)
        graph = step_graphon(sample_adjacency(signed_block, lat, 1.0, 8))
        g = sample_initial(sine_initial(1.0), lat)
        finals = [integrate(Model.REPELLING, graph, 1.0 / n, g, 2.0, h).states[-1] for h in (0.1, 0.05, 0.025)]
        ratio = np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2])
        assert 14.0 <= ratio <= 18.0

    def test_bounded_on_horizon(self, signed_block):
        """Opposing opinions stay finite on a signed block graph."""
        lat = make_latents(40)
        graph = step_graphon(sample_adjacency(signed_block, lat, 1.0, 2))
        traj = integrate(Model.OPPOSING, graph, 1 / 40, sample_initial(sine_initial(2.0), lat), 3.0, 0.01)
        assert np.all(np.isfinite(traj.states))


class TestSolveGraphon:
    """Tests for the Nystrom graphon solver."""

    def test_zero_kernel_keeps_initial_condition(self):
        """W = 0 keeps the initial condition and uses alpha = 1/M."""
        traj = solve_graphon(Model.REPELLING, constant_kernel(0.0), sine_initial(1.0), 1.0, 0.1, 20)
        assert np.all(traj.states == traj.states[0])
        assert traj.source == "graphon_grid(M=20)"
        assert traj.alpha == pytest.approx(1 / 20)

    def test_averaging_kernel_closed_form(self):
        """W = 1: the mean is conserved and deviations decay like exp(-t)."""
        M, T = 500, 5.0
        traj = solve_graphon(Model.REPELLING, constant_kernel(1.0), linear_initial(), T, 0.01, M)
        g = traj.states[0]
        expected = g.mean() + (g - g.mean()) * np.exp(-T)
        assert np.max(np.abs(traj.states[-1] - expected)) < 1e-9
        assert traj.states[-1].mean() == pytest.approx(0.5, abs=1e-12)
        # the worst deviation is 0.5 exp(-5) ~ 3.4e-3, not below 1e-3
        assert np.max(np.abs(traj.states[-1] - 0.5)) < 0.5 * np.exp(-T) + 1e-9

    def test_opposing_equals_repelling_on_nonnegative_kernels(self):
        """Nonnegative kernels give identical graphon solutions."""
        args = (constant_kernel(0.6), sine_initial(1.0), 1.0, 0.05, 16)
        repelling = solve_graphon(Model.REPELLING, *args)
        opposing = solve_graphon(Model.OPPOSING, *args)
        assert np.array_equal(repelling.states, opposing.states)

    def test_refinement_consistency(self):
        """Doubling M changes the final state by O(1/M)."""
        finals = {}
        for M in (32, 64, 128):
            traj = solve_graphon(Model.REPELLING, constant_kernel(0.5), linear_initial(), 1.0, 0.05, M)
            finals[M] = np.repeat(traj.states[-1], 128 // M)
        assert np.linalg.norm(finals[64] - finals[128]) < np.linalg.norm(finals[32] - finals[128])

    def test_unbounded_initial_condition_is_rejected(self):
        """Initial conditions with a pole are rejected."""
        g = InitialCondition(name="pole", evaluator=lambda x: 1.0 / x)
        with np.errstate(divide='ignore'):
            with pytest.raises(ParameterError):
                validate_initial(g)

    def test_invalid_resolution(self):
        """M must be positive."""
        with pytest.raises(ParameterError):
            solve_graphon(Model.REPELLING, constant_kernel(0.5), linear_initial(), 1.0, 0.1, 0)


class TestPicard:
    """Tests for the Picard fixed-point solver."""

    def test_agrees_with_rk4_on_two_nodes(self):
        """Picard matches RK4 on the two-node graph."""
        g = np.array([1.0, 0.0])
        picard = picard_solve(Model.REPELLING, TWO_NODES, 1.0, g, 1.0)
        rk4 = integrate(Model.REPELLING, TWO_NODES, 1.0, g, 1.0, 1e-3)
        assert np.max(np.abs(picard.states[-1] - rk4.states[-1])) < 1e-6
        assert picard.horizon == pytest.approx(1.0)

    @settings(max_examples=20, deadline=None)
    @given(
        st.integers(min_value=0, max_value=2 ** 32 - 1),
        st.integers(min_value=2, max_value=10),
        st.floats(min_value=0.1, max_value=1.0),
        st.sampled_from(list(Model)),
    )
    def test_agrees_with_rk4_on_random_instances(self, seed: int, n: int, T: float, model: Model):
        """Property: RK4 and Picard agree within 1e-6 on small signed instances."""
        k = grid_kernel(random_signed(seed, n))
        g = np.random.default_rng(seed + 1).uniform(-1.0, 1.0, size=n)
        h = T / 1000
        picard = picard_solve(model, k, 1.0 / n, g, T)
        rk4 = integrate(model, k, 1.0 / n, g, T, h)
        assert np.max(np.abs(picard.states[-1] - rk4.states[-1])) < 1e-6

    def test_zero_initial_condition_is_a_fixed_point(self):
        """Zero opinions stay zero."""
        k = grid_kernel(random_signed(4, 6))
        traj = picard_solve(Model.OPPOSING, k, 0.5, np.zeros(6), 1.0)
        assert np.all(traj.states == 0.0)

    def test_contraction(self):
        """Iterate deltas shrink by at least half on a window of length 1/(8 L)."""
        k = grid_kernel(random_signed(7, 8))
        alpha = 1 / 8
        lipschitz = alpha * 8 * np.max(np.abs(k.matrix))
        field = _vector_field(Model.REPELLING, k, alpha)
        _, deltas = picard_window(field, np.linspace(-1, 1, 8), 1 / (8 * lipschitz), 64, 200)
        for before, after in zip(deltas, deltas[1:]):
            if after > 1e-13:
                assert after <= 0.5 * before

    def test_non_convergence_reports_residual(self):
        """Too few iterations raise with the last residual."""
        field = _vector_field(Model.REPELLING, TWO_NODES, 1.0)
        with pytest.raises(NumericError) as info:
            picard_window(field, np.array([1.0, 0.0]), 0.1, 16, 2)
        assert info.value.residual > 0

    def test_zero_horizon(self):
        """T = 0 returns the initial state."""
        traj = picard_solve(Model.REPELLING, TWO_NODES, 1.0, np.array([1.0, 2.0]), 0.0)
        assert traj.states.shape == (1, 2)


class TestHelpers:
    """Tests for initial sampling and step selection."""

    def test_sample_initial_at_deterministic_latents(self):
        """g(x) = x at i/n."""
        g_n = sample_initial(linear_initial(), make_latents(4, LatentScheme.DETERMINISTIC))
        assert g_n.tolist() == [0.25, 0.5, 0.75, 1.0]

    def test_sample_initial_constant(self):
        """A constant profile at stochastic latents."""
        g_n = sample_initial(constant_initial(0.3), make_latents(5, LatentScheme.STOCHASTIC, 1))
        assert g_n.tolist() == [0.3] * 5

    def test_sample_initial_vector(self):
        """Node values are taken as given on n nodes and read as a step function otherwise."""
        g = vector_initial([0.1, -0.4, 0.7, 0.2])
        stochastic = make_latents(4, LatentScheme.STOCHASTIC, 3)
        assert sample_initial(g, stochastic).tolist() == [0.1, -0.4, 0.7, 0.2]
        assert sample_initial(g, make_latents(2)).tolist() == [-0.4, 0.2]

    def test_default_step(self):
        """h = min(1e-2, 0.1/L) with L = 4 alpha max row sum of |M|."""
        k = grid_kernel(-np.ones((10, 10)))
        assert default_step(k, 1.0) == pytest.approx(0.1 / 40)
        assert default_step(k, 1e-4) == 1e-2
        assert default_step(grid_kernel(np.zeros((2, 2))), 1.0) == 1e-2

    def test_snap_step_divides_horizon(self):
        """Snapped steps divide T and never grow."""
        h = snap_step(2.0, 0.03)
        assert h <= 0.03
        assert abs(round(2.0 / h) * h - 2.0) < 1e-12
        assert snap_step(1.0, 0.25) == 0.25
