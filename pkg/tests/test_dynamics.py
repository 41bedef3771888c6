"""
Tests for consensus models, integration and transition factors.
"""

import math
import unittest

import numpy as np
from scipy.linalg import expm

from hilbert_consensus import (
    AnimalGroupModel,
    Box,
    CuckerSmaleVelocityModel,
    CustomSwitchingModel,
    DimensionMismatchError,
    DomainError,
    GridMismatchError,
    HegselmannKrauseModel,
    KuramotoModel,
    LTVModel,
    MetzlerViolationError,
    NotCertifiableError,
    ParameterError,
    ShiftedModel,
    StepSizeError,
    SwitchingSignal,
    WeightedDigraph,
    evaluate_model,
    factorize_transition,
    integrate_positions,
    internal_dynamics_transform,
    lower_bound_transition,
    shift_to_positive,
    simulate,
    step,
    time_grid,
)
from hilbert_consensus.dynamics import sinc
from test_fixtures import (
    FIG1_MATRIX,
    assert_metzler,
    assert_row_stochastic,
    create_chain_graph,
    create_fig1_model,
    create_fig1_trajectory,
    create_synthetic_trajectory,
)


class TestTimeGrid(unittest.TestCase):
    """Test integration grids."""

    def test_uniform_grid(self):
        """Test equal steps when h divides the horizon."""
        np.testing.assert_allclose(time_grid(0.0, 1.0, 0.25), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_breakpoints_on_grid(self):
        """Test that breakpoints become grid points exactly."""
        grid = time_grid(0.0, 1.0, 0.25, breakpoints=[0.3, 5.0])
        self.assertIn(0.3, grid.tolist())
        self.assertEqual(grid[-1], 1.0)
        self.assertTrue(np.all(np.diff(grid) <= 0.25 + 1e-12))

    def test_invalid_arguments(self):
        """Test that empty horizons and nonpositive steps raise."""
        with self.assertRaises(ParameterError):
            time_grid(1.0, 1.0, 0.1)
        with self.assertRaises(ParameterError):
            time_grid(0.0, 1.0, 0.0)


class TestModels(unittest.TestCase):
    """Test A(t, x) of each model kind."""

    def test_ltv_from_graph(self):
        """Test that a graph payload yields its Laplacian form."""
        model = LTVModel(create_chain_graph(3))
        A = evaluate_model(model, 0.0, [1.0, 2.0, 3.0])
        assert_metzler(A)
        self.assertEqual(A[0, 1], 1.0)

    def test_ltv_switching(self):
        """Test that the payload active at t is used, left-closed."""
        first = WeightedDigraph.from_edges(2, {(0, 1): 1.0})
        second = WeightedDigraph.from_edges(2, {(1, 0): 1.0})
        model = LTVModel(SwitchingSignal([0.0, 1.0, 2.0], (first, second)))
        self.assertEqual(model.matrix(0.5, np.ones(2))[0, 1], 1.0)
        self.assertEqual(model.matrix(1.0, np.ones(2))[1, 0], 1.0)
        np.testing.assert_array_equal(model.breakpoints(0.0, 2.0), [1.0])

    def test_strict_rejects_non_metzler(self):
        """Test that strict evaluation raises on a negative coupling."""
        model = LTVModel(np.array([[-1.0, 1.0], [-0.5, 0.5]]))
        with self.assertRaises(MetzlerViolationError):
            evaluate_model(model, 0.0, [1.0, 2.0])

    def test_permissive_clamps_with_warning(self):
        """Test that permissive evaluation clamps negative couplings and logs."""
        model = LTVModel(np.array([[-1.0, 1.0], [-0.5, 0.5]]))
        with self.assertLogs("hilbert_consensus.dynamics", level="WARNING"):
            A = evaluate_model(model, 0.0, [1.0, 2.0], strict=False)
        np.testing.assert_array_equal(A, [[-1.0, 1.0], [0.0, 0.0]])

    def test_dimension_mismatch(self):
        """Test that a state of the wrong size raises."""
        with self.assertRaises(DimensionMismatchError):
            evaluate_model(create_fig1_model(), 0.0, [1.0, 2.0, 3.0])

    def test_kuramoto_coupling(self):
        """Test A_ij = a_ij sinc(x_j - x_i) and the phase-spread domain."""
        model = KuramotoModel(WeightedDigraph.from_edges(2, {(0, 1): 2.0}))
        A = evaluate_model(model, 0.0, [0.0, 0.5])
        self.assertAlmostEqual(A[0, 1], 2.0 * math.sin(0.5) / 0.5, places=12)
        self.assertAlmostEqual(A[0, 0], -A[0, 1], places=15)
        with self.assertRaises(DomainError):
            evaluate_model(model, 0.0, [0.0, math.pi])

    def test_sinc(self):
        """Test sinc at zero and near zero."""
        self.assertEqual(float(sinc(0.0)), 1.0)
        self.assertAlmostEqual(float(sinc(1e-6)), 1.0, places=12)
        self.assertAlmostEqual(float(sinc(1.0)), math.sin(1.0), places=12)

    def test_cucker_smale_velocity(self):
        """Test the default kernel gives a Metzler matrix with positive couplings."""
        model = CuckerSmaleVelocityModel(3, gain=1.0)
        A = evaluate_model(model, 0.0, [0.0, 1.0, -2.0])
        assert_metzler(A)
        off = A - np.diag(np.diag(A))
        self.assertTrue(np.all(off[~np.eye(3, dtype=bool)] > 0))
        self.assertAlmostEqual(A[0, 1], 1.0 / 3.0 / math.sqrt(2.0), places=12)

    def test_hegselmann_krause_closed_radius(self):
        """Test that agents exactly at the radius are linked."""
        model = HegselmannKrauseModel(3, radius=1.0, gain=0.5)
        A = evaluate_model(model, 0.0, [0.0, 1.0, 3.0])
        self.assertEqual(A[0, 1], 0.5)
        self.assertEqual(A[1, 2], 0.0)
        np.testing.assert_array_equal(A[2], [0.0, 0.0, 0.0])

    def test_hegselmann_krause_schedule(self):
        """Test a switching radius and its breakpoints."""
        model = HegselmannKrauseModel(2, SwitchingSignal([0.0, 1.0, 2.0], (2.0, 0.5)))
        self.assertEqual(model.radius_at(0.5), 2.0)
        self.assertEqual(model.radius_at(1.5), 0.5)
        self.assertEqual(evaluate_model(model, 1.5, [0.0, 1.0])[0, 1], 0.0)
        np.testing.assert_array_equal(model.breakpoints(0.0, 2.0), [1.0])

    def test_animal_group_repulsion_is_not_metzler(self):
        """Test that repulsion simulates but refuses certification."""
        model = AnimalGroupModel(3, attraction_radius=5.0, repulsion_radius=0.5, repulsion_strength=1.0)
        self.assertFalse(model.metzler)
        A = evaluate_model(model, 0.0, [0.0, 0.2, 2.0])
        self.assertLess(A[0, 1], 0.0)
        self.assertAlmostEqual(float(np.abs(A.sum(axis=1)).max()), 0.0, places=12)
        traj = simulate(model, [0.0, 0.2, 2.0], 0.0, 0.1, 0.01)
        with self.assertRaises(NotCertifiableError):
            factorize_transition(model, 0.0, 0.1, traj.states[0], 10)

    def test_animal_group_attraction_only(self):
        """Test that pure attraction stays Metzler."""
        model = AnimalGroupModel(3, attraction_radius=2.0)
        self.assertTrue(model.metzler)
        assert_metzler(evaluate_model(model, 0.0, [0.0, 1.0, 5.0]))

    def test_custom_switching(self):
        """Test that the signal indexes the family."""
        family = [FIG1_MATRIX, FIG1_MATRIX[::-1, ::-1]]
        model = CustomSwitchingModel(family, SwitchingSignal([0.0, 1.0, 2.0], (0, 1)))
        self.assertEqual(model.n, 2)
        np.testing.assert_array_equal(model.matrix(1.5, np.ones(2)), family[1])

    def test_shifted_model(self):
        """Test that the shifted model reads the base model at y - alpha."""
        base = HegselmannKrauseModel(2, radius=1.0)
        shifted = ShiftedModel(base, 10.0)
        y = np.array([10.0, 10.5])
        np.testing.assert_array_equal(shifted.matrix(0.0, y), base.matrix(0.0, y - 10.0))
        self.assertEqual(shifted.kind, base.kind)


class TestIntegration(unittest.TestCase):
    """Test the Euler and RK4 integrators."""

    def test_euler_closed_form(self):
        """Test x2 - 1 = (1 - h)^N for the two-agent system."""
        traj = create_fig1_trajectory(h=0.01, t_end=10.0)
        self.assertEqual(len(traj), 1001)
        self.assertEqual(traj.states[-1, 0], 1.0)
        expected = float(np.prod(1.0 - np.diff(traj.times)))
        self.assertAlmostEqual((traj.states[-1, 1] - 1.0) / expected, 1.0, places=9)

    def test_euler_stays_in_hull(self):
        """Test that states never leave [min x0, max x0]."""
        traj = simulate(LTVModel(create_chain_graph(4)), [1.0, -2.0, 3.0, 0.5], 0.0, 5.0, 0.1)
        self.assertTrue(np.all(traj.states >= -2.0))
        self.assertTrue(np.all(traj.states <= 3.0))
        self.assertTrue(np.all(np.diff(traj.spread) <= 1e-12))

    def test_step_size_error(self):
        """Test that h*lambda > 1 raises in strict mode and warns otherwise."""
        model = LTVModel(np.array([[-200.0, 200.0], [0.0, 0.0]]))
        with self.assertRaises(StepSizeError):
            step(model, 0.0, [1.0, 2.0], 0.01)
        with self.assertLogs("hilbert_consensus.dynamics", level="WARNING"):
            step(model, 0.0, [1.0, 2.0], 0.01, strict=False)

    def test_euler_first_order(self):
        """Test that halving h halves the Euler error from h = 2^-4 down to 2^-10."""
        exact = 1.0 + math.exp(-1.0)
        errors = [abs(create_fig1_trajectory(h=2.0 ** -k, t_end=1.0).states[-1, 1] - exact) for k in range(4, 11)]
        for coarse, fine in zip(errors, errors[1:]):
            self.assertAlmostEqual(coarse / fine, 2.0, delta=0.2)

    def test_rk4_fourth_order(self):
        """Test that halving h divides the RK4 error by about 16 above the roundoff floor."""
        exact = 1.0 + math.exp(-1.0)
        errors = [abs(create_fig1_trajectory(h=2.0 ** -k, t_end=1.0, scheme="rk4").states[-1, 1] - exact)
                  for k in range(4, 8)]
        for coarse, fine in zip(errors, errors[1:]):
            self.assertAlmostEqual(coarse / fine, 16.0, delta=3.2)

    def test_diagnostics(self):
        """Test the per-sample diagnostics of a trajectory."""
        traj = create_fig1_trajectory()
        self.assertAlmostEqual(traj.hilbert_to_ones[0], math.log(2.0), places=12)
        self.assertEqual(traj.spread[0], 1.0)
        self.assertEqual(traj.scheme, "euler")
        self.assertTrue(np.all(np.diff(traj.hilbert_to_ones) < 0))

    def test_extra_breakpoints(self):
        """Test that extra breakpoints land on the simulation grid."""
        traj = simulate(create_fig1_model(), [1.0, 2.0], 0.0, 1.0, 0.3, extra_breakpoints=[0.5])
        self.assertIn(0.5, traj.times.tolist())

    def test_trajectory_validation(self):
        """Test that non-increasing times and single agents raise."""
        with self.assertRaises(ParameterError):
            create_synthetic_trajectory([0.0, 0.0], [[1.0, 2.0], [1.0, 2.0]])
        with self.assertRaises(DimensionMismatchError):
            create_synthetic_trajectory([0.0, 1.0], [[1.0], [1.0]])


class TestTransitionFactor(unittest.TestCase):
    """Test the factorization phi(t_k1, t_k, x) = P x."""

    def setUp(self):
        self.model = create_fig1_model()
        self.traj = create_fig1_trajectory(h=0.01, t_end=1.0)
        self.factor = factorize_transition(self.model, 0.0, 1.0, self.traj.states[0], 100, grid=self.traj.times)

    def test_row_stochastic(self):
        """Test that P is nonnegative with unit row sums."""
        assert_row_stochastic(self.factor.P)

    def test_endpoint_matches_simulation(self):
        """Test bit-identical agreement with simulate on the same grid."""
        np.testing.assert_array_equal(self.factor.endpoint, self.traj.states[-1])
        np.testing.assert_allclose(self.factor.P @ self.traj.states[0], self.traj.states[-1], rtol=1e-13)

    def test_default_grid_matches(self):
        """Test that N steps reproduce the simulation grid of step (t_k1 - t_k)/N."""
        factor = factorize_transition(self.model, 0.0, 1.0, self.traj.states[0], 100)
        np.testing.assert_array_equal(factor.times, self.traj.times)

    def test_constant_matrix_converges_to_exponential(self):
        """Test that P approaches expm(A T) at first order in h."""
        exact = expm(FIG1_MATRIX)
        errors = []
        for N in (200, 400):
            factor = factorize_transition(self.model, 0.0, 1.0, [1.0, 2.0], N)
            errors.append(float(np.abs(factor.P - exact).max()))
        self.assertLess(errors[0], 1.0 / 200)
        self.assertAlmostEqual(errors[0] / errors[1], 2.0, delta=0.1)

    def test_exponential_error_matches_leading_term(self):
        """Test |P - expm(A)| = e^-1 h/2 to leading order, so 1e-6 needs N >= 1.84e5."""
        N = 10_000
        factor = factorize_transition(self.model, 0.0, 1.0, [1.0, 2.0], N)
        error = float(np.abs(factor.P - expm(FIG1_MATRIX)).max())
        leading = math.exp(-1.0) / (2 * N)
        self.assertAlmostEqual(error / leading, 1.0, delta=0.01)

    def test_lower_bound_holds(self):
        """Test P >= discount * (I + integral of A-bar)."""
        self.assertTrue(lower_bound_transition(self.factor, self.factor.accumulated, self.factor.lambda_shift,
                                               grid=self.traj.times))
        self.assertAlmostEqual(self.factor.lambda_shift, 1.01, places=12)
        self.assertAlmostEqual(self.factor.accumulated.weights[1, 0], 1.0, places=12)

    def test_grid_mismatch(self):
        """Test that bounds computed on another grid are refused."""
        with self.assertRaises(GridMismatchError):
            lower_bound_transition(self.factor, self.factor.accumulated, 1.01, grid=np.linspace(0.0, 1.0, 51))
        with self.assertRaises(GridMismatchError):
            factorize_transition(self.model, 0.0, 1.0, [1.0, 2.0], 10, grid=np.linspace(0.1, 1.0, 10))

    def test_step_size_bound(self):
        """Test that h*lambda >= 1 is refused for transition factors."""
        with self.assertRaises(StepSizeError):
            factorize_transition(self.model, 0.0, 1.0, [1.0, 2.0], 1)

    def test_discount(self):
        """Test the Euler and continuous discounts."""
        self.assertAlmostEqual(self.factor.discount(1.0, continuous=True), math.exp(-1.0), places=14)
        self.assertLess(self.factor.discount(1.0), math.exp(-1.0))


class TestTransforms(unittest.TestCase):
    """Test the internal-dynamics transform, positions and shifting."""

    def test_internal_dynamics_removes_drift(self):
        """Test that a common drift b = omega is removed."""
        times = np.linspace(0.0, 2.0, 21)
        x0 = np.array([0.1, 0.4, 0.9])
        states = x0 + 3.0 * times[:, None]
        y = internal_dynamics_transform(0.0, 3.0, create_synthetic_trajectory(times, states))
        np.testing.assert_allclose(y.states, np.tile(x0, (21, 1)), atol=1e-12)

    def test_internal_dynamics_growth(self):
        """Test that spreads scale by exp(integral of a)."""
        times = np.linspace(0.0, 1.0, 11)
        states = np.tile([1.0, 2.0], (11, 1)) * np.exp(-0.5 * times)[:, None]
        y = internal_dynamics_transform(0.5, 0.0, create_synthetic_trajectory(times, states))
        np.testing.assert_allclose(y.spread, 1.0, rtol=1e-3)

    def test_integrate_positions(self):
        """Test that constant velocities give linear positions."""
        times = np.linspace(0.0, 1.0, 11)
        velocities = create_synthetic_trajectory(times, np.tile([1.0, -2.0], (11, 1)))
        positions = integrate_positions(velocities, [0.0, 5.0])
        np.testing.assert_allclose(positions[-1], [1.0, 3.0], atol=1e-12)

    def test_shift_to_positive(self):
        """Test alpha = margin + max(0, -min x)."""
        alpha, shifted = shift_to_positive([-1.0, 2.0], 1.0)
        self.assertEqual(alpha, 2.0)
        np.testing.assert_array_equal(shifted, [1.0, 4.0])
        alpha, _ = shift_to_positive([3.0, 4.0], 0.5)
        self.assertEqual(alpha, 0.5)
        with self.assertRaises(ParameterError):
            shift_to_positive([1.0, 2.0], 0.0)

    def test_shift_box(self):
        """Test shifting a box of initial states."""
        alpha, box = shift_to_positive(Box(-2.0, 1.0, agents=3), 1.0)
        self.assertEqual(alpha, 3.0)
        low, high = box.bounds()
        np.testing.assert_array_equal(low, [1.0, 1.0, 1.0])
        np.testing.assert_array_equal(high, [4.0, 4.0, 4.0])

    def test_box_grid(self):
        """Test grid points of a box and the sampled fallback."""
        box = Box(0.0, 1.0, agents=2)
        self.assertEqual(box.grid_points(3, np.random.default_rng(0)).shape, (9, 2))
        self.assertEqual(box.grid_points(10, np.random.default_rng(0), max_points=50).shape, (50, 2))


if __name__ == "__main__":
    unittest.main()
