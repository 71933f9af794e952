import numpy as np
import pytest

from hqcsim.dynamics import (CustomInteraction, HarmonicClassical,
                             HybridHamiltonian, LinearQCoupling,
                             ZeroClassical, ZeroInteraction)
from hqcsim.ensembles import (DensitySpec, GaussianClassical, HaarQuantum,
                              ParticleCloud, PointMassClassical,
                              PointMixtureQuantum, QuadraticFormQuantum,
                              sample, transport)
from hqcsim.errors import (DimensionMismatch, LowMass, UnsupportedHamiltonian)
from hqcsim.estimators import (ClassicalGrid, bin_state_histogram,
                               conditional_state, estimate_quantum_state,
                               frozen_classical_oracle, hermitian_propagator,
                               mixture_derivative_estimate, trace_distance,
                               unitary_oracle)
from hqcsim.geometry import to_coordinates

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def basis_point(j, d=2):
    c = np.zeros(d, dtype=complex)
    c[j] = 1.0
    return to_coordinates(c)


def frozen_hamiltonian(g=0.5):
    return HybridHamiltonian(ZeroClassical(1), 0.5 * SZ, LinearQCoupling(g, SX, 1))


class TestHistogram:
    def test_single_cell_occupancy(self):
        spec = DensitySpec(PointMassClassical([0.5], [0.0]),
                           PointMixtureQuantum([(basis_point(0), 1.0)]))
        cloud = sample(spec, 40, seed=1)
        grid = ClassicalGrid([(0.0, 1.0)], [4])
        hist = bin_state_histogram(cloud, grid)
        np.testing.assert_allclose(hist.cells[2], np.diag([1.0, 0.0]), atol=1e-15)
        for i in (0, 1, 3):
            assert np.abs(hist.cells[i]).max() == 0.0
        assert hist.total_weight_captured == pytest.approx(1.0)

    def test_traces_sum_to_captured_fraction(self):
        spec = DensitySpec(GaussianClassical([0.0], [0.0], 1.0, 1.0), HaarQuantum(2))
        cloud = sample(spec, 5000, seed=2)
        grid = ClassicalGrid([(-1.0, 1.0)], [8])
        hist = bin_state_histogram(cloud, grid)
        inside = (cloud.q[:, 0] >= -1.0) & (cloud.q[:, 0] < 1.0)
        expected = cloud.weights[inside].sum()
        traces = [hist.cell_trace(i) for i in range(8)]
        assert sum(traces) == pytest.approx(expected, abs=1e-12)
        assert hist.total_weight_captured == pytest.approx(expected, abs=1e-12)

    def test_haar_cells_are_maximally_mixed(self):
        spec = DensitySpec(GaussianClassical([0.0], [0.0], 1.0, 1.0), HaarQuantum(2))
        cloud = sample(spec, 20_000, seed=3)
        grid = ClassicalGrid([(-1.0, 1.0)], [4])
        hist = bin_state_histogram(cloud, grid)
        flat_idx, inside = grid.locate(cloud.q, cloud.p)
        for i in range(4):
            n_cell = int(((flat_idx == i) & inside).sum())
            if n_cell == 0:
                continue
            cond = conditional_state(hist, i).matrix
            assert np.linalg.norm(cond - np.eye(2) / 2, ord=2) < 3 / np.sqrt(n_cell)

    def test_joint_grid_covers_momenta(self):
        spec = DensitySpec(GaussianClassical([0.0], [0.0], 0.5, 0.5), HaarQuantum(2))
        cloud = sample(spec, 2000, seed=4)
        grid = ClassicalGrid([(-1.0, 1.0)], [3], [(-1.0, 1.0)], [5])
        assert grid.n_cells == 15
        hist = bin_state_histogram(cloud, grid)
        total = sum(hist.cell_trace((i, j)) for i in range(3) for j in range(5))
        assert total == pytest.approx(hist.total_weight_captured, abs=1e-12)


class TestConditionalState:
    def test_normalizes_cell_block(self):
        grid = ClassicalGrid([(0.0, 1.0)], [1])
        cells = np.array([[[0.3, 0.0], [0.0, 0.0]]], dtype=complex)
        from hqcsim.estimators import StateHistogram
        hist = StateHistogram(grid, cells, np.zeros((2, 2), complex), 0.0, 100)
        cond = conditional_state(hist, 0)
        np.testing.assert_allclose(cond.matrix, np.diag([1.0, 0.0]), atol=1e-15)

    def test_empty_cell_rejected(self):
        spec = DensitySpec(PointMassClassical([0.5], [0.0]),
                           PointMixtureQuantum([(basis_point(0), 1.0)]))
        cloud = sample(spec, 100, seed=5)
        grid = ClassicalGrid([(0.0, 2.0)], [2])
        hist = bin_state_histogram(cloud, grid)
        with pytest.raises(LowMass):
            conditional_state(hist, 1)

    def test_frozen_sector_matches_per_position_unitary(self):
        # H_c = 0 and V(q) freeze every q; the conditional state in a cell
        # follows the unitary generated at that position
        h = frozen_hamiltonian()
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        n = 10_000
        t = 2.0
        cloud = transport(sample(spec, n, seed=6), h, t, 1e-3)
        grid = ClassicalGrid([(0.4, 1.6)], [12])
        hist = bin_state_histogram(cloud, grid)
        flat_idx, inside = grid.locate(cloud.q, cloud.p)
        width = 1.2 / 12
        checked = 0
        for i in range(12):
            n_cell = int(((flat_idx == i) & inside).sum())
            if n_cell < 100:
                continue
            q_star = grid.cell_center((i,))[0]
            u = hermitian_propagator(h.h_q + h.v_int.operator(np.array([q_star]),
                                                              np.zeros(1)), t)
            oracle = u @ (np.eye(2) / 2) @ u.conj().T
            cond = conditional_state(hist, i).matrix
            bound = 3 / np.sqrt(n_cell) + t * 0.5 * width
            assert np.linalg.norm(cond - oracle, ord=2) < bound
            checked += 1
        assert checked >= 6


class TestQuantumStateEstimate:
    def test_pure_cloud(self):
        spec = DensitySpec(PointMassClassical([0.0], [0.0]),
                           PointMixtureQuantum([(basis_point(0), 1.0)]))
        rho = estimate_quantum_state(sample(spec, 10, seed=7))
        np.testing.assert_allclose(rho.matrix, np.diag([1.0, 0.0]), atol=1e-15)

    def test_equal_mixture_is_exactly_mixed(self):
        c = np.vstack([np.tile([1, 0], (5, 1)), np.tile([0, 1], (5, 1))]).astype(complex)
        cloud = ParticleCloud(np.zeros((10, 1)), np.zeros((10, 1)), c,
                              np.full(10, 0.1))
        rho = estimate_quantum_state(cloud)
        np.testing.assert_allclose(rho.matrix, np.eye(2) / 2, atol=1e-16)

    def test_haar_cloud_close_to_mixed(self):
        spec = DensitySpec(PointMassClassical([0.0], [0.0]), HaarQuantum(2))
        rho = estimate_quantum_state(sample(spec, 100_000, seed=8))
        assert np.linalg.norm(rho.matrix - np.eye(2) / 2, ord=2) < 0.01


class TestTraceDistance:
    def test_identical_states(self):
        assert trace_distance(np.eye(2) / 2, np.eye(2) / 2) == 0.0

    def test_orthogonal_pure_states(self):
        assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)

    def test_pure_vs_mixed(self):
        assert trace_distance(np.diag([1.0, 0.0]), np.eye(2) / 2) == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            trace_distance(np.eye(2) / 2, np.eye(3) / 3)


class TestMixtureDerivative:
    def test_stationary_mixture_of_eigenstates(self):
        h = HybridHamiltonian(HarmonicClassical(1, 1, 1), 0.5 * SZ, ZeroInteraction(2, 1))
        spec = DensitySpec(GaussianClassical([0.0], [0.0], 1.0, 1.0),
                           PointMixtureQuantum([(basis_point(0), 0.3),
                                                (basis_point(1), 0.7)]))
        rhs = mixture_derivative_estimate(sample(spec, 500, seed=9), h)
        assert np.abs(rhs).max() < 1e-12

    def test_reduces_to_commutator_without_coupling(self):
        h = HybridHamiltonian(HarmonicClassical(1, 1, 1), 0.5 * SZ, ZeroInteraction(2, 1))
        spec = DensitySpec(GaussianClassical([0.0], [0.0], 1.0, 1.0), HaarQuantum(2))
        cloud = sample(spec, 2000, seed=10)
        rho = estimate_quantum_state(cloud).matrix
        expected = (h.h_q @ rho - rho @ h.h_q) / 1j
        np.testing.assert_allclose(mixture_derivative_estimate(cloud, h),
                                   expected, atol=1e-14)

    def test_matches_centered_difference(self):
        h = HybridHamiltonian(HarmonicClassical(1, 1, 1), 0.5 * SZ,
                              LinearQCoupling(0.5, SX, 1))
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        n = 5000
        delta = 1e-2
        minus = transport(sample(spec, n, seed=11), h, 1.0 - delta, 1e-3)
        center = transport(minus, h, delta, 1e-3)
        plus = transport(center, h, delta, 1e-3)
        fd = (estimate_quantum_state(plus).matrix
              - estimate_quantum_state(minus).matrix) / (2 * delta)
        rhs = mixture_derivative_estimate(center, h)
        assert np.linalg.norm(fd - rhs, ord=2) < 5 * (3 / np.sqrt(n) + delta**2)
        assert abs(np.trace(rhs).real) < 1e-10
        np.testing.assert_allclose(rhs, rhs.conj().T, atol=1e-14)

    def test_generic_interaction_agrees_with_closed_form(self):
        lin = LinearQCoupling(0.4, SX, 1)
        gen = CustomInteraction(
            2, 1,
            operator=lambda q, p: 0.4 * q[0] * SX,
            grad_q=lambda q, p: np.stack([0.4 * SX]),
            grad_p=lambda q, p: np.stack([np.zeros((2, 2), complex)]))
        h_lin = HybridHamiltonian(HarmonicClassical(1, 1, 1), 0.5 * SZ, lin)
        h_gen = HybridHamiltonian(HarmonicClassical(1, 1, 1), 0.5 * SZ, gen)
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        cloud = sample(spec, 300, seed=12)
        np.testing.assert_allclose(mixture_derivative_estimate(cloud, h_lin),
                                   mixture_derivative_estimate(cloud, h_gen),
                                   atol=1e-12)


class TestFrozenClassicalOracle:
    def test_no_coupling_reduces_to_unitary_conjugation(self):
        h = HybridHamiltonian(ZeroClassical(1), 0.5 * SZ, ZeroInteraction(2, 1))
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        got = frozen_classical_oracle(spec, h, T=3.0, quad_points=32)
        want = unitary_oracle(np.eye(2) / 2, h.h_q, 3.0)
        np.testing.assert_allclose(got.matrix, want.matrix, atol=1e-12)

    def test_point_mass_is_single_node(self):
        h = frozen_hamiltonian()
        spec = DensitySpec(PointMassClassical([0.7], [0.0]),
                           PointMixtureQuantum([(basis_point(0), 1.0)]))
        got = frozen_classical_oracle(spec, h, T=2.0)
        u = hermitian_propagator(h.h_q + 0.5 * 0.7 * SX, 2.0)
        want = u @ np.diag([1.0, 0.0]).astype(complex) @ u.conj().T
        np.testing.assert_allclose(got.matrix, want, atol=1e-13)

    def test_quadrature_convergence(self):
        h = frozen_hamiltonian()
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        a = frozen_classical_oracle(spec, h, T=5.0, quad_points=64)
        b = frozen_classical_oracle(spec, h, T=5.0, quad_points=128)
        assert np.abs(a.matrix - b.matrix).max() < 1e-10

    def test_rejects_live_classical_sector(self):
        h = HybridHamiltonian(HarmonicClassical(1, 1, 1), 0.5 * SZ,
                              LinearQCoupling(0.5, SX, 1))
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        with pytest.raises(UnsupportedHamiltonian):
            frozen_classical_oracle(spec, h, T=1.0)

    def test_rejects_momentum_dependent_coupling(self):
        v = CustomInteraction(
            2, 1,
            operator=lambda q, p: 0.5 * p[0] * SX,
            grad_q=lambda q, p: np.stack([np.zeros((2, 2), complex)]),
            grad_p=lambda q, p: np.stack([0.5 * SX]))
        h = HybridHamiltonian(ZeroClassical(1), 0.5 * SZ, v)
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        with pytest.raises(UnsupportedHamiltonian):
            frozen_classical_oracle(spec, h, T=1.0)

    def test_quadratic_factor_conditional(self):
        h = frozen_hamiltonian()
        f = np.eye(2, dtype=complex) + 0.4 * SZ
        spec = DensitySpec(PointMassClassical([0.5], [0.0]),
                           QuadraticFormQuantum(2, lambda cp: f))
        got = frozen_classical_oracle(spec, h, T=1.0)
        u = hermitian_propagator(h.h_q + 0.25 * SX, 1.0)
        want = u @ (f / 2) @ u.conj().T
        np.testing.assert_allclose(got.matrix, want, atol=1e-13)


class TestUnitaryOracle:
    def test_mixed_state_is_fixed_point(self):
        rng = np.random.default_rng(13)
        h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        h = (h + h.conj().T) / 2
        out = unitary_oracle(np.eye(3) / 3, h, 4.2)
        np.testing.assert_allclose(out.matrix, np.eye(3) / 3, atol=1e-14)

    def test_half_turn_precession(self):
        plus = np.full((2, 2), 0.5, dtype=complex)
        minus = np.array([[0.5, -0.5], [-0.5, 0.5]], dtype=complex)
        out = unitary_oracle(plus, SZ / 2, np.pi)
        np.testing.assert_allclose(out.matrix, minus, atol=1e-14)

    def test_spectrum_invariant(self):
        rho = np.diag([0.6, 0.3, 0.1]).astype(complex)
        rng = np.random.default_rng(14)
        h = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        h = (h + h.conj().T) / 2
        out = unitary_oracle(rho, h, 2.7)
        np.testing.assert_allclose(out.eigenvalues(), [0.1, 0.3, 0.6], atol=1e-12)


class TestEstimatorIdentity:
    def test_cells_plus_remainder_equals_global(self):
        h = HybridHamiltonian(HarmonicClassical(1, 1, 1), 0.5 * SZ,
                              LinearQCoupling(0.5, SX, 1))
        spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2), HaarQuantum(2))
        cloud = transport(sample(spec, 4000, seed=15), h, 1.0, 1e-3)
        grid = ClassicalGrid([(0.3, 1.1)], [7])  # deliberately partial cover
        hist = bin_state_histogram(cloud, grid)
        rho = estimate_quantum_state(cloud).matrix
        assert hist.total_weight_captured < 1.0
        assert np.abs(hist.cell_sum() + hist.outside - rho).max() < 1e-12
