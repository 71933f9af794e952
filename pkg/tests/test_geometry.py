import numpy as np
import pytest

from hqcsim.errors import (DimensionMismatch, InvalidDensityMatrix,
                           NonUnitVector, NotHermitian)
from hqcsim.geometry import (QuantumDensityMatrix, QuantumPoint, expectation,
                             expectation_gradient, from_coordinates, projector,
                             quantum_poisson, require_hermitian, to_coordinates)

from conftest import SQRT2, random_hermitian, random_unit


class TestChart:
    def test_basis_vector(self):
        pt = to_coordinates([1, 0])
        np.testing.assert_allclose(pt.x, [SQRT2, 0])
        np.testing.assert_allclose(pt.y, [0, 0])

    def test_imaginary_component(self):
        pt = to_coordinates([0, 1j])
        np.testing.assert_allclose(pt.x, [0, 0])
        np.testing.assert_allclose(pt.y, [0, SQRT2])

    def test_mixed_phases(self):
        pt = to_coordinates([(1 + 1j) / 2, (1 - 1j) / 2])
        np.testing.assert_allclose(pt.x, [SQRT2 / 2, SQRT2 / 2])
        np.testing.assert_allclose(pt.y, [SQRT2 / 2, -SQRT2 / 2])

    def test_inverse_basis(self):
        pt = QuantumPoint([SQRT2, 0], [0, 0])
        np.testing.assert_allclose(from_coordinates(pt), [1, 0])

    def test_inverse_real_pair(self):
        pt = QuantumPoint([1, 1], [0, 0])
        np.testing.assert_allclose(from_coordinates(pt), [1 / SQRT2, 1 / SQRT2])

    def test_round_trip_random(self):
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(100):
            c = random_unit(rng, int(rng.integers(2, 9)))
            worst = max(worst, np.abs(from_coordinates(to_coordinates(c)) - c).max())
        assert worst < 1e-12

    def test_rejects_non_unit(self):
        with pytest.raises(NonUnitVector):
            to_coordinates([1, 1])

    def test_rejects_dimension_one(self):
        with pytest.raises(DimensionMismatch):
            QuantumPoint([SQRT2], [0.0])


class TestExpectation:
    def test_eigenvector_z(self, paulis):
        assert expectation(paulis["z"], to_coordinates([1, 0])) == pytest.approx(1.0)

    def test_eigenvector_x(self, paulis):
        plus = to_coordinates(np.array([1, 1]) / SQRT2)
        assert expectation(paulis["x"], plus) == pytest.approx(1.0)

    def test_symmetry_zero(self, paulis):
        plus = to_coordinates(np.array([1, 1]) / SQRT2)
        assert expectation(paulis["z"], plus) == pytest.approx(0.0, abs=1e-15)

    def test_dimension_mismatch(self, paulis):
        pt = to_coordinates([1, 0, 0])
        with pytest.raises(DimensionMismatch):
            expectation(paulis["z"], pt)

    def test_always_real(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            d = int(rng.integers(2, 6))
            a = random_hermitian(rng, d)
            c = random_unit(rng, d)
            assert abs(np.vdot(c, a @ c).imag) < 1e-12


class TestProjector:
    def test_basis_projector(self):
        p = projector(to_coordinates([1, 0]))
        np.testing.assert_allclose(p.matrix, np.diag([1.0, 0.0]))

    def test_plus_projector(self):
        p = projector(to_coordinates(np.array([1, 1]) / SQRT2))
        np.testing.assert_allclose(p.matrix, np.full((2, 2), 0.5), atol=1e-15)

    def test_rank_one(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            p = projector(to_coordinates(random_unit(rng, 4))).matrix
            assert abs(np.trace(p @ p).real - 1.0) < 1e-10


class TestGradient:
    def test_matches_finite_differences(self):
        # independent oracle: central differences of the expectation field
        rng = np.random.default_rng(11)
        step = 1e-5
        for _ in range(20):
            d = int(rng.integers(2, 5))
            a = random_hermitian(rng, d)
            pt = to_coordinates(random_unit(rng, d))
            gx, gy = expectation_gradient(a, pt)

            def f(x, y):
                c = (x + 1j * y) / SQRT2
                return np.vdot(c, a @ c).real

            for j in range(d):
                dx = np.zeros(d); dx[j] = step
                fd_x = (f(pt.x + dx, pt.y) - f(pt.x - dx, pt.y)) / (2 * step)
                fd_y = (f(pt.x, pt.y + dx) - f(pt.x, pt.y - dx)) / (2 * step)
                assert abs(fd_x - gx[j]) < 1e-8
                assert abs(fd_y - gy[j]) < 1e-8

    def test_identity_gives_coordinates(self):
        rng = np.random.default_rng(12)
        pt = to_coordinates(random_unit(rng, 3))
        gx, gy = expectation_gradient(np.eye(3), pt)
        np.testing.assert_allclose(gx, pt.x, atol=1e-14)
        np.testing.assert_allclose(gy, pt.y, atol=1e-14)

    def test_pauli_z_at_basis(self, paulis):
        gx, gy = expectation_gradient(paulis["z"], to_coordinates([1, 0]))
        np.testing.assert_allclose(gx, [SQRT2, 0], atol=1e-15)
        np.testing.assert_allclose(gy, [0, 0], atol=1e-15)


class TestPoissonBracket:
    def test_pauli_xy_bracket(self, paulis):
        pt = to_coordinates([1, 0])
        assert quantum_poisson(paulis["x"], paulis["y"], pt, hbar=1.0) == pytest.approx(2.0)

    def test_antisymmetry_diagonal(self, paulis):
        rng = np.random.default_rng(5)
        for _ in range(5):
            pt = to_coordinates(random_unit(rng, 2))
            assert quantum_poisson(paulis["x"], paulis["x"], pt) == pytest.approx(0.0, abs=1e-14)

    def test_identity_commutes(self, paulis):
        rng = np.random.default_rng(6)
        pt = to_coordinates(random_unit(rng, 2))
        assert quantum_poisson(paulis["i"], paulis["y"], pt) == pytest.approx(0.0, abs=1e-14)

    def test_commutator_identity(self):
        # bracket of two expectation fields = expectation of [A,B]/(i hbar)
        rng = np.random.default_rng(8)
        hbar = 0.7
        worst = 0.0
        for _ in range(60):
            d = int(rng.integers(2, 5))
            a = random_hermitian(rng, d)
            b = random_hermitian(rng, d)
            pt = to_coordinates(random_unit(rng, d))
            lhs = quantum_poisson(a, b, pt, hbar=hbar)
            rhs = expectation((a @ b - b @ a) / (1j * hbar), pt)
            worst = max(worst, abs(lhs - rhs))
        assert worst < 1e-9

    def test_global_phase_invariance(self, paulis):
        rng = np.random.default_rng(9)
        c = random_unit(rng, 2)
        p1 = to_coordinates(c)
        p2 = to_coordinates(np.exp(0.83j) * c)
        assert expectation(paulis["z"], p1) == pytest.approx(expectation(paulis["z"], p2), abs=1e-12)
        np.testing.assert_allclose(projector(p1).matrix, projector(p2).matrix, atol=1e-12)
        assert quantum_poisson(paulis["x"], paulis["y"], p1) == pytest.approx(
            quantum_poisson(paulis["x"], paulis["y"], p2), abs=1e-12)


class TestValidation:
    def test_hermitian_rejected(self):
        with pytest.raises(NotHermitian):
            require_hermitian(np.array([[0, 1], [0, 0]], dtype=complex))

    def test_density_negative_eigenvalue(self):
        with pytest.raises(InvalidDensityMatrix):
            QuantumDensityMatrix(np.diag([1.5, -0.5]))

    def test_density_bad_trace(self):
        with pytest.raises(InvalidDensityMatrix):
            QuantumDensityMatrix(np.diag([0.7, 0.7]))

    def test_projector_needs_unit_norm(self):
        pt = QuantumPoint._unchecked(np.array([2.0, 0.0]), np.array([0.0, 0.0]))
        with pytest.raises(NonUnitVector):
            projector(pt)
