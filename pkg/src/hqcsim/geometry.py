"""Quantum phase space: real chart, expectation functions, projectors,
gradients and the quantum Poisson bracket.

A normalized state vector with amplitudes ``c_j`` is identified with the
real phase-space point ``x_j = sqrt(2) Re c_j``, ``y_j = sqrt(2) Im c_j``.
In these coordinates the squared Hilbert norm is ``sum_j (x_j^2 + y_j^2)/2``
and expectation values of Hermitian operators become real scalar fields
whose canonical Poisson bracket (scaled by 1/hbar) reproduces the
commutator expectation.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, InvalidDensityMatrix, NonUnitVector, NotHermitian

NORM_ATOL = 1e-9
HERMITIAN_ATOL = 1e-12
PSD_ATOL = 1e-9
TRACE_ATOL = 1e-9

SQRT2 = np.sqrt(2.0)


def require_hermitian(matrix, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate (never symmetrize) a Hermitian matrix and return it as
    a complex ndarray."""
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    dev = np.abs(m - m.conj().T).max()
    if dev > atol:
        raise NotHermitian(f"matrix deviates from its conjugate transpose by {dev:.3e}")
    return m


class QuantumPoint:
    """Point of the quantum phase space: real coordinate pair (x, y) of a
    unit-norm state vector.

    Construction away from the unit-norm shell is rejected; the shell is
    invariant under every flow generated by an expectation-valued
    Hamilton's function, so validated points stay valid under transport.
    """

    __slots__ = ("x", "y")

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
            raise DimensionMismatch(
                f"x and y must be equal-length 1-d arrays, got {x.shape} and {y.shape}"
            )
        if x.size < 2:
            raise DimensionMismatch("quantum dimension must be at least 2")
        nrm = 0.5 * (x @ x + y @ y)
        if abs(nrm - 1.0) > NORM_ATOL:
            raise NonUnitVector(f"phase-space norm {nrm!r} deviates from 1 beyond {NORM_ATOL}")
        self.x = x
        self.y = y

    @classmethod
    def _unchecked(cls, x, y) -> "QuantumPoint":
        # Internal: wrap integrator output without re-validating the shell
        # constraint (drift is reported separately as a diagnostic).
        pt = object.__new__(cls)
        pt.x = np.asarray(x, dtype=float)
        pt.y = np.asarray(y, dtype=float)
        return pt

    @property
    def dim(self) -> int:
        return self.x.size

    @property
    def amplitudes(self) -> np.ndarray:
        """Complex amplitude vector c with c_j = (x_j + i y_j)/sqrt(2)."""
        return (self.x + 1j * self.y) / SQRT2

    def phase_norm(self) -> float:
        """The norm function sum_j (x_j^2 + y_j^2)/2."""
        return 0.5 * float(self.x @ self.x + self.y @ self.y)

    def __repr__(self):
        return f"QuantumPoint(x={self.x!r}, y={self.y!r})"


class QuantumDensityMatrix:
    """Trace-one positive Hermitian matrix describing a quantum mixture."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = require_hermitian(matrix)
        eigs = np.linalg.eigvalsh(m)
        if eigs.min() < -PSD_ATOL:
            raise InvalidDensityMatrix(
                f"density matrix has negative eigenvalue {eigs.min():.3e}"
            )
        tr = m.trace().real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise InvalidDensityMatrix(f"density matrix trace {tr!r} deviates from 1")
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def __repr__(self):
        return f"QuantumDensityMatrix({self.matrix!r})"


def density_matrix_array(rho) -> np.ndarray:
    """Coerce a QuantumDensityMatrix or raw matrix to a complex ndarray."""
    if isinstance(rho, QuantumDensityMatrix):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


def to_coordinates(c) -> QuantumPoint:
    """Chart a unit complex vector into real phase-space coordinates."""
    c = np.asarray(c, dtype=complex)
    if c.ndim != 1:
        raise DimensionMismatch("amplitude vector must be 1-d")
    nrm = np.linalg.norm(c)
    if abs(nrm - 1.0) > NORM_ATOL:
        raise NonUnitVector(f"|c| = {nrm!r} deviates from 1 beyond {NORM_ATOL}")
    return QuantumPoint(SQRT2 * c.real, SQRT2 * c.imag)


def from_coordinates(pt: QuantumPoint) -> np.ndarray:
    """Inverse chart: c_j = (x_j + i y_j)/sqrt(2)."""
    return pt.amplitudes


def expectation(operator, pt: QuantumPoint) -> float:
    """Expectation value of a Hermitian operator at a phase-space point."""
    a = np.asarray(operator, dtype=complex)
    c = pt.amplitudes
    if a.shape != (c.size, c.size):
        raise DimensionMismatch(f"operator shape {a.shape} does not match dim {c.size}")
    return float(np.vdot(c, a @ c).real)


def projector(pt: QuantumPoint) -> QuantumDensityMatrix:
    """Rank-one projector onto the state at ``pt``."""
    nrm = pt.phase_norm()
    if abs(nrm - 1.0) > NORM_ATOL:
        raise NonUnitVector(f"phase-space norm {nrm!r} deviates from 1")
    c = pt.amplitudes
    return QuantumDensityMatrix(np.outer(c, c.conj()))


def expectation_gradient(operator, pt: QuantumPoint):
    """Gradient of F(x, y) = <psi|A|psi> with respect to the chart coordinates.

    With w = A c the components are dF/dx_j = sqrt(2) Re w_j and
    dF/dy_j = sqrt(2) Im w_j.  Returns the pair (dF/dx, dF/dy).
    """
    a = np.asarray(operator, dtype=complex)
    c = pt.amplitudes
    if a.shape != (c.size, c.size):
        raise DimensionMismatch(f"operator shape {a.shape} does not match dim {c.size}")
    w = a @ c
    return SQRT2 * w.real, SQRT2 * w.imag


def quantum_poisson(op_a, op_b, pt: QuantumPoint, hbar: float = 1.0) -> float:
    """Poisson bracket of two expectation-valued fields at ``pt``.

    Evaluates (1/hbar) sum_j (dA/dx_j dB/dy_j - dB/dx_j dA/dy_j) for the
    fields A(x,y), B(x,y) generated by the two Hermitian operators.  Equals
    the expectation of [A, B]/(i hbar).
    """
    ax, ay = expectation_gradient(op_a, pt)
    bx, by = expectation_gradient(op_b, pt)
    return float(ax @ by - bx @ ay) / hbar
