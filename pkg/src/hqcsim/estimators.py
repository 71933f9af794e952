"""Estimation of quantum statistical operators from particle clouds.

A cloud induces three estimators: the grid-binned operator field (each
classical cell accumulates the weighted projectors of its particles), the
conditional state of a cell (its block normalized to unit trace) and the
unconditional quantum mixture (the projector average over the whole
cloud).  Cell traces partition the captured probability mass exactly, so
summing all cells plus the out-of-grid remainder reproduces the global
estimator identically.

Closed-form oracles for decoupled and frozen-classical dynamics live here
as well, together with the Monte Carlo estimator of the quantum mixture's
time derivative.
"""

from __future__ import annotations

import numpy as np

from .dynamics import ClassicalPoint, HybridHamiltonian, LinearQCoupling, ZeroInteraction
from .ensembles import (DensitySpec, GaussianClassical, ParticleCloud,
                        PointMassClassical, QuadraticFormQuantum)
from .errors import (DimensionMismatch, EmptyCloud, LowMass,
                     UnsupportedHamiltonian)
from .geometry import QuantumDensityMatrix, density_matrix_array, require_hermitian

CELL_HERMITIAN_ATOL = 1e-12
CELL_PSD_ATOL = 1e-9


def mc_error_band(n: int) -> float:
    """Operator-norm error heuristic for a single n-particle estimate."""
    return 3.0 / np.sqrt(n)


def mc_distance_band(n: int) -> float:
    """Error heuristic for the distance of two independent n-particle estimates."""
    return 6.0 / np.sqrt(n)


class ClassicalGrid:
    """Rectangular binning of classical coordinates.

    Covers either the positions alone or positions and momenta jointly:
    ``q_bounds`` is a (lo, hi) pair per classical dof, and supplying
    ``p_bounds`` extends the grid over the momenta.  A value belongs to a
    bin when lo <= v < hi for every axis.
    """

    def __init__(self, q_bounds, q_bins, p_bounds=None, p_bins=None):
        self.q_bounds = [(float(a), float(b)) for a, b in q_bounds]
        self.q_bins = [int(b) for b in np.atleast_1d(q_bins)]
        self.p_bounds = None if p_bounds is None else [(float(a), float(b)) for a, b in p_bounds]
        self.p_bins = None if p_bounds is None else [int(b) for b in np.atleast_1d(p_bins)]
        axes = []
        for (lo, hi), nb in zip(self.q_bounds, self.q_bins):
            axes.append((lo, hi, nb))
        if self.p_bounds is not None:
            if len(self.p_bounds) != len(self.q_bounds):
                raise DimensionMismatch("p grid must cover the same dofs as q")
            for (lo, hi), nb in zip(self.p_bounds, self.p_bins):
                axes.append((lo, hi, nb))
        for lo, hi, nb in axes:
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid axis bounds ({lo}, {hi})")
            if nb < 1:
                raise ValueError("bin counts must be at least 1")
        self._axes = axes

    @property
    def includes_momenta(self) -> bool:
        return self.p_bounds is not None

    @property
    def shape(self):
        return tuple(nb for _, _, nb in self._axes)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([(hi - lo) / nb for lo, hi, nb in self._axes]))

    def coordinates(self, Q, P) -> np.ndarray:
        cols = [Q[:, i] for i in range(len(self.q_bounds))]
        if self.includes_momenta:
            cols += [P[:, i] for i in range(len(self.p_bounds))]
        return np.stack(cols, axis=1)

    def locate(self, Q, P):
        """(flat cell index, inside mask) for stacked classical coordinates."""
        V = self.coordinates(Q, P)
        n = V.shape[0]
        flat = np.zeros(n, dtype=np.int64)
        inside = np.ones(n, dtype=bool)
        for a, (lo, hi, nb) in enumerate(self._axes):
            width = (hi - lo) / nb
            idx = np.floor((V[:, a] - lo) / width).astype(np.int64)
            ok = (V[:, a] >= lo) & (V[:, a] < hi)
            idx = idx.clip(0, nb - 1)
            inside &= ok
            flat = flat * nb + idx
        return flat, inside

    def cell_center(self, index) -> np.ndarray:
        idx = np.unravel_index(index, self.shape) if np.isscalar(index) else index
        return np.array([lo + (hi - lo) / nb * (i + 0.5)
                         for i, (lo, hi, nb) in zip(idx, self._axes)])


class StateHistogram:
    """Operator-valued histogram over a classical grid.

    Each cell holds the unnormalized sum of weighted projectors of its
    particles; the cell trace equals the classical probability mass
    captured by the cell.  ``outside`` collects the same sum for particles
    that fall off the grid.
    """

    def __init__(self, grid: ClassicalGrid, cells, outside, time, n_particles):
        self.grid = grid
        self.cells = cells
        self.outside = outside
        self.time = float(time)
        self.n_particles = int(n_particles)
        flat = cells.reshape(grid.n_cells, cells.shape[-1], cells.shape[-1])
        herm = np.abs(flat - flat.conj().transpose(0, 2, 1)).max(initial=0.0)
        if herm > CELL_HERMITIAN_ATOL:
            raise ValueError(f"histogram cells deviate from Hermitian by {herm:.3e}")
        eigs = np.linalg.eigvalsh(flat)
        if eigs.min(initial=0.0) < -CELL_PSD_ATOL:
            raise ValueError(f"histogram cell has negative eigenvalue {eigs.min():.3e}")
        self.total_weight_captured = float(np.einsum("nii->", flat).real)
        if self.total_weight_captured > 1 + 1e-9:
            raise ValueError("captured weight exceeds 1")

    @property
    def dim(self) -> int:
        return self.cells.shape[-1]

    def cell_trace(self, index) -> float:
        return float(np.trace(self.cells[index]).real)

    def cell_sum(self) -> np.ndarray:
        """Sum of all cell matrices (captured part of the global estimate)."""
        d = self.dim
        return self.cells.reshape(-1, d, d).sum(axis=0)


def bin_state_histogram(cloud: ParticleCloud, grid: ClassicalGrid) -> StateHistogram:
    """Accumulate weighted projectors into classical grid cells."""
    n = len(cloud)
    if n == 0:
        raise EmptyCloud("cannot bin an empty cloud")
    d = cloud.dim
    flat, inside = grid.locate(cloud.q, cloud.p)
    wproj = np.einsum("n,ni,nj->nij", cloud.weights, cloud.c, cloud.c.conj())
    cells = np.zeros((grid.n_cells, d, d), dtype=complex)
    np.add.at(cells, flat[inside], wproj[inside])
    outside = wproj[~inside].sum(axis=0) if np.any(~inside) else np.zeros((d, d), dtype=complex)
    return StateHistogram(grid, cells.reshape(grid.shape + (d, d)), outside,
                          cloud.time, n)


def conditional_state(hist: StateHistogram, cell, mass_floor=None) -> QuantumDensityMatrix:
    """Quantum state conditional on the classical coordinates lying in a cell.

    The cell block is divided by its trace.  Cells carrying less mass than
    ``mass_floor`` (default 10/n) are rejected: the normalizing
    denominator is then dominated by sampling noise.
    """
    block = hist.cells[cell]
    tr = float(np.trace(block).real)
    floor = 10.0 / hist.n_particles if mass_floor is None else float(mass_floor)
    if tr < floor:
        raise LowMass(f"cell mass {tr:.3e} below floor {floor:.3e}")
    return QuantumDensityMatrix(block / tr)


def estimate_quantum_state(cloud: ParticleCloud) -> QuantumDensityMatrix:
    """Unconditional quantum mixture: the weighted projector average."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot estimate from an empty cloud")
    rho = np.einsum("n,ni,nj->ij", cloud.weights, cloud.c, cloud.c.conj())
    return QuantumDensityMatrix(rho)


def trace_distance(a, b) -> float:
    """Half the absolute-eigenvalue sum of the difference of two states."""
    ma = density_matrix_array(a)
    mb = density_matrix_array(b)
    if ma.shape != mb.shape:
        raise DimensionMismatch(f"state shapes differ: {ma.shape} vs {mb.shape}")
    return 0.5 * float(np.abs(np.linalg.eigvalsh(ma - mb)).sum())


def mixture_derivative_estimate(cloud: ParticleCloud,
                                hamiltonian: HybridHamiltonian) -> np.ndarray:
    """Monte Carlo estimate of the time derivative of the quantum mixture.

    Two terms drive the mixture: the commutator of the bare quantum
    Hamiltonian with the estimated mixture, and the cloud average of the
    interaction commutator with each particle's projector (an unbiased
    estimator of the classical integral of [V(q, p), rho(q, p)]).  The
    result is Hermitian and traceless.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot estimate from an empty cloud")
    hq = hamiltonian.h_q
    hbar = hamiltonian.hbar
    rho = np.einsum("n,ni,nj->ij", cloud.weights, cloud.c, cloud.c.conj())
    out = (hq @ rho - rho @ hq) / (1j * hbar)

    vint = hamiltonian.v_int
    if isinstance(vint, ZeroInteraction) or cloud.dof == 0:
        return out
    if isinstance(vint, LinearQCoupling):
        # [g q A, P] averaged over particles = [A, sum w g q P]
        m = np.einsum("n,ni,nj->ij", cloud.weights * vint.strength * cloud.q[:, 0],
                      cloud.c, cloud.c.conj())
        out = out + (vint.A @ m - m @ vint.A) / (1j * hbar)
        return out
    acc = np.zeros_like(rho)
    for i in range(len(cloud)):
        v = vint.operator(cloud.q[i], cloud.p[i])
        proj = np.outer(cloud.c[i], cloud.c[i].conj())
        acc += cloud.weights[i] * (v @ proj - proj @ v)
    return out + acc / (1j * hbar)


def hermitian_propagator(h, T: float, hbar: float = 1.0) -> np.ndarray:
    """exp(-i h T / hbar) through the eigendecomposition of Hermitian h."""
    m = require_hermitian(h)
    w, v = np.linalg.eigh(m)
    return (v * np.exp(-1j * w * T / hbar)) @ v.conj().T


def unitary_oracle(rho0, hq, T: float, hbar: float = 1.0) -> QuantumDensityMatrix:
    """Closed-form mixture evolution without interaction: U rho U^dagger."""
    rho = density_matrix_array(rho0)
    hq = require_hermitian(hq)
    if rho.shape != hq.shape:
        raise DimensionMismatch("state and Hamiltonian dimensions differ")
    u = hermitian_propagator(hq, T, hbar)
    return QuantumDensityMatrix(u @ rho @ u.conj().T)


def _require_frozen_classical(hamiltonian: HybridHamiltonian):
    """The oracle needs a vanishing classical Hamilton's function and an
    interaction independent of the momenta."""
    k = hamiltonian.dof
    if k < 1:
        raise UnsupportedHamiltonian("oracle needs at least one classical dof")
    probes = [(np.full(k, s), np.full(k, t)) for s, t in
              ((0.0, 0.0), (0.7, -0.4), (-1.3, 0.9))]
    for q, p in probes:
        if abs(hamiltonian.h_c.value(q, p)) > 1e-12 or \
                np.abs(hamiltonian.h_c.grad_q(q, p)).max(initial=0.0) > 1e-12 or \
                np.abs(hamiltonian.h_c.grad_p(q, p)).max(initial=0.0) > 1e-12:
            raise UnsupportedHamiltonian("classical Hamilton's function must vanish")
        if np.abs(hamiltonian.v_int.grad_p(q, p)).max(initial=0.0) > 1e-12:
            raise UnsupportedHamiltonian("interaction must not depend on momenta")
    v0 = hamiltonian.v_int.operator(probes[0][0], np.zeros(k))
    v1 = hamiltonian.v_int.operator(probes[0][0], np.ones(k))
    if np.abs(v0 - v1).max() > 1e-12:
        raise UnsupportedHamiltonian("interaction must not depend on momenta")


def _initial_conditional(spec: DensitySpec, q: np.ndarray) -> np.ndarray:
    if isinstance(spec.quantum, QuadraticFormQuantum):
        cp = ClassicalPoint(q, np.zeros_like(q))
        return spec.quantum.normalized_operator(cp) / spec.dim
    return spec.initial_conditional_state()


def frozen_classical_oracle(spec: DensitySpec, hamiltonian: HybridHamiltonian,
                            T: float, quad_points: int = 64,
                            window: float = 8.0) -> QuantumDensityMatrix:
    """Quadrature oracle for the quantum mixture under a frozen classical
    sector.

    With H_c = 0 and V depending on q only, every trajectory keeps its q
    fixed and the quantum factor at that q evolves unitarily under
    H_q + V(q).  The mixture is the classical average of these conjugated
    initial conditional states, computed here by Gauss-Legendre quadrature
    over the classical position marginal (window of +-``window`` standard
    deviations around the mean for a Gaussian factor, single node for a
    point mass).
    """
    _require_frozen_classical(hamiltonian)
    d = hamiltonian.dim
    classical = spec.classical

    if isinstance(classical, PointMassClassical):
        nodes = classical.q0[None, :]
        node_weights = np.array([1.0])
    elif isinstance(classical, GaussianClassical):
        if classical.dof != 1:
            raise UnsupportedHamiltonian("Gaussian quadrature oracle supports one classical dof")
        q0, sq = classical.q0[0], classical.sigma_q[0]
        t, w = np.polynomial.legendre.leggauss(int(quad_points))
        qs = q0 + window * sq * t
        pdf = np.exp(-0.5 * ((qs - q0) / sq) ** 2) / (np.sqrt(2 * np.pi) * sq)
        node_weights = w * window * sq * pdf
        nodes = qs[:, None]
    else:
        raise UnsupportedHamiltonian(f"unsupported classical factor {type(classical).__name__}")

    acc = np.zeros((d, d), dtype=complex)
    total = 0.0
    p_zero = np.zeros(nodes.shape[1])
    for qvec, wq in zip(nodes, node_weights):
        h_full = hamiltonian.h_q + hamiltonian.v_int.operator(qvec, p_zero)
        u = hermitian_propagator(h_full, T, hamiltonian.hbar)
        rho_q = _initial_conditional(spec, qvec)
        acc += wq * (u @ rho_q @ u.conj().T)
        total += wq
    return QuantumDensityMatrix(acc / total)
