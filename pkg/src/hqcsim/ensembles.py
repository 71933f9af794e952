"""Probability densities on the hybrid phase space and their transport.

Densities are products of a classical factor (Gaussian or point mass, with
respect to Lebesgue measure dq dp) and a quantum factor defined relative
to the rotation-invariant measure on the unit-norm shell (Haar-uniform,
a weighted mixture of fixed points, or a quadratic form generated by a
positive operator that may depend on the classical coordinates).

Ensembles are represented by weighted particle clouds and transported
along the Hamiltonian flow: each particle follows the equations of motion
while its weight stays fixed, because a density is constant along the
characteristics of its continuity equation.  Pointwise values of the
transported density are recovered by integrating backwards and reading
off the initial density.
"""

from __future__ import annotations

import numpy as np

from . import rng
from .dynamics import (ClassicalPoint, HybridHamiltonian, HybridPoint,
                       make_batch_derivative, run_rk4, step_schedule)
from .errors import (DimensionMismatch, EmptyCloud, RejectionStall,
                     UnsupportedTarget)
from .geometry import SQRT2, QuantumPoint, density_matrix_array, require_hermitian
from .kernels import transport_cloud_compiled

WEIGHT_ATOL = 1e-9
MIXTURE_WEIGHT_ATOL = 1e-12
POINT_MATCH_ATOL = 1e-9
STALL_RATE = 1e-4
STALL_MIN_PROPOSALS = 10_000


# ---------------------------------------------------------------------------
# Density factors
# ---------------------------------------------------------------------------

class GaussianClassical:
    """Independent Gaussian factor with diagonal covariance."""

    def __init__(self, q0, p0, sigma_q, sigma_p):
        self.q0 = np.atleast_1d(np.asarray(q0, dtype=float))
        self.p0 = np.atleast_1d(np.asarray(p0, dtype=float))
        k = self.q0.size
        self.sigma_q = np.broadcast_to(np.asarray(sigma_q, dtype=float), (k,)).copy()
        self.sigma_p = np.broadcast_to(np.asarray(sigma_p, dtype=float), (k,)).copy()
        if self.p0.shape != (k,):
            raise DimensionMismatch("q0 and p0 must have the same length")
        if np.any(self.sigma_q <= 0) or np.any(self.sigma_p <= 0):
            raise ValueError("covariance entries must be positive")

    @property
    def dof(self):
        return self.q0.size

    def density_batch(self, Q, P):
        zq = (Q - self.q0) / self.sigma_q
        zp = (P - self.p0) / self.sigma_p
        lognorm = np.log(2 * np.pi * self.sigma_q * self.sigma_p).sum()
        return np.exp(-0.5 * (zq**2 + zp**2).sum(axis=1) - lognorm)

    def classical_probes(self):
        """Deterministic probe points used to validate coupled quantum factors."""
        probes = [ClassicalPoint(self.q0, self.p0)]
        for s in (-2.0, 2.0, 4.0):
            probes.append(ClassicalPoint(self.q0 + s * self.sigma_q,
                                         self.p0 + s * self.sigma_p))
        return probes


class PointMassClassical:
    """Degenerate classical factor concentrated at a single point."""

    def __init__(self, q0, p0):
        self.q0 = np.atleast_1d(np.asarray(q0, dtype=float))
        self.p0 = np.atleast_1d(np.asarray(p0, dtype=float))
        if self.p0.shape != self.q0.shape:
            raise DimensionMismatch("q0 and p0 must have the same length")

    @property
    def dof(self):
        return self.q0.size

    def density_batch(self, Q, P):
        # Pointwise stand-in for the atom: indicator of the support.
        hit = (np.abs(Q - self.q0).max(axis=1, initial=0.0) <= POINT_MATCH_ATOL) & \
              (np.abs(P - self.p0).max(axis=1, initial=0.0) <= POINT_MATCH_ATOL)
        return hit.astype(float)

    def classical_probes(self):
        return [ClassicalPoint(self.q0, self.p0)]


class HaarQuantum:
    """Rotation-invariant factor on the unit-norm shell."""

    def __init__(self, dim: int):
        if dim < 2:
            raise DimensionMismatch("quantum dimension must be at least 2")
        self.dim = int(dim)

    def density_batch(self, Q, P, C):
        return np.ones(C.shape[0])


class PointMixtureQuantum:
    """Convex mixture of atoms at fixed quantum points."""

    def __init__(self, components):
        self.points = []
        self.weights = []
        for pt, w in components:
            if not isinstance(pt, QuantumPoint):
                raise TypeError("mixture components must be QuantumPoint instances")
            if w < 0:
                raise ValueError("mixture weights must be non-negative")
            self.points.append(pt)
            self.weights.append(float(w))
        if not self.points:
            raise ValueError("mixture needs at least one component")
        self.weights = np.asarray(self.weights)
        if abs(self.weights.sum() - 1.0) > MIXTURE_WEIGHT_ATOL:
            raise ValueError(f"mixture weights sum to {self.weights.sum()!r}, expected 1")
        self.dim = self.points[0].dim
        if any(pt.dim != self.dim for pt in self.points):
            raise DimensionMismatch("mixture components must share one dimension")

    def density_batch(self, Q, P, C):
        # Atom evaluation: total weight of components matching the exact
        # chart point (including phase).
        vals = np.zeros(C.shape[0])
        X = SQRT2 * C.real
        Y = SQRT2 * C.imag
        for pt, w in zip(self.points, self.weights):
            hit = (np.abs(X - pt.x).max(axis=1) <= POINT_MATCH_ATOL) & \
                  (np.abs(Y - pt.y).max(axis=1) <= POINT_MATCH_ATOL)
            vals += w * hit
        return vals

    def mean_projector(self) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for pt, w in zip(self.points, self.weights):
            c = pt.amplitudes
            out += w * np.outer(c, c.conj())
        return out


class QuadraticFormQuantum:
    """Quantum factor <psi|f(q, p)|psi> generated by a positive operator map.

    The operator is rescaled at evaluation so that its trace equals the
    dimension, which normalizes the factor against the uniform shell
    measure for every classical point.
    """

    def __init__(self, dim: int, operator):
        self.dim = int(dim)
        self._operator = operator

    def normalized_operator(self, cp: ClassicalPoint) -> np.ndarray:
        f = require_hermitian(self._operator(cp), atol=1e-10)
        if f.shape[0] != self.dim:
            raise DimensionMismatch("operator map dimension mismatch")
        tr = f.trace().real
        if tr <= 0:
            raise ValueError("quadratic-form operator must have positive trace")
        return f * (self.dim / tr)

    def validate_positive(self, classical):
        for cp in classical.classical_probes():
            eigs = np.linalg.eigvalsh(self.normalized_operator(cp))
            if eigs.min() < -1e-9:
                raise ValueError(
                    f"quadratic-form operator not positive semidefinite at q={cp.q}, p={cp.p}")

    def density_batch(self, Q, P, C):
        vals = np.empty(C.shape[0])
        for i in range(C.shape[0]):
            f = self.normalized_operator(ClassicalPoint(Q[i], P[i]))
            vals[i] = np.vdot(C[i], f @ C[i]).real
        return vals


class DensitySpec:
    """Initial hybrid density: classical factor times quantum factor."""

    def __init__(self, classical, quantum):
        self.classical = classical
        self.quantum = quantum
        if isinstance(quantum, QuadraticFormQuantum):
            quantum.validate_positive(classical)

    @property
    def dof(self):
        return self.classical.dof

    @property
    def dim(self):
        return self.quantum.dim

    def density_batch(self, Q, P, C) -> np.ndarray:
        return self.classical.density_batch(Q, P) * self.quantum.density_batch(Q, P, C)

    def density(self, z: HybridPoint) -> float:
        Q = z.classical.q[None, :]
        P = z.classical.p[None, :]
        C = z.quantum.amplitudes[None, :]
        return float(self.density_batch(Q, P, C)[0])

    def initial_conditional_state(self) -> np.ndarray:
        """First moment of the quantum factor (projector average).

        Defined for the factors whose moment is classically uniform:
        identity/d for Haar, the weighted projector average for mixtures.
        """
        if isinstance(self.quantum, HaarQuantum):
            return np.eye(self.dim, dtype=complex) / self.dim
        if isinstance(self.quantum, PointMixtureQuantum):
            return self.quantum.mean_projector()
        raise UnsupportedTarget(
            "initial conditional state is only closed-form for Haar and point mixtures")


# ---------------------------------------------------------------------------
# Particle clouds
# ---------------------------------------------------------------------------

class ParticleCloud:
    """Weighted sample of a hybrid density.

    Backed by stacked coordinate arrays; the particle view builds
    HybridPoint objects on demand.
    """

    __slots__ = ("q", "p", "c", "weights", "time")

    def __init__(self, q, p, c, weights, time=0.0, validate=True):
        self.q = np.asarray(q, dtype=float)
        self.p = np.asarray(p, dtype=float)
        self.c = np.asarray(c, dtype=complex)
        self.weights = np.asarray(weights, dtype=float)
        self.time = float(time)
        n = self.weights.size
        if self.q.shape[0] != n or self.p.shape != self.q.shape or self.c.shape[0] != n:
            raise DimensionMismatch("particle arrays have inconsistent lengths")
        if validate:
            if n == 0:
                raise EmptyCloud("cloud must contain at least one particle")
            if np.any(self.weights <= 0):
                raise ValueError("particle weights must be positive")
            if abs(self.weights.sum() - 1.0) > WEIGHT_ATOL:
                raise ValueError(f"weights sum to {self.weights.sum()!r}, expected 1")
            nrm = np.abs(np.einsum("ni,ni->n", self.c.conj(), self.c).real - 1.0)
            if nrm.size and nrm.max() > POINT_MATCH_ATOL:
                raise ValueError(f"quantum norm deviates by {nrm.max():.3e}")

    def __len__(self):
        return self.weights.size

    @property
    def dof(self):
        return self.q.shape[1]

    @property
    def dim(self):
        return self.c.shape[1]

    @property
    def x(self):
        return SQRT2 * self.c.real

    @property
    def y(self):
        return SQRT2 * self.c.imag

    def point(self, i: int) -> HybridPoint:
        return HybridPoint(ClassicalPoint(self.q[i], self.p[i]),
                           QuantumPoint._unchecked(self.x[i], self.y[i]))

    @property
    def particles(self):
        return [(self.point(i), self.weights[i]) for i in range(len(self))]

    def copy(self) -> "ParticleCloud":
        return ParticleCloud(self.q.copy(), self.p.copy(), self.c.copy(),
                             self.weights.copy(), self.time, validate=False)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def _haar_amplitudes(normals: np.ndarray, n: int, d: int) -> np.ndarray:
    z = normals.reshape(n, 2 * d)
    c = z[:, :d] + 1j * z[:, d:]
    return c / np.linalg.norm(c, axis=1, keepdims=True)


def _sample_classical(classical, n, seed, ensemble):
    k = classical.dof
    if isinstance(classical, PointMassClassical):
        Q = np.tile(classical.q0, (n, 1))
        P = np.tile(classical.p0, (n, 1))
        return Q, P
    if isinstance(classical, GaussianClassical):
        tag = rng.stream_tag(ensemble, rng.CHANNEL_CLASSICAL)
        z = rng.stream_normals(seed, tag, 0, 2 * n * k).reshape(n, 2 * k)
        Q = classical.q0 + classical.sigma_q * z[:, :k]
        P = classical.p0 + classical.sigma_p * z[:, k:]
        return Q, P
    raise TypeError(f"unknown classical factor {type(classical).__name__}")


def _sample_quadratic_form(quantum, Q, P, n, d, seed, ensemble):
    """Rejection sampler against the Haar proposal, bounded by the largest
    eigenvalue of the normalized operator at each particle's classical point."""
    ops = np.empty((n, d, d), dtype=complex)
    for i in range(n):
        ops[i] = quantum.normalized_operator(ClassicalPoint(Q[i], P[i]))
    lam_max = np.linalg.eigvalsh(ops)[:, -1]

    C = np.empty((n, d), dtype=complex)
    pending = np.arange(n)
    proposals = 0
    accepted = 0
    round_idx = 0
    while pending.size:
        ntag = rng.stream_tag(ensemble, rng.CHANNEL_REJECT_NORMALS, round_idx)
        utag = rng.stream_tag(ensemble, rng.CHANNEL_REJECT_UNIFORM, round_idx)
        z = rng.stream_normals(seed, ntag, 0, 2 * n * d).reshape(n, 2 * d)
        u = rng.stream_uniforms(seed, utag, 0, n)
        cand = _haar_amplitudes(z[pending].reshape(-1), pending.size, d)
        vals = np.einsum("ni,nij,nj->n", cand.conj(), ops[pending], cand).real
        take = u[pending] * lam_max[pending] <= vals
        C[pending[take]] = cand[take]
        proposals += pending.size
        accepted += int(take.sum())
        pending = pending[~take]
        round_idx += 1
        if proposals >= STALL_MIN_PROPOSALS and accepted < STALL_RATE * proposals:
            raise RejectionStall(
                f"acceptance rate {accepted / proposals:.2e} below {STALL_RATE:.0e} "
                f"after {proposals} proposals")
    return C


def sample(spec: DensitySpec, n: int, seed: int, ensemble: int = 0) -> ParticleCloud:
    """Draw n equally weighted particles from an initial density.

    Deterministic given (spec, n, seed, ensemble); the ensemble id
    separates independent clouds drawn from one master seed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    d = spec.dim
    Q, P = _sample_classical(spec.classical, n, seed, ensemble)

    quantum = spec.quantum
    if isinstance(quantum, HaarQuantum):
        tag = rng.stream_tag(ensemble, rng.CHANNEL_QUANTUM)
        z = rng.stream_normals(seed, tag, 0, 2 * n * d)
        C = _haar_amplitudes(z, n, d)
    elif isinstance(quantum, PointMixtureQuantum):
        tag = rng.stream_tag(ensemble, rng.CHANNEL_CHOICE)
        u = rng.stream_uniforms(seed, tag, 0, n)
        edges = np.cumsum(quantum.weights)
        idx = np.searchsorted(edges, u, side="left").clip(max=len(quantum.points) - 1)
        amps = np.stack([pt.amplitudes for pt in quantum.points])
        C = amps[idx]
    elif isinstance(quantum, QuadraticFormQuantum):
        C = _sample_quadratic_form(quantum, Q, P, n, d, seed, ensemble)
    else:
        raise TypeError(f"unknown quantum factor {type(quantum).__name__}")

    weights = np.full(n, 1.0 / n)
    return ParticleCloud(Q, P, C, weights, time=0.0)


# ---------------------------------------------------------------------------
# Transport and pullback
# ---------------------------------------------------------------------------

def _advance_arrays(hamiltonian, Q, P, C, T, dt):
    """Advance stacked particles in place by exactly T (signed): full steps
    of dt plus one shorter final step."""
    if T == 0:
        return
    n_full, remainder = step_schedule(T, dt)
    sign = 1.0 if T > 0 else -1.0
    legs = []
    if n_full:
        legs.append((sign * dt, n_full))
    if remainder:
        legs.append((sign * remainder, 1))
    deriv = None
    for sdt, n_steps in legs:
        if transport_cloud_compiled(hamiltonian, Q, P, C, sdt, n_steps,
                                    drift_limit=1e-6):
            continue
        if deriv is None:
            deriv = make_batch_derivative(hamiltonian)
        Q2, P2, C2 = run_rk4(deriv, Q, P, C, sdt, n_steps)
        Q[:], P[:], C[:] = Q2, P2, C2


def transport(cloud: ParticleCloud, hamiltonian: HybridHamiltonian, T: float,
              dt: float) -> ParticleCloud:
    """Advance every particle along the Hamiltonian flow by time T.

    Weights are untouched: the characteristics of the continuity equation
    carry the probability mass.  Negative T integrates backwards.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if cloud.dim != hamiltonian.dim or cloud.dof != hamiltonian.dof:
        raise DimensionMismatch("cloud does not match Hamiltonian dimensions")
    Q, P, C = cloud.q.copy(), cloud.p.copy(), cloud.c.copy()
    _advance_arrays(hamiltonian, Q, P, C, T, dt)
    return ParticleCloud(Q, P, C, cloud.weights.copy(),
                         time=cloud.time + T, validate=False)


def pullback_density(spec: DensitySpec, hamiltonian: HybridHamiltonian,
                     z: HybridPoint, t: float, dt: float) -> float:
    """Value of the transported density at point z and time t.

    The point is integrated backwards to time zero and the initial density
    is evaluated there; along characteristics the density is constant, so
    this equals the transported value up to integrator error.
    """
    Q = z.classical.q[None, :].copy()
    P = z.classical.p[None, :].copy()
    C = z.quantum.amplitudes[None, :].copy()
    _advance_arrays(hamiltonian, Q, P, C, -t, dt)
    return float(spec.density_batch(Q, P, C)[0])


def _hermitian_design_matrix(C: np.ndarray) -> np.ndarray:
    """Real features whose span is the set of Hermitian quadratic forms."""
    n, d = C.shape
    cols = [np.abs(C[:, j])**2 for j in range(d)]
    for j in range(d):
        for l in range(j + 1, d):
            cross = C[:, j].conj() * C[:, l]
            cols.append(2 * cross.real)
            cols.append(-2 * cross.imag)
    return np.stack(cols, axis=1)


def quadraticity_residual(spec: DensitySpec, hamiltonian: HybridHamiltonian,
                          cp: ClassicalPoint, t: float, m: int, seed: int,
                          dt: float = 1e-3) -> float:
    """Relative misfit of the transported density to a Hermitian quadratic
    form in the quantum coordinates, at a fixed classical point.

    Samples m Haar-random quantum points, evaluates the transported
    density by pullback, least-squares fits <psi|G|psi> over Hermitian G
    and returns rms(residual)/rms(values).  Zero means the section of the
    density is exactly a quadratic form.
    """
    d = spec.dim
    if m < 2 * d * d:
        raise ValueError(f"need at least {2 * d * d} sample points for dimension {d}")
    tag = rng.stream_tag(2, rng.CHANNEL_QUANTUM)
    z = rng.stream_normals(seed, tag, 0, 2 * m * d)
    C0 = _haar_amplitudes(z, m, d)
    Q = np.tile(cp.q, (m, 1))
    P = np.tile(cp.p, (m, 1))

    Qb, Pb, Cb = Q.copy(), P.copy(), C0.copy()
    _advance_arrays(hamiltonian, Qb, Pb, Cb, -t, dt)
    vals = spec.density_batch(Qb, Pb, Cb)

    X = _hermitian_design_matrix(C0)
    coef, *_ = np.linalg.lstsq(X, vals, rcond=None)
    resid = vals - X @ coef
    scale = np.sqrt(np.mean(vals**2))
    if scale == 0.0:
        return 0.0
    return float(np.sqrt(np.mean(resid**2)) / scale)


def same_moment_pair(target, classical=None):
    """Two distinct hybrid densities whose quantum factors share the first
    moment.

    Only the maximally mixed target is supported: returns a Haar-uniform
    factor and an equal-weight mixture over the computational-basis
    points, both paired with the same classical Gaussian.
    """
    rho = density_matrix_array(target)
    d = rho.shape[0]
    if np.abs(rho - np.eye(d) / d).max() > 1e-12:
        raise UnsupportedTarget("only the maximally mixed state is supported")
    if classical is None:
        classical = GaussianClassical([0.0], [0.0], 1.0, 1.0)
    if not isinstance(classical, GaussianClassical):
        raise UnsupportedTarget("classical factor of the pair must be Gaussian")
    basis = []
    for j in range(d):
        c = np.zeros(d, dtype=complex)
        c[j] = 1.0
        basis.append((QuantumPoint(SQRT2 * c.real, SQRT2 * c.imag), 1.0 / d))
    return (DensitySpec(classical, HaarQuantum(d)),
            DensitySpec(classical, PointMixtureQuantum(basis)))
