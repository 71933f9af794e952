"""Hybrid phase space, total Hamilton's function and trajectory integration.

The hybrid phase space is the Cartesian product of a classical sector with
coordinates (q, p) and the quantum phase space with chart coordinates
(x, y).  The total Hamilton's function is

    H(q, p, x, y) = H_c(q, p) + <H_q> + <V(q, p)>

with operator-valued interaction V(q, p) and expectations taken in the
state attached to (x, y).  Its flow is the mean-field coupling: classical
forces pick up expectation values of operator gradients while the quantum
amplitudes obey a (q, p)-dependent Schroedinger equation.  Trajectories
are integrated with fixed-step classical RK4; conservation is monitored,
not enforced.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, StepRejected
from .geometry import SQRT2, QuantumPoint, expectation, require_hermitian

NORM_DRIFT_LIMIT = 1e-6
GRAD_CHECK_ATOL = 1e-6
FD_STEP = 1e-5


class ClassicalPoint:
    """Classical coordinates q paired with conjugate momenta p.

    Zero degrees of freedom are allowed and degenerate to a purely
    quantum system.
    """

    __slots__ = ("q", "p")

    def __init__(self, q=(), p=()):
        q = np.atleast_1d(np.asarray(q, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        if q.shape != p.shape or q.ndim != 1:
            raise DimensionMismatch(f"q and p must be equal-length 1-d arrays, got {q.shape}, {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("classical coordinates must be finite")
        self.q = q
        self.p = p

    @property
    def dof(self) -> int:
        return self.q.size

    def __repr__(self):
        return f"ClassicalPoint(q={self.q!r}, p={self.p!r})"


class HybridPoint:
    """A point of the product phase space."""

    __slots__ = ("classical", "quantum")

    def __init__(self, classical: ClassicalPoint, quantum: QuantumPoint):
        self.classical = classical
        self.quantum = quantum

    def __repr__(self):
        return f"HybridPoint({self.classical!r}, {self.quantum!r})"


# ---------------------------------------------------------------------------
# Classical Hamilton's functions
# ---------------------------------------------------------------------------

class ClassicalField:
    """Scalar field on the classical sector with exact gradients.

    Subclasses provide value/grad_q/grad_p for a single point; the batch
    variants (arrays of shape (n, k)) default to per-particle loops and
    are overridden where a vectorized form exists.
    """

    dof: int

    def value(self, q, p) -> float:
        raise NotImplementedError

    def grad_q(self, q, p) -> np.ndarray:
        raise NotImplementedError

    def grad_p(self, q, p) -> np.ndarray:
        raise NotImplementedError

    def value_batch(self, Q, P) -> np.ndarray:
        return np.array([self.value(Q[i], P[i]) for i in range(Q.shape[0])])

    def grad_q_batch(self, Q, P) -> np.ndarray:
        return np.stack([self.grad_q(Q[i], P[i]) for i in range(Q.shape[0])])

    def grad_p_batch(self, Q, P) -> np.ndarray:
        return np.stack([self.grad_p(Q[i], P[i]) for i in range(Q.shape[0])])

    def quadratic_coefficients(self):
        """(inverse mass, spring constant) arrays when the field is of the
        form sum_i p_i^2/(2 m_i) + k_i q_i^2 / 2, else None.  Enables the
        compiled transport kernel."""
        return None


class HarmonicClassical(ClassicalField):
    """H_c = sum_i p_i^2/(2 m_i) + m_i w_i^2 q_i^2 / 2."""

    def __init__(self, mass=1.0, frequency=1.0, dof: int = 1):
        self.dof = int(dof)
        self.mass = np.broadcast_to(np.asarray(mass, dtype=float), (self.dof,)).copy()
        self.frequency = np.broadcast_to(np.asarray(frequency, dtype=float), (self.dof,)).copy()
        if np.any(self.mass <= 0):
            raise ValueError("mass must be positive")
        self._kappa = self.mass * self.frequency**2

    def value(self, q, p):
        return float(0.5 * np.sum(p**2 / self.mass) + 0.5 * np.sum(self._kappa * q**2))

    def grad_q(self, q, p):
        return self._kappa * q

    def grad_p(self, q, p):
        return p / self.mass

    def value_batch(self, Q, P):
        return 0.5 * (P**2 / self.mass).sum(axis=1) + 0.5 * (self._kappa * Q**2).sum(axis=1)

    def grad_q_batch(self, Q, P):
        return self._kappa * Q

    def grad_p_batch(self, Q, P):
        return P / self.mass

    def quadratic_coefficients(self):
        return 1.0 / self.mass, self._kappa.copy()


class FreeClassical(HarmonicClassical):
    """Kinetic term only: H_c = sum_i p_i^2/(2 m_i)."""

    def __init__(self, mass=1.0, dof: int = 1):
        super().__init__(mass=mass, frequency=0.0, dof=dof)


class ZeroClassical(ClassicalField):
    """Identically vanishing classical Hamilton's function (frozen sector)."""

    def __init__(self, dof: int = 1):
        self.dof = int(dof)

    def value(self, q, p):
        return 0.0

    def grad_q(self, q, p):
        return np.zeros(self.dof)

    def grad_p(self, q, p):
        return np.zeros(self.dof)

    def value_batch(self, Q, P):
        return np.zeros(Q.shape[0])

    def grad_q_batch(self, Q, P):
        return np.zeros_like(Q)

    def grad_p_batch(self, Q, P):
        return np.zeros_like(Q)

    def quadratic_coefficients(self):
        z = np.zeros(self.dof)
        return z, z.copy()


class PolynomialClassical(ClassicalField):
    """Single-dof polynomial H_c(q, p) = sum_m a_m q^{i_m} p^{j_m}.

    ``terms`` is a sequence of (coefficient, q_power, p_power) triples.
    """

    def __init__(self, terms):
        self.dof = 1
        self.terms = [(float(a), int(i), int(j)) for a, i, j in terms]
        for _, i, j in self.terms:
            if i < 0 or j < 0:
                raise ValueError("polynomial powers must be non-negative")

    def value(self, q, p):
        return float(sum(a * q[0]**i * p[0]**j for a, i, j in self.terms))

    def grad_q(self, q, p):
        g = sum(a * i * q[0]**(i - 1) * p[0]**j for a, i, j in self.terms if i > 0)
        return np.array([g])

    def grad_p(self, q, p):
        g = sum(a * j * q[0]**i * p[0]**(j - 1) for a, i, j in self.terms if j > 0)
        return np.array([g])

    def value_batch(self, Q, P):
        q, p = Q[:, 0], P[:, 0]
        out = np.zeros(Q.shape[0])
        for a, i, j in self.terms:
            out += a * q**i * p**j
        return out

    def grad_q_batch(self, Q, P):
        q, p = Q[:, 0], P[:, 0]
        out = np.zeros(Q.shape[0])
        for a, i, j in self.terms:
            if i > 0:
                out += a * i * q**(i - 1) * p**j
        return out[:, None]

    def grad_p_batch(self, Q, P):
        q, p = Q[:, 0], P[:, 0]
        out = np.zeros(Q.shape[0])
        for a, i, j in self.terms:
            if j > 0:
                out += a * j * q**i * p**(j - 1)
        return out[:, None]


class CustomClassical(ClassicalField):
    """Wrap user callables value(q, p), grad_q(q, p), grad_p(q, p)."""

    def __init__(self, dof, value, grad_q, grad_p):
        self.dof = int(dof)
        self._value = value
        self._grad_q = grad_q
        self._grad_p = grad_p

    def value(self, q, p):
        return float(self._value(q, p))

    def grad_q(self, q, p):
        return np.asarray(self._grad_q(q, p), dtype=float)

    def grad_p(self, q, p):
        return np.asarray(self._grad_p(q, p), dtype=float)


# ---------------------------------------------------------------------------
# Operator-valued interactions
# ---------------------------------------------------------------------------

class InteractionField:
    """Operator-valued interaction V(q, p) with exact classical gradients.

    Batch helpers operate on stacked particles: Q, P of shape (n, k) and
    complex amplitudes C of shape (n, d).  Defaults loop per particle.
    """

    dim: int
    dof: int

    def operator(self, q, p) -> np.ndarray:
        raise NotImplementedError

    def grad_q(self, q, p) -> np.ndarray:
        """d(V)/dq as an array of shape (dof, dim, dim)."""
        raise NotImplementedError

    def grad_p(self, q, p) -> np.ndarray:
        raise NotImplementedError

    def apply_batch(self, Q, P, C) -> np.ndarray:
        out = np.empty_like(C)
        for i in range(C.shape[0]):
            out[i] = self.operator(Q[i], P[i]) @ C[i]
        return out

    def exp_batch(self, Q, P, C) -> np.ndarray:
        vc = self.apply_batch(Q, P, C)
        return np.einsum("ni,ni->n", C.conj(), vc).real

    def exp_grad_q_batch(self, Q, P, C) -> np.ndarray:
        n, k = Q.shape
        out = np.empty((n, k))
        for i in range(n):
            g = self.grad_q(Q[i], P[i])
            out[i] = np.einsum("j,ajl,l->a", C[i].conj(), g, C[i]).real
        return out

    def exp_grad_p_batch(self, Q, P, C) -> np.ndarray:
        n, k = Q.shape
        out = np.empty((n, k))
        for i in range(n):
            g = self.grad_p(Q[i], P[i])
            out[i] = np.einsum("j,ajl,l->a", C[i].conj(), g, C[i]).real
        return out

    def linear_coupling(self):
        """(coupling vector, operator) for V = (g . q) A, else None.
        Enables the compiled transport kernel."""
        return None


class ZeroInteraction(InteractionField):
    """No coupling between the sectors."""

    def __init__(self, dim: int, dof: int):
        self.dim = int(dim)
        self.dof = int(dof)
        self._zero = np.zeros((self.dim, self.dim), dtype=complex)

    def operator(self, q, p):
        return self._zero

    def grad_q(self, q, p):
        return np.zeros((self.dof, self.dim, self.dim), dtype=complex)

    grad_p = grad_q

    def apply_batch(self, Q, P, C):
        return np.zeros_like(C)

    def exp_batch(self, Q, P, C):
        return np.zeros(C.shape[0])

    def exp_grad_q_batch(self, Q, P, C):
        return np.zeros_like(Q)

    exp_grad_p_batch = exp_grad_q_batch

    def linear_coupling(self):
        return np.zeros(self.dof), np.zeros((self.dim, self.dim), dtype=complex)


class LinearQCoupling(InteractionField):
    """V(q, p) = g q_1 A for a fixed Hermitian A (couples the first
    classical coordinate)."""

    def __init__(self, strength: float, operator, dof: int = 1):
        if dof < 1:
            raise DimensionMismatch("linear-q coupling needs at least one classical dof")
        self.strength = float(strength)
        self.A = require_hermitian(operator)
        self.dim = self.A.shape[0]
        self.dof = int(dof)
        self._a_t = self.A.T.copy()

    def operator(self, q, p):
        return self.strength * q[0] * self.A

    def grad_q(self, q, p):
        g = np.zeros((self.dof, self.dim, self.dim), dtype=complex)
        g[0] = self.strength * self.A
        return g

    def grad_p(self, q, p):
        return np.zeros((self.dof, self.dim, self.dim), dtype=complex)

    def apply_batch(self, Q, P, C):
        return (self.strength * Q[:, 0:1]) * (C @ self._a_t)

    def exp_batch(self, Q, P, C):
        ea = np.einsum("ni,ni->n", C.conj(), C @ self._a_t).real
        return self.strength * Q[:, 0] * ea

    def exp_grad_q_batch(self, Q, P, C):
        out = np.zeros_like(Q)
        out[:, 0] = self.strength * np.einsum("ni,ni->n", C.conj(), C @ self._a_t).real
        return out

    def exp_grad_p_batch(self, Q, P, C):
        return np.zeros_like(Q)

    def linear_coupling(self):
        g = np.zeros(self.dof)
        g[0] = self.strength
        return g, self.A.copy()


class CustomInteraction(InteractionField):
    """Wrap user callables operator(q, p) and gradient maps returning
    (dof, dim, dim) stacks."""

    def __init__(self, dim, dof, operator, grad_q, grad_p):
        self.dim = int(dim)
        self.dof = int(dof)
        self._operator = operator
        self._grad_q = grad_q
        self._grad_p = grad_p

    def operator(self, q, p):
        return np.asarray(self._operator(q, p), dtype=complex)

    def grad_q(self, q, p):
        return np.asarray(self._grad_q(q, p), dtype=complex)

    def grad_p(self, q, p):
        return np.asarray(self._grad_p(q, p), dtype=complex)


# ---------------------------------------------------------------------------
# Total Hamiltonian
# ---------------------------------------------------------------------------

_PROBE_OFFSETS = np.array([0.0, 0.31, -0.73, 1.17])


class HybridHamiltonian:
    """Three-term Hamilton's function H_c + <H_q> + <V(q, p)>.

    Exact classical gradients of both H_c and V are part of the contract;
    they are validated against central finite differences at a fixed set
    of probe points during construction.
    """

    def __init__(self, h_c: ClassicalField, h_q, v_int: InteractionField,
                 hbar: float = 1.0, validate: bool = True):
        self.h_c = h_c
        self.h_q = require_hermitian(h_q)
        self.v_int = v_int
        self.hbar = float(hbar)
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        if v_int.dim != self.h_q.shape[0]:
            raise DimensionMismatch(
                f"interaction dim {v_int.dim} != quantum dim {self.h_q.shape[0]}")
        if v_int.dof != h_c.dof:
            raise DimensionMismatch(
                f"interaction dof {v_int.dof} != classical dof {h_c.dof}")
        if validate and h_c.dof > 0:
            self._validate_gradients()

    @property
    def dim(self) -> int:
        return self.h_q.shape[0]

    @property
    def dof(self) -> int:
        return self.h_c.dof

    def _validate_gradients(self):
        k = self.dof
        for off in (0.3, -0.6, 1.1):
            q = off + 0.1 * _PROBE_OFFSETS[:k].copy()
            p = -off + 0.07 * _PROBE_OFFSETS[:k].copy()
            self._check_point(q, p)

    def _check_point(self, q, p):
        # classical field gradients vs central differences
        gq, gp = self.h_c.grad_q(q, p), self.h_c.grad_p(q, p)
        for i in range(q.size):
            dq = np.zeros_like(q); dq[i] = FD_STEP
            fd_q = (self.h_c.value(q + dq, p) - self.h_c.value(q - dq, p)) / (2 * FD_STEP)
            fd_p = (self.h_c.value(q, p + dq) - self.h_c.value(q, p - dq)) / (2 * FD_STEP)
            if abs(fd_q - gq[i]) > GRAD_CHECK_ATOL or abs(fd_p - gp[i]) > GRAD_CHECK_ATOL:
                raise ValueError(
                    f"classical gradient inconsistent with finite differences at q={q}, p={p}")
        # interaction operator must be Hermitian and its gradients consistent
        require_hermitian(self.v_int.operator(q, p), atol=1e-10)
        vq, vp = self.v_int.grad_q(q, p), self.v_int.grad_p(q, p)
        for i in range(q.size):
            dq = np.zeros_like(q); dq[i] = FD_STEP
            fd_q = (self.v_int.operator(q + dq, p) - self.v_int.operator(q - dq, p)) / (2 * FD_STEP)
            fd_p = (self.v_int.operator(q, p + dq) - self.v_int.operator(q, p - dq)) / (2 * FD_STEP)
            if np.abs(fd_q - vq[i]).max() > GRAD_CHECK_ATOL or np.abs(fd_p - vp[i]).max() > GRAD_CHECK_ATOL:
                raise ValueError(
                    f"interaction gradient inconsistent with finite differences at q={q}, p={p}")

    def kernel_parameters(self):
        """Parameters for the compiled transport kernel, or None when the
        Hamiltonian is outside the quadratic-classical / linear-coupling
        family."""
        quad = self.h_c.quadratic_coefficients()
        lin = self.v_int.linear_coupling()
        if quad is None or lin is None:
            return None
        inv_mass, kappa = quad
        gvec, a_op = lin
        return (np.ascontiguousarray(inv_mass, dtype=float),
                np.ascontiguousarray(kappa, dtype=float),
                np.ascontiguousarray(gvec, dtype=float),
                np.ascontiguousarray(a_op, dtype=complex))


def total_energy(hamiltonian: HybridHamiltonian, z: HybridPoint) -> float:
    """Value of the total Hamilton's function at a hybrid point."""
    q, p = z.classical.q, z.classical.p
    pt = z.quantum
    if pt.dim != hamiltonian.dim or z.classical.dof != hamiltonian.dof:
        raise DimensionMismatch("hybrid point does not match Hamiltonian dimensions")
    e = hamiltonian.h_c.value(q, p) + expectation(hamiltonian.h_q, pt)
    if hamiltonian.dof > 0:
        e += expectation(hamiltonian.v_int.operator(q, p), pt)
    return float(e)


def total_energy_batch(hamiltonian: HybridHamiltonian, Q, P, C) -> np.ndarray:
    """Vectorized total energy for stacked particles."""
    e = hamiltonian.h_c.value_batch(Q, P)
    e = e + np.einsum("ni,ni->n", C.conj(), C @ hamiltonian.h_q.T).real
    e = e + hamiltonian.v_int.exp_batch(Q, P, C)
    return e


# ---------------------------------------------------------------------------
# Composite Poisson bracket and the hybrid vector field
# ---------------------------------------------------------------------------

def quadratic_form(operator, x, y) -> float:
    """<psi_{x,y}|A|psi_{x,y}> as an algebraic form, defined for any (x, y)
    including points off the unit shell."""
    c = (np.asarray(x, dtype=float) + 1j * np.asarray(y, dtype=float)) / SQRT2
    return float(np.vdot(c, np.asarray(operator, dtype=complex) @ c).real)


def hamilton_function(hamiltonian: HybridHamiltonian) -> Callable:
    """The total Hamilton's function as a plain field f(q, p, x, y)."""

    def field(q, p, x, y):
        val = hamiltonian.h_c.value(q, p) + quadratic_form(hamiltonian.h_q, x, y)
        if hamiltonian.dof > 0:
            val += quadratic_form(hamiltonian.v_int.operator(q, p), x, y)
        return val

    return field


def _field_gradient(f, q, p, x, y, step):
    """Central-difference gradient of a field over all hybrid coordinates."""
    def diff(arr, i, *, which):
        d = np.zeros_like(arr); d[i] = step
        args = {"q": q, "p": p, "x": x, "y": y}
        hi = dict(args); hi[which] = arr + d
        lo = dict(args); lo[which] = arr - d
        return (f(hi["q"], hi["p"], hi["x"], hi["y"]) - f(lo["q"], lo["p"], lo["x"], lo["y"])) / (2 * step)

    gq = np.array([diff(q, i, which="q") for i in range(q.size)])
    gp = np.array([diff(p, i, which="p") for i in range(p.size)])
    gx = np.array([diff(x, i, which="x") for i in range(x.size)])
    gy = np.array([diff(y, i, which="y") for i in range(y.size)])
    return gq, gp, gx, gy


def hybrid_poisson(f1, f2, z: HybridPoint, hbar: float = 1.0,
                   step: float = FD_STEP, grad1=None, grad2=None) -> float:
    """Composite Poisson bracket {f1, f2} at a hybrid point.

    The fields are callables f(q, p, x, y) -> float on the local
    coordinates.  The bracket is the canonical classical bracket plus
    1/hbar times the canonical bracket in the quantum chart coordinates.
    Gradients are taken by central differences with the given step unless
    exact gradient callables (returning (dq, dp, dx, dy)) are supplied.
    """
    q, p = z.classical.q, z.classical.p
    x, y = z.quantum.x, z.quantum.y
    g1 = grad1(q, p, x, y) if grad1 is not None else _field_gradient(f1, q, p, x, y, step)
    g2 = grad2(q, p, x, y) if grad2 is not None else _field_gradient(f2, q, p, x, y, step)
    classical = float(g1[0] @ g2[1] - g2[0] @ g1[1]) if q.size else 0.0
    quantum = float(g1[2] @ g2[3] - g2[2] @ g1[3])
    return classical + quantum / hbar


class Tangent(NamedTuple):
    dq: np.ndarray
    dp: np.ndarray
    dx: np.ndarray
    dy: np.ndarray


def vector_field(hamiltonian: HybridHamiltonian, z: HybridPoint) -> Tangent:
    """Closed form of the Hamiltonian vector field at a hybrid point.

    Classical part: dq_i = dH_c/dp_i + <dV/dp_i>, dp_i = -dH_c/dq_i -
    <dV/dq_i>.  Quantum part: the chart image of dc/dt = (H_q + V(q, p)) c
    / (i hbar).  Agrees with the composite bracket applied to the
    coordinate functions.
    """
    q, p = z.classical.q, z.classical.p
    pt = z.quantum
    if pt.dim != hamiltonian.dim or z.classical.dof != hamiltonian.dof:
        raise DimensionMismatch("hybrid point does not match Hamiltonian dimensions")
    k = q.size
    if k > 0:
        Q, P, C = q[None, :], p[None, :], pt.amplitudes[None, :]
        dq = hamiltonian.h_c.grad_p(q, p) + hamiltonian.v_int.exp_grad_p_batch(Q, P, C)[0]
        dp = -hamiltonian.h_c.grad_q(q, p) - hamiltonian.v_int.exp_grad_q_batch(Q, P, C)[0]
        h_full = hamiltonian.h_q + hamiltonian.v_int.operator(q, p)
    else:
        dq = np.zeros(0)
        dp = np.zeros(0)
        h_full = hamiltonian.h_q
    dc = h_full @ pt.amplitudes / (1j * hamiltonian.hbar)
    return Tangent(dq, dp, SQRT2 * dc.real, SQRT2 * dc.imag)


# ---------------------------------------------------------------------------
# RK4 integration
# ---------------------------------------------------------------------------

def make_batch_derivative(hamiltonian: HybridHamiltonian):
    """Derivative function over stacked particles (Q, P, C) -> (dQ, dP, dC)."""
    hc = hamiltonian.h_c
    vint = hamiltonian.v_int
    hq_t = hamiltonian.h_q.T.copy()
    scale = -1j / hamiltonian.hbar

    def deriv(Q, P, C):
        dQ = hc.grad_p_batch(Q, P) + vint.exp_grad_p_batch(Q, P, C)
        dP = -hc.grad_q_batch(Q, P) - vint.exp_grad_q_batch(Q, P, C)
        dC = scale * (C @ hq_t + vint.apply_batch(Q, P, C))
        return dQ, dP, dC

    return deriv


def rk4_step(deriv, Q, P, C, dt):
    """One classical RK4 step of the stacked state."""
    k1q, k1p, k1c = deriv(Q, P, C)
    h = 0.5 * dt
    k2q, k2p, k2c = deriv(Q + h * k1q, P + h * k1p, C + h * k1c)
    k3q, k3p, k3c = deriv(Q + h * k2q, P + h * k2p, C + h * k2c)
    k4q, k4p, k4c = deriv(Q + dt * k3q, P + dt * k3p, C + dt * k3c)
    w = dt / 6.0
    return (Q + w * (k1q + 2 * k2q + 2 * k3q + k4q),
            P + w * (k1p + 2 * k2p + 2 * k3p + k4p),
            C + w * (k1c + 2 * k2c + 2 * k3c + k4c))


def norm_drift(C) -> np.ndarray:
    """|<c|c> - 1| per particle."""
    return np.abs(np.einsum("ni,ni->n", C.conj(), C).real - 1.0)


def run_rk4(deriv, Q, P, C, dt, n_steps, drift_limit=NORM_DRIFT_LIMIT):
    """Advance stacked particles n_steps; reject on excessive norm drift."""
    for step in range(n_steps):
        Q, P, C = rk4_step(deriv, Q, P, C, dt)
        drift = norm_drift(C)
        worst = int(drift.argmax()) if drift.size else 0
        if drift.size and drift[worst] > drift_limit:
            raise StepRejected(
                f"norm drift {drift[worst]:.3e} exceeds {drift_limit:.1e} at step "
                f"{step + 1} (dt too large)", particle=worst, step=step + 1)
    return Q, P, C


class Trajectory:
    """Solution curve of the hybrid equations of motion.

    Stores the coordinate history plus per-step diagnostics: relative
    total-energy drift and quantum norm drift.
    """

    def __init__(self, times, qs, ps, xs, ys, energy_drift, norm_drift):
        self.times = times
        self.qs = qs
        self.ps = ps
        self.xs = xs
        self.ys = ys
        self.energy_drift = energy_drift
        self.norm_drift = norm_drift
        self._points = None
        if np.any(np.diff(times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def points(self):
        if self._points is None:
            self._points = [
                HybridPoint(ClassicalPoint(self.qs[i], self.ps[i]),
                            QuantumPoint._unchecked(self.xs[i], self.ys[i]))
                for i in range(self.times.size)
            ]
        return self._points

    @property
    def final(self) -> HybridPoint:
        return self.points[-1]


def step_schedule(T: float, dt: float):
    """Full steps of dt plus one partial step landing exactly on |T|.

    Returns (n_full, remainder) for the unsigned span; the remainder is
    dropped when it is negligible against dt.
    """
    span = abs(T)
    n_full = int(np.floor(span / dt + 1e-9))
    remainder = span - n_full * dt
    if remainder <= 1e-9 * dt:
        remainder = 0.0
    return n_full, remainder


def integrate(hamiltonian: HybridHamiltonian, z0: HybridPoint, T: float,
              dt: float) -> Trajectory:
    """Integrate a single hybrid trajectory with fixed-step RK4.

    Takes floor(T/dt) full steps plus one shorter final step, so the
    trajectory ends exactly at T.  Raises StepRejected when the quantum
    norm drifts beyond 1e-6 at any step.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if not 0 < dt <= T:
        raise ValueError("dt must satisfy 0 < dt <= T")
    if z0.quantum.dim != hamiltonian.dim or z0.classical.dof != hamiltonian.dof:
        raise DimensionMismatch("initial point does not match Hamiltonian dimensions")
    n_full, remainder = step_schedule(T, dt)
    steps = [dt] * n_full + ([remainder] if remainder else [])
    n_steps = len(steps)
    k, d = hamiltonian.dof, hamiltonian.dim

    deriv = make_batch_derivative(hamiltonian)
    Q = z0.classical.q[None, :].copy()
    P = z0.classical.p[None, :].copy()
    C = z0.quantum.amplitudes[None, :]

    times = np.concatenate([np.arange(n_full + 1) * dt,
                            [T] if remainder else []])
    qs = np.empty((n_steps + 1, k)); ps = np.empty((n_steps + 1, k))
    xs = np.empty((n_steps + 1, d)); ys = np.empty((n_steps + 1, d))
    e_drift = np.empty(n_steps + 1); n_drift = np.empty(n_steps + 1)

    e0 = total_energy_batch(hamiltonian, Q, P, C)[0]
    e_scale = max(1.0, abs(e0))

    def record(i, Q, P, C):
        qs[i], ps[i] = Q[0], P[0]
        xs[i], ys[i] = SQRT2 * C[0].real, SQRT2 * C[0].imag
        e_drift[i] = abs(total_energy_batch(hamiltonian, Q, P, C)[0] - e0) / e_scale
        n_drift[i] = abs((C[0].conj() @ C[0]).real - 1.0)

    record(0, Q, P, C)
    for step, h in enumerate(steps, start=1):
        Q, P, C = rk4_step(deriv, Q, P, C, h)
        record(step, Q, P, C)
        if n_drift[step] > NORM_DRIFT_LIMIT:
            raise StepRejected(
                f"norm drift {n_drift[step]:.3e} exceeds {NORM_DRIFT_LIMIT:.1e} "
                f"at step {step} (dt too large)", particle=0, step=step)

    return Trajectory(times, qs, ps, xs, ys, e_drift, n_drift)
