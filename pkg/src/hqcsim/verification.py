"""Invariant verification suites behind the ``verify`` command.

Each suite runs a fixed set of numerical checks and reports the measured
value, the bound and the verdict; the process exit status reflects the
overall verdict.  Failures are report entries, never exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import presets
from .dynamics import (ClassicalPoint, HarmonicClassical, HybridHamiltonian,
                       HybridPoint, LinearQCoupling, ZeroInteraction,
                       hamilton_function, hybrid_poisson, integrate,
                       vector_field)
from .ensembles import (DensitySpec, GaussianClassical, HaarQuantum,
                        pullback_density, sample, transport)
from .estimators import (ClassicalGrid, bin_state_histogram,
                         estimate_quantum_state, hermitian_propagator,
                         mc_distance_band, mc_error_band,
                         mixture_derivative_estimate, trace_distance,
                         unitary_oracle)
from .geometry import (QuantumPoint, expectation, from_coordinates, projector,
                       quantum_poisson, to_coordinates)

SUITES = ("identities", "dynamics", "ensembles", "operators")


@dataclass
class CheckResult:
    name: str
    measured: float
    bound: float
    comparator: str  # "<=" or ">="
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "measured": self.measured,
                "bound": self.bound, "comparator": self.comparator,
                "verdict": "pass" if self.passed else "fail"}


def _check(name, measured, bound, comparator="<=") -> CheckResult:
    measured = float(measured)
    bound = float(bound)
    ok = measured <= bound if comparator == "<=" else measured >= bound
    return CheckResult(name, measured, bound, comparator, ok)


def _random_unit(rng, d):
    z = rng.normal(size=d) + 1j * rng.normal(size=d)
    return z / np.linalg.norm(z)


def _random_hermitian(rng, d):
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (m + m.conj().T) / 2


# ---------------------------------------------------------------------------

def identities_suite() -> list:
    rng = np.random.default_rng(11_0001)
    checks = []

    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 9))
        c = _random_unit(rng, d)
        worst = max(worst, np.abs(from_coordinates(to_coordinates(c)) - c).max())
    checks.append(_check("chart_round_trip", worst, 1e-12))

    worst = 0.0
    for i in range(100):
        d = (2, 3, 4)[i % 3]
        a = _random_hermitian(rng, d)
        b = _random_hermitian(rng, d)
        pt = to_coordinates(_random_unit(rng, d))
        lhs = quantum_poisson(a, b, pt, hbar=1.0)
        rhs = expectation((a @ b - b @ a) / 1j, pt)
        worst = max(worst, abs(lhs - rhs))
    checks.append(_check("bracket_commutator_identity", worst, 1e-9))

    worst = 0.0
    for _ in range(50):
        d = int(rng.integers(2, 5))
        a = _random_hermitian(rng, d)
        b = _random_hermitian(rng, d)
        c = _random_unit(rng, d)
        phase = np.exp(1j * rng.uniform(0, 2 * np.pi))
        p1, p2 = to_coordinates(c), to_coordinates(phase * c)
        worst = max(worst,
                    abs(expectation(a, p1) - expectation(a, p2)),
                    np.abs(projector(p1).matrix - projector(p2).matrix).max(),
                    abs(quantum_poisson(a, b, p1) - quantum_poisson(a, b, p2)))
    checks.append(_check("global_phase_invariance", worst, 1e-12))

    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(2, 6))
        a = _random_hermitian(rng, d)
        c = _random_unit(rng, d)
        worst = max(worst, abs(np.vdot(c, a @ c).imag))
    checks.append(_check("expectation_real", worst, 1e-12))

    return checks


# ---------------------------------------------------------------------------

def _coordinate_fields(k, d):
    fields = []
    for i in range(k):
        fields.append((f"q{i}", lambda q, p, x, y, i=i: q[i]))
        fields.append((f"p{i}", lambda q, p, x, y, i=i: p[i]))
    for j in range(d):
        fields.append((f"x{j}", lambda q, p, x, y, j=j: x[j]))
        fields.append((f"y{j}", lambda q, p, x, y, j=j: y[j]))
    return fields


def dynamics_suite() -> list:
    checks = []
    rng = np.random.default_rng(11_0002)

    # decoupled qubit against the matrix-exponential propagator
    cfg = presets.decoupled_qubit()
    hamiltonian = cfg.build_hamiltonian()
    c0 = np.array([1, 1], dtype=complex) / np.sqrt(2)
    z0 = HybridPoint(ClassicalPoint([1.0], [0.0]), to_coordinates(c0))
    traj = integrate(hamiltonian, z0, 10.0, 1e-3)
    c_end = traj.final.quantum.amplitudes
    c_exact = hermitian_propagator(hamiltonian.h_q, 10.0) @ c0
    fidelity_error = abs(1.0 - abs(np.vdot(c_exact, c_end)) ** 2)
    checks.append(_check("schrodinger_equivalence_fidelity_error", fidelity_error, 1e-8))

    # classical harmonic period
    period_err = max(abs(traj.qs[-1][0] - np.cos(10.0)), abs(traj.ps[-1][0] + np.sin(10.0)))
    checks.append(_check("harmonic_flow_exactness", period_err, 1e-7))

    # conservation on the bundled scenarios
    for name, builder in presets.BUNDLED.items():
        cfg = builder()
        hamiltonian = cfg.build_hamiltonian()
        spec = cfg.build_density("a")
        cloud = sample(spec, 3, cfg.seed, ensemble=7)
        e_worst = n_worst = 0.0
        for i in range(3):
            traj = integrate(hamiltonian, cloud.point(i), 10.0, 1e-3)
            e_worst = max(e_worst, traj.energy_drift.max())
            n_worst = max(n_worst, traj.norm_drift.max())
        checks.append(_check(f"energy_conservation[{name}]", e_worst, 1e-7))
        checks.append(_check(f"norm_conservation[{name}]", n_worst, 1e-9))

    # closed-form vector field vs composite bracket on coordinate functions
    worst = 0.0
    for _ in range(20):
        k = int(rng.integers(1, 3))
        d = int(rng.integers(2, 4))
        h_c = HarmonicClassical(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), k)
        v = LinearQCoupling(rng.uniform(-1, 1), _random_hermitian(rng, d), k)
        hamiltonian = HybridHamiltonian(h_c, _random_hermitian(rng, d), v)
        z = HybridPoint(ClassicalPoint(rng.normal(size=k), rng.normal(size=k)),
                        to_coordinates(_random_unit(rng, d)))
        tangent = vector_field(hamiltonian, z)
        h_field = hamilton_function(hamiltonian)
        named = {name: hybrid_poisson(f, h_field, z, hamiltonian.hbar)
                 for name, f in _coordinate_fields(k, d)}
        ref = np.concatenate([
            [named[f"q{i}"] for i in range(k)], [named[f"p{i}"] for i in range(k)],
            [named[f"x{j}"] for j in range(d)], [named[f"y{j}"] for j in range(d)]])
        closed = np.concatenate([tangent.dq, tangent.dp, tangent.dx, tangent.dy])
        worst = max(worst, np.abs(closed - ref).max())
    checks.append(_check("vector_field_bracket_consistency", worst, 1e-6))

    # with no coupling the classical path ignores the quantum state
    cfg = presets.decoupled_qubit()
    hamiltonian = cfg.build_hamiltonian()
    za = HybridPoint(ClassicalPoint([0.7], [-0.2]), to_coordinates([1, 0]))
    zb = HybridPoint(ClassicalPoint([0.7], [-0.2]),
                     to_coordinates(np.array([1, 1j]) / np.sqrt(2)))
    ta = integrate(hamiltonian, za, 5.0, 1e-3)
    tb = integrate(hamiltonian, zb, 5.0, 1e-3)
    dev = max(np.abs(ta.qs - tb.qs).max(), np.abs(ta.ps - tb.ps).max())
    checks.append(_check("decoupling_classical_independence", dev, 1e-12))

    # time reversal: flip momenta, conjugate amplitudes, integrate back
    cfg = presets.qubit_oscillator()
    hamiltonian = cfg.build_hamiltonian()
    z0 = HybridPoint(ClassicalPoint([1.1], [0.3]),
                     to_coordinates(np.array([0.6, 0.8j], dtype=complex)))
    fwd = integrate(hamiltonian, z0, 5.0, 1e-3)
    zf = fwd.final
    rev0 = HybridPoint(ClassicalPoint(zf.classical.q, -zf.classical.p),
                       QuantumPoint(zf.quantum.x, -zf.quantum.y))
    back = integrate(hamiltonian, rev0, 5.0, 1e-3)
    zb = back.final
    dev = max(np.abs(zb.classical.q - z0.classical.q).max(),
              np.abs(-zb.classical.p - z0.classical.p).max(),
              np.abs(zb.quantum.x - z0.quantum.x).max(),
              np.abs(-zb.quantum.y - z0.quantum.y).max())
    checks.append(_check("time_reversal_consistency", dev, 1e-6))

    return checks


# ---------------------------------------------------------------------------

def ensembles_suite() -> list:
    checks = []

    cfg = presets.qubit_oscillator(particles=2000)
    hamiltonian = cfg.build_hamiltonian()
    spec = cfg.build_density("b")
    cloud = sample(spec, cfg.particles, cfg.seed, ensemble=0)
    moved = transport(cloud, hamiltonian, 2.0, cfg.dt)
    checks.append(_check("weight_conservation",
                         abs(moved.weights.sum() - 1.0), 1e-9))
    checks.append(_check("transport_weight_identity",
                         np.abs(moved.weights - cloud.weights).max(), 0.0))

    again = sample(spec, cfg.particles, cfg.seed, ensemble=0)
    dev = max(np.abs(again.q - cloud.q).max(), np.abs(again.p - cloud.p).max(),
              np.abs(again.c - cloud.c).max())
    checks.append(_check("seeded_determinism", dev, 0.0))

    for d in (2, 3):
        spec_h = DensitySpec(GaussianClassical([0.0], [0.0], 1.0, 1.0), HaarQuantum(d))
        for n in (1000, 10_000, 100_000):
            cloud_h = sample(spec_h, n, 901_234, ensemble=3)
            rho = estimate_quantum_state(cloud_h).matrix
            err = np.linalg.norm(rho - np.eye(d) / d, ord=2)
            checks.append(_check(f"haar_first_moment[d={d},n={n}]", err,
                                 mc_error_band(n)))

    # density constancy along characteristics
    spec = presets.qubit_oscillator().build_density("b")
    probe = sample(spec, 10, 55_771, ensemble=4)
    moved = transport(probe, hamiltonian, 3.0, 1e-3)
    rho0 = spec.density_batch(probe.q, probe.p, probe.c)
    worst = 0.0
    for i in range(len(probe)):
        val = pullback_density(spec, hamiltonian, moved.point(i), moved.time, 1e-3)
        worst = max(worst, abs(val - rho0[i]))
    checks.append(_check("pullback_transport_consistency", worst, 1e-6))

    return checks


# ---------------------------------------------------------------------------

def operators_suite() -> list:
    checks = []

    # estimator identity and positivity on a partially covering grid
    cfg = presets.qubit_oscillator(particles=3000)
    hamiltonian = cfg.build_hamiltonian()
    cloud = sample(cfg.build_density("b"), cfg.particles, cfg.seed, ensemble=0)
    cloud = transport(cloud, hamiltonian, 1.0, cfg.dt)
    grid = ClassicalGrid([(0.2, 1.2)], [10])
    hist = bin_state_histogram(cloud, grid)
    rho = estimate_quantum_state(cloud)
    identity = np.abs(hist.cell_sum() + hist.outside - rho.matrix).max()
    checks.append(_check("histogram_vs_global_identity", identity, 1e-12))
    flat = hist.cells.reshape(-1, hist.dim, hist.dim)
    min_eig = min(np.linalg.eigvalsh(flat).min(), rho.eigenvalues().min())
    checks.append(_check("estimator_positivity", max(0.0, -min_eig), 1e-9))
    checks.append(_check("estimator_trace_one",
                         abs(rho.matrix.trace().real - 1.0), 1e-9))

    # without interaction the mixture follows the unitary conjugation
    cfg = presets.decoupled_qubit(particles=4000)
    hamiltonian = cfg.build_hamiltonian()
    cloud = sample(cfg.build_density("a"), cfg.particles, cfg.seed, ensemble=0)
    rho0 = estimate_quantum_state(cloud)
    moved = transport(cloud, hamiltonian, 5.0, cfg.dt)
    dist = trace_distance(estimate_quantum_state(moved),
                          unitary_oracle(rho0, hamiltonian.h_q, 5.0, hamiltonian.hbar))
    checks.append(_check("no_interaction_unitarity", dist,
                         mc_distance_band(cfg.particles)))

    # interaction makes the mixture's spectrum move
    cfg = presets.qubit_oscillator(particles=10_000)
    hamiltonian = cfg.build_hamiltonian()
    cloud = sample(cfg.build_density("a"), cfg.particles, cfg.seed, ensemble=0)
    eig0 = estimate_quantum_state(cloud).eigenvalues()
    drift = 0.0
    for _ in range(10):
        cloud = transport(cloud, hamiltonian, 1.0, cfg.dt)
        eig = estimate_quantum_state(cloud).eigenvalues()
        drift = max(drift, np.abs(eig - eig0).max())
    checks.append(_check("interaction_moves_spectrum", drift,
                         10 * mc_error_band(cfg.particles), comparator=">="))

    # estimator of the mixture derivative vs a centered difference
    cfg = presets.qubit_oscillator(particles=20_000)
    hamiltonian = cfg.build_hamiltonian()
    cloud = sample(cfg.build_density("b"), cfg.particles, cfg.seed, ensemble=0)
    delta = 1e-2
    minus = transport(cloud, hamiltonian, 1.0 - delta, cfg.dt)
    center = transport(minus, hamiltonian, delta, cfg.dt)
    plus = transport(center, hamiltonian, delta, cfg.dt)
    fd = (estimate_quantum_state(plus).matrix
          - estimate_quantum_state(minus).matrix) / (2 * delta)
    rhs = mixture_derivative_estimate(center, hamiltonian)
    err = np.linalg.norm(fd - rhs, ord=2)
    bound = 5 * (mc_error_band(cfg.particles) + delta**2)
    checks.append(_check("mixture_derivative_vs_finite_difference", err, bound))
    checks.append(_check("mixture_derivative_traceless",
                         abs(np.trace(rhs).real), 1e-10))

    return checks


# ---------------------------------------------------------------------------

def run_verify(suite: str) -> dict:
    """Run one invariant suite (or all) and assemble the report."""
    if suite == "all":
        names = list(SUITES)
    elif suite in SUITES:
        names = [suite]
    else:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES + ('all',)}")
    report = {"suites": {}, "passed": True}
    runners = {"identities": identities_suite, "dynamics": dynamics_suite,
               "ensembles": ensembles_suite, "operators": operators_suite}
    for name in names:
        checks = runners[name]()
        report["suites"][name] = [c.to_dict() for c in checks]
        report["passed"] = report["passed"] and all(c.passed for c in checks)
    return report
