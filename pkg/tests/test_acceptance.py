"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line with the measured values (run with -s to see them all)."""

import numpy as np
import pytest

from hqcsim import presets
from hqcsim.dynamics import ClassicalPoint, integrate
from hqcsim.ensembles import (quadraticity_residual, same_moment_pair, sample,
                              transport)
from hqcsim.ensembles import DensitySpec, GaussianClassical, QuadraticFormQuantum
from hqcsim.estimators import (ClassicalGrid, bin_state_histogram,
                               conditional_state, estimate_quantum_state,
                               hermitian_propagator, mc_distance_band,
                               mc_error_band, mixture_derivative_estimate,
                               trace_distance, unitary_oracle)
from hqcsim.geometry import expectation, from_coordinates, quantum_poisson, to_coordinates
from hqcsim.runner import run_simulate, write_result

from conftest import random_hermitian, random_unit


def report(num, name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num:2d} ({name}): {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


@pytest.fixture(scope="module")
def qubit_osc():
    cfg = presets.qubit_oscillator()
    return cfg, cfg.build_hamiltonian()


def test_criterion_01_chart_and_algebra():
    rng = np.random.default_rng(101)
    chart_err = 0.0
    for _ in range(100):
        c = random_unit(rng, int(rng.integers(2, 9)))
        chart_err = max(chart_err, np.abs(from_coordinates(to_coordinates(c)) - c).max())
    bracket_err = 0.0
    for i in range(100):
        d = (2, 3, 4)[i % 3]
        a, b = random_hermitian(rng, d), random_hermitian(rng, d)
        pt = to_coordinates(random_unit(rng, d))
        bracket_err = max(bracket_err, abs(
            quantum_poisson(a, b, pt, hbar=1.0)
            - expectation((a @ b - b @ a) / 1j, pt)))
    ok = chart_err < 1e-12 and bracket_err < 1e-9
    report(1, "chart and algebra", ok,
           f"round-trip {chart_err:.2e} < 1e-12, bracket identity {bracket_err:.2e} < 1e-9")


def test_criterion_02_schrodinger_equivalence():
    from hqcsim.dynamics import HybridPoint

    cfg = presets.decoupled_qubit()
    hamiltonian = cfg.build_hamiltonian()
    c0 = np.array([1, 1], dtype=complex) / np.sqrt(2)
    z0 = HybridPoint(ClassicalPoint([1.0], [0.0]), to_coordinates(c0))
    traj = integrate(hamiltonian, z0, 10.0, 1e-3)
    c_exact = hermitian_propagator(hamiltonian.h_q, 10.0) @ c0
    err = abs(1 - abs(np.vdot(c_exact, traj.final.quantum.amplitudes)) ** 2)
    report(2, "Schrodinger equivalence", err < 1e-8,
           f"fidelity error {err:.2e} < 1e-8 at T=10, dt=1e-3")


def test_criterion_03_conservation():
    worst_e = worst_n = 0.0
    for name, builder in presets.BUNDLED.items():
        cfg = builder()
        hamiltonian = cfg.build_hamiltonian()
        cloud = sample(cfg.build_density("a"), 2, cfg.seed, ensemble=9)
        for i in range(2):
            traj = integrate(hamiltonian, cloud.point(i), 10.0, 1e-3)
            worst_e = max(worst_e, traj.energy_drift.max())
            worst_n = max(worst_n, traj.norm_drift.max())
    ok = worst_e < 1e-7 and worst_n < 1e-9
    report(3, "conservation", ok,
           f"energy drift {worst_e:.2e} < 1e-7, norm drift {worst_n:.2e} < 1e-9 "
           f"on all bundled scenarios")


def test_criterion_04_no_interaction_unitarity():
    cfg = presets.decoupled_qubit(particles=10_000)
    hamiltonian = cfg.build_hamiltonian()
    cloud = sample(cfg.build_density("a"), cfg.particles, cfg.seed, ensemble=0)
    rho0 = estimate_quantum_state(cloud)
    band = mc_distance_band(cfg.particles)
    worst = 0.0
    for t in (1.0, 5.0, 10.0):
        cloud = transport(cloud, hamiltonian, t - cloud.time, cfg.dt)
        dist = trace_distance(estimate_quantum_state(cloud),
                              unitary_oracle(rho0, hamiltonian.h_q, t, hamiltonian.hbar))
        worst = max(worst, dist)
    report(4, "no-interaction unitarity", worst <= band,
           f"max trace distance {worst:.2e} <= {band:.2f} at t in (1, 5, 10), n=1e4")


def test_criterion_05_frozen_classical_conditionals():
    cfg = presets.frozen_classical(particles=20_000)
    hamiltonian = cfg.build_hamiltonian()
    t, g = 5.0, cfg.interaction_strength
    cloud = transport(sample(cfg.build_density("a"), cfg.particles, cfg.seed, ensemble=0),
                      hamiltonian, t, cfg.dt)
    grid = cfg.build_grid()
    hist = bin_state_histogram(cloud, grid)
    flat_idx, inside = grid.locate(cloud.q, cloud.p)
    width = (grid.q_bounds[0][1] - grid.q_bounds[0][0]) / grid.q_bins[0]
    checked = 0
    worst_excess = -np.inf
    for i in range(grid.n_cells):
        n_cell = int(((flat_idx == i) & inside).sum())
        if n_cell < 100:
            continue
        q_star = grid.cell_center((i,))
        u = hermitian_propagator(
            hamiltonian.h_q + hamiltonian.v_int.operator(q_star, np.zeros(1)),
            t, hamiltonian.hbar)
        oracle = u @ (np.eye(2) / 2) @ u.conj().T
        err = np.linalg.norm(conditional_state(hist, i).matrix - oracle, ord=2)
        bound = 3 / np.sqrt(n_cell) + t * g * width
        worst_excess = max(worst_excess, err - bound)
        checked += 1
    ok = checked >= 10 and worst_excess < 0
    report(5, "frozen-classical conditionals", ok,
           f"{checked} cells with >=100 particles, worst (error - bound) = "
           f"{worst_excess:.3e} < 0 at t=5")


def test_criterion_06_mixture_derivative(qubit_osc):
    cfg, hamiltonian = qubit_osc
    n = 100_000
    delta = 1e-2
    spec = cfg.build_density("b")  # Haar factor
    cloud = sample(spec, n, cfg.seed, ensemble=0)
    bound = 5 * (mc_error_band(n) + delta**2)
    worst = 0.0
    for t in (1.0, 5.0):
        minus = transport(cloud, hamiltonian, (t - delta) - cloud.time, cfg.dt)
        center = transport(minus, hamiltonian, delta, cfg.dt)
        plus = transport(center, hamiltonian, delta, cfg.dt)
        fd = (estimate_quantum_state(plus).matrix
              - estimate_quantum_state(minus).matrix) / (2 * delta)
        rhs = mixture_derivative_estimate(center, hamiltonian)
        worst = max(worst, np.linalg.norm(fd - rhs, ord=2))
        assert abs(np.trace(rhs).real) < 1e-10
        cloud = center
    report(6, "mixture derivative vs finite difference", worst <= bound,
           f"max operator-norm gap {worst:.3e} <= {bound:.3e} at t in (1, 5), n=1e5")


def test_criterion_07_headline_separation(qubit_osc):
    cfg, hamiltonian = qubit_osc
    n = 10_000
    classical = GaussianClassical([presets.Q_MEAN], [0.0], presets.SIGMA, presets.SIGMA)
    spec_a, spec_b = same_moment_pair(np.eye(2) / 2, classical)
    cloud_a = sample(spec_a, n, cfg.seed, ensemble=0)
    cloud_b = sample(spec_b, n, cfg.seed, ensemble=1)
    band = mc_distance_band(n)
    initial = trace_distance(estimate_quantum_state(cloud_a),
                             estimate_quantum_state(cloud_b))
    peak = 0.0
    for step in range(20):
        cloud_a = transport(cloud_a, hamiltonian, 0.5, cfg.dt)
        cloud_b = transport(cloud_b, hamiltonian, 0.5, cfg.dt)
        peak = max(peak, trace_distance(estimate_quantum_state(cloud_a),
                                        estimate_quantum_state(cloud_b)))
    # Regression floor frozen from the first validated run, which peaked at
    # 0.235 (seeds vary this by about +-0.01); well above the 0.06 noise band.
    floor = 0.2
    ok = initial <= band and peak >= floor
    report(7, "headline separation", ok,
           f"initial distance {initial:.3f} <= {band:.2f}, peak distance "
           f"{peak:.3f} >= {floor} over t in (0, 10]")


def test_criterion_08_quadraticity_drift(qubit_osc):
    cfg, hamiltonian = qubit_osc
    decoupled = presets.decoupled_qubit().build_hamiltonian()
    base = np.eye(2, dtype=complex) + 0.4 * presets.PAULI_Z

    def op(cp):
        return base + 0.2 * cp.q[0] * presets.PAULI_X

    spec = DensitySpec(GaussianClassical([1.0], [0.0], 0.2, 0.2),
                       QuadraticFormQuantum(2, op))
    cp = ClassicalPoint([1.0], [0.0])
    res0 = quadraticity_residual(spec, hamiltonian, cp, 0.0, 64, seed=801)
    res_int = quadraticity_residual(spec, hamiltonian, cp, 5.0, 64, seed=801)
    res_dec = quadraticity_residual(spec, decoupled, cp, 5.0, 64, seed=801)
    # Interaction must grow the residual by 10x and beat the regression
    # floor (first validated run: 0.87); without coupling the flow is
    # linear-unitary, so the residual stays at the module bound 1e-6.
    ok = res0 < 1e-8 and res_int >= 10 * res0 and res_int >= 0.5 and res_dec < 1e-6
    report(8, "quadraticity drift", ok,
           f"residuals: start {res0:.2e}, coupled t=5 {res_int:.2f} "
           f"(>= 10x start and >= 0.5), decoupled t=5 {res_dec:.2e} < 1e-6")


def test_criterion_09_estimator_identity(qubit_osc):
    cfg, hamiltonian = qubit_osc
    cloud = transport(sample(cfg.build_density("b"), 4000, cfg.seed, ensemble=0),
                      hamiltonian, 1.0, cfg.dt)
    grid = ClassicalGrid([(0.2, 1.2)], [10])  # partial cover on purpose
    hist = bin_state_histogram(cloud, grid)
    rho = estimate_quantum_state(cloud)
    identity = np.abs(hist.cell_sum() + hist.outside - rho.matrix).max()
    min_eig = min(np.linalg.eigvalsh(hist.cells.reshape(-1, 2, 2)).min(),
                  rho.eigenvalues().min())
    trace_dev = abs(rho.matrix.trace().real - 1.0)
    ok = identity < 1e-12 and min_eig > -1e-9 and trace_dev < 1e-9
    report(9, "estimator identity and positivity", ok,
           f"cells+remainder vs global {identity:.2e} < 1e-12, min eigenvalue "
           f"{min_eig:.2e} > -1e-9, trace deviation {trace_dev:.2e} < 1e-9")


def test_criterion_10_determinism(tmp_path):
    cfg = presets.decoupled_qubit(particles=500)
    cfg.horizon = 1.0
    cfg.observation_times = [0.0, 1.0]
    paths = []
    for name in ("first", "second"):
        record = run_simulate(cfg)
        paths.append(write_result(record, tmp_path / name))
    same = all(a.read_bytes() == b.read_bytes() for a, b in zip(*paths))
    report(10, "determinism", same,
           "two runs with identical config and seed produced byte-identical "
           "result files")
