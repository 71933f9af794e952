"""Bundled scenario definitions.

Three desk-scale scenarios cover the behaviors the verification suites
need: a decoupled qubit for unitarity checks, a frozen classical sector
for the per-position oracle, and a qubit coupled to a classical oscillator
as the minimal system with genuine back-reaction.  The TOML files under
scenarios/ are emitted from these builders.
"""

from __future__ import annotations

import numpy as np

from .config import DensityConfig, ScenarioConfig

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

OMEGA = 1.0
COUPLING = 0.5
SIGMA = 0.2
Q_MEAN = 1.0


def _haar_gaussian_density() -> DensityConfig:
    return DensityConfig(
        classical_kind="gaussian", q0=[Q_MEAN], p0=[0.0],
        sigma_q=[SIGMA], sigma_p=[SIGMA], quantum_kind="haar")


def _basis_mixture_density() -> DensityConfig:
    return DensityConfig(
        classical_kind="gaussian", q0=[Q_MEAN], p0=[0.0],
        sigma_q=[SIGMA], sigma_p=[SIGMA], quantum_kind="point_mixture",
        components=[(0.5, np.array([1, 0], dtype=complex)),
                    (0.5, np.array([0, 1], dtype=complex))])


def decoupled_qubit(particles: int = 10_000, seed: int = 20260801) -> ScenarioConfig:
    """Qubit and oscillator without coupling; quantum evolution is unitary."""
    return ScenarioConfig(
        hilbert_dim=2, classical_dof=1, hbar=1.0,
        classical_kind="harmonic", classical_params={"mass": 1.0, "frequency": 1.0},
        h_q=0.5 * OMEGA * PAULI_Z,
        interaction_kind="none", interaction_strength=0.0, interaction_operator=None,
        dt=1e-3, horizon=10.0, observation_times=[0.0, 1.0, 5.0, 10.0],
        particles=particles, seed=seed, mass_floor=None,
        density_a=_haar_gaussian_density(), density_b=None,
        grid_coordinates=None, output_directory="runs/decoupled_qubit")


def frozen_classical(particles: int = 20_000, seed: int = 20260802) -> ScenarioConfig:
    """Vanishing classical Hamiltonian with a position-only coupling, so
    every trajectory keeps its q and evolves unitarily under H_q + V(q)."""
    return ScenarioConfig(
        hilbert_dim=2, classical_dof=1, hbar=1.0,
        classical_kind="zero", classical_params={},
        h_q=0.5 * OMEGA * PAULI_Z,
        interaction_kind="linear_q", interaction_strength=COUPLING,
        interaction_operator=PAULI_X,
        dt=1e-3, horizon=5.0, observation_times=[0.0, 5.0],
        particles=particles, seed=seed, mass_floor=None,
        density_a=_haar_gaussian_density(), density_b=None,
        grid_coordinates="q",
        grid_q_bounds=[[Q_MEAN - 3 * SIGMA, Q_MEAN + 3 * SIGMA]], grid_q_bins=[24],
        output_directory="runs/frozen_classical")


def qubit_oscillator(particles: int = 10_000, seed: int = 20260803) -> ScenarioConfig:
    """Qubit coupled to a classical harmonic oscillator through g q sigma_x;
    the minimal hybrid with genuine back-reaction.  The two configured
    densities share the maximally mixed first moment."""
    return ScenarioConfig(
        hilbert_dim=2, classical_dof=1, hbar=1.0,
        classical_kind="harmonic", classical_params={"mass": 1.0, "frequency": 1.0},
        h_q=0.5 * OMEGA * PAULI_Z,
        interaction_kind="linear_q", interaction_strength=COUPLING,
        interaction_operator=PAULI_X,
        dt=1e-3, horizon=10.0,
        observation_times=[round(0.5 * i, 10) for i in range(21)],
        particles=particles, seed=seed, mass_floor=None,
        density_a=_basis_mixture_density(), density_b=_haar_gaussian_density(),
        grid_coordinates=None, output_directory="runs/qubit_oscillator")


BUNDLED = {
    "decoupled_qubit": decoupled_qubit,
    "frozen_classical": frozen_classical,
    "qubit_oscillator": qubit_oscillator,
}
