"""Monte Carlo simulator for statistical ensembles of coupled
classical-quantum Hamiltonian systems.

The quantum sector lives on a real symplectic chart of its Hilbert space,
the classical sector on an ordinary phase space; densities on the product
are transported along the mean-field Hamiltonian flow by following
weighted particles, and quantum statistical operators are estimated from
the transported clouds.
"""

from .config import ScenarioConfig, emit_config, parse_config, parse_config_text
from .dynamics import (ClassicalPoint, CustomClassical, CustomInteraction,
                       FreeClassical, HarmonicClassical, HybridHamiltonian,
                       HybridPoint, LinearQCoupling, PolynomialClassical,
                       Tangent, Trajectory, ZeroClassical, ZeroInteraction,
                       hamilton_function, hybrid_poisson, integrate,
                       total_energy, total_energy_batch, vector_field)
from .ensembles import (DensitySpec, GaussianClassical, HaarQuantum,
                        ParticleCloud, PointMassClassical, PointMixtureQuantum,
                        QuadraticFormQuantum, pullback_density,
                        quadraticity_residual, same_moment_pair, sample,
                        transport)
from .errors import (ConfigInvalid, DimensionMismatch, EmptyCloud,
                     InvalidDensityMatrix, LowMass, NonUnitVector,
                     NotHermitian, RejectionStall, SimulationError,
                     StepRejected, UnsupportedHamiltonian, UnsupportedTarget)
from .estimators import (ClassicalGrid, StateHistogram, bin_state_histogram,
                         conditional_state, estimate_quantum_state,
                         frozen_classical_oracle, hermitian_propagator,
                         mc_distance_band, mc_error_band,
                         mixture_derivative_estimate, trace_distance,
                         unitary_oracle)
from .geometry import (QuantumDensityMatrix, QuantumPoint, expectation,
                       expectation_gradient, from_coordinates, projector,
                       quantum_poisson, require_hermitian, to_coordinates)
from .runner import ResultRecord, run_compare, run_simulate, write_result
from .verification import run_verify

__version__ = "0.1.0"
