"""Exception types shared across the package."""


class SimulationError(Exception):
    """Base class for all hqcsim errors."""


class DimensionMismatch(SimulationError):
    """Operator, state or grid dimensions are inconsistent."""


class NonUnitVector(SimulationError):
    """A state vector or chart point is off the unit-norm shell."""


class NotHermitian(SimulationError):
    """A matrix that must be Hermitian is not, within tolerance."""


class InvalidDensityMatrix(SimulationError):
    """A density matrix violates positivity or unit trace."""


class StepRejected(SimulationError):
    """Integration step produced unacceptable norm drift (dt too large)."""

    def __init__(self, message, particle=None, step=None):
        super().__init__(message)
        self.particle = particle
        self.step = step


class RejectionStall(SimulationError):
    """Rejection sampler acceptance rate fell below the stall threshold."""


class UnsupportedTarget(SimulationError):
    """Requested target state is outside the supported family."""


class LowMass(SimulationError):
    """Classical cell carries too little probability mass for a reliable
    conditional estimate."""


class EmptyCloud(SimulationError):
    """Operation requires a non-empty particle cloud."""


class UnsupportedHamiltonian(SimulationError):
    """Hamiltonian violates the preconditions of a closed-form oracle."""


class ConfigInvalid(SimulationError):
    """Scenario configuration failed validation.

    Carries a list of field-level messages.
    """

    def __init__(self, messages):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = list(messages)
        super().__init__("; ".join(self.messages))
