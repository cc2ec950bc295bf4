"""Quantum Brownian motion: master equations and stochastic Schrodinger
equations for a damped oscillator in a truncated Fock basis."""

from .errors import (
    BrownianSSEError,
    DegenerateNormError,
    DimensionMismatchError,
    InsufficientSamplesError,
    IntegrationDivergedError,
    InvalidDimensionError,
    NoConvergenceError,
    TrajectoryError,
    TruncationLeakageError,
    UnsupportedVariantError,
)
from .fock import (
    DensityMatrix,
    FockSpace,
    Moments,
    Operator,
    PureState,
    coherent_state,
    fock_state,
    harmonic_hamiltonian,
    kerr_hamiltonian,
    moments,
    quadratures,
)

__version__ = "0.1.0"
