"""Simulation toolkit for the quantum Rabi-Stark model.

Submodules
----------
qspace
    Qubit (x) truncated-Fock linear algebra.
models
    Hamiltonians, master-equation generator, trapped-ion drive and calibration.
effective
    Closed-form detunings, Stark shifts and k-photon channels.
dynamics
    Pure-state and density-matrix propagation, observables.
experiments
    Resonance scans, time traces and ion-vs-model comparisons.
cli
    Config-driven command line front end.
"""
__version__ = "0.1.0"

from .qspace import HilbertSpace, QOperator, StateVector, DensityMatrix, basis_state  # noqa: E402
from .models import (  # noqa: E402
    ModelParams,
    LindbladParams,
    IonDriveParams,
    rabi_stark_hamiltonian,
    sigma_x_rabi_stark_hamiltonian,
    ion_calibration,
    design_ion_drive,
    kHz,
)
from .effective import k_photon_channel, stark_shifts, solve_resonance  # noqa: E402
from .dynamics import TimeGrid, propagate_state, propagate_density  # noqa: E402

__all__ = [
    "__version__",
    "HilbertSpace",
    "QOperator",
    "StateVector",
    "DensityMatrix",
    "basis_state",
    "ModelParams",
    "LindbladParams",
    "IonDriveParams",
    "rabi_stark_hamiltonian",
    "sigma_x_rabi_stark_hamiltonian",
    "ion_calibration",
    "design_ion_drive",
    "kHz",
    "k_photon_channel",
    "stark_shifts",
    "solve_resonance",
    "TimeGrid",
    "propagate_state",
    "propagate_density",
]
