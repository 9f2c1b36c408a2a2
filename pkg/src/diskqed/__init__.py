"""Steady-state spectroscopy of a fiber-coupled microdisk cavity with a single quantum dot.

Modules, bottom-up: ``units`` (conversions and taper calibration),
``operators`` (truncated Fock-space algebra), ``model`` (Hamiltonian and
decay channels), ``solver`` (steady states and spectra), ``analysis``,
``experiments`` (sweeps), ``fitting``, ``formats`` and ``cli``.
"""

__version__ = "0.1.0"

from .model import DriveSpec, SystemParams, table_ii
from .operators import HilbertLayout
from .solver import QMESolver, SolverError, Spectrum, SteadyState, spectrum, steady_state, weak_drive_spectrum
from .units import CalibInput, CalibResult, UncertaintyBudget, intracavity_photon_number

__all__ = [
    "CalibInput",
    "CalibResult",
    "DriveSpec",
    "HilbertLayout",
    "QMESolver",
    "SolverError",
    "Spectrum",
    "SteadyState",
    "SystemParams",
    "UncertaintyBudget",
    "intracavity_photon_number",
    "spectrum",
    "steady_state",
    "table_ii",
    "weak_drive_spectrum",
]
