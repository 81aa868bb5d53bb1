"""Spin physics of a single defect-center electron coupled to nearby nuclei:
energy levels, ODMR spectra, pulse-sequence dynamics and field fitting."""

from .hamiltonian import (
    Nucleus,
    SpinSystem,
    axial_tensor,
    build_hamiltonian,
    carbon13,
    field_vector,
    isotropic_tensor,
    nitrogen14,
    nv_system,
)
from .spectra import (
    EigenSystem,
    SpectrumLine,
    broaden,
    eigensolve,
    ms0_populations,
    transition_spectrum,
)
from .dynamics import (
    DecoherenceChannel,
    Delay,
    Pulse,
    ReadoutModel,
    Sequence,
    Simulator,
    apply_pulse,
    ensemble_average,
    evolve,
    polarize,
    run_sequence,
)
from .analysis import (
    PowerSpectrum,
    TimeTrace,
    fft_spectrum,
    find_peaks,
    fit_exponential,
)
from .fitting import FitProblem, FitResult, fit_field, objective

__all__ = [
    "Nucleus",
    "SpinSystem",
    "axial_tensor",
    "build_hamiltonian",
    "carbon13",
    "field_vector",
    "isotropic_tensor",
    "nitrogen14",
    "nv_system",
    "EigenSystem",
    "SpectrumLine",
    "broaden",
    "eigensolve",
    "ms0_populations",
    "transition_spectrum",
    "DecoherenceChannel",
    "Delay",
    "Pulse",
    "ReadoutModel",
    "Sequence",
    "Simulator",
    "apply_pulse",
    "ensemble_average",
    "evolve",
    "polarize",
    "run_sequence",
    "PowerSpectrum",
    "TimeTrace",
    "fft_spectrum",
    "find_peaks",
    "fit_exponential",
    "FitProblem",
    "FitResult",
    "fit_field",
    "objective",
]

__version__ = "0.1.0"
