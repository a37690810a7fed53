"""Correlated dephasing-noise synthesis, injection, and spectroscopy toolkit."""

from .noise_models import (
    ArmaModel,
    Spectrum,
    Trajectory,
    UnstableModelError,
    autocovariance,
    design_bandpass,
    design_lorentzian,
    design_multiband,
    design_power_law,
    generate_trajectory,
    psd,
)
from .predictor import FitParams, FitResult, fit, predict_survival
from .qns_recon import (
    Decay,
    RankDeficientError,
    SpectrumEstimate,
    bootstrap_spectrum,
    decay_from_survival,
    reconstruct_spectrum,
    subtract_native,
)
from .qubit_sim import (
    ExperimentRecord,
    GateMode,
    PulseErrorModel,
    SdrMode,
    analytic_survival,
    run_experiment,
    run_shot,
)
from .seeds import SeedLineage
from .sequences import (
    FilterFunction,
    PulseSequence,
    chi_time_domain,
    filter_function,
    make_fttps,
    make_rfttps,
    switching_function,
)

__all__ = [
    "ArmaModel",
    "Spectrum",
    "Trajectory",
    "UnstableModelError",
    "autocovariance",
    "design_bandpass",
    "design_lorentzian",
    "design_multiband",
    "design_power_law",
    "generate_trajectory",
    "psd",
    "FitParams",
    "FitResult",
    "fit",
    "predict_survival",
    "Decay",
    "RankDeficientError",
    "SpectrumEstimate",
    "bootstrap_spectrum",
    "decay_from_survival",
    "reconstruct_spectrum",
    "subtract_native",
    "ExperimentRecord",
    "GateMode",
    "PulseErrorModel",
    "SdrMode",
    "analytic_survival",
    "run_experiment",
    "run_shot",
    "SeedLineage",
    "FilterFunction",
    "PulseSequence",
    "chi_time_domain",
    "filter_function",
    "make_fttps",
    "make_rfttps",
    "switching_function",
]

__version__ = "0.1.0"
