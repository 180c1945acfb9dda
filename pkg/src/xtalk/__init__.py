"""Crosstalk-robust quantum control toolkit."""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from ._backend import BACKEND
from .model import (DeviceModel, ControlField, GaussianBand, Lorentzian, NoiseModel, OneOverF,
                    PulseSchedule, Segment, Tabulated, White, idle, validate_device)
from .control import (build_dd_schedule, build_fttps, control_matrix, pattern_crdd, pattern_crfttps,
                      uniform_schedule)
from .cumulant import (CumulantModel, check_suppression, chi_overlaps, gamma_overlaps,
                       predict_expectation, predict_fidelity)
from .noisegen import design_ma, empirical_psd, sample_trajectory
from .sim import SimConfig, evolve, run_monte_carlo
from .qns import design_inversion, reconstruct, reconstruction_error
from .analysis import bootstrap, fit_decay, improvement_ratios, time_avg_fidelity

__all__ = [
    "BACKEND", "DeviceModel", "ControlField", "GaussianBand", "Lorentzian", "NoiseModel", "OneOverF",
    "PulseSchedule", "Segment", "Tabulated", "White", "idle", "validate_device",
    "build_dd_schedule", "build_fttps", "control_matrix", "pattern_crdd", "pattern_crfttps",
    "uniform_schedule", "CumulantModel", "check_suppression", "chi_overlaps", "gamma_overlaps",
    "predict_expectation", "predict_fidelity", "design_ma", "empirical_psd", "sample_trajectory",
    "SimConfig", "evolve", "run_monte_carlo", "design_inversion", "reconstruct",
    "reconstruction_error", "bootstrap", "fit_decay", "improvement_ratios", "time_avg_fidelity",
]
