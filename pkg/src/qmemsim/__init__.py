"""Truncated-Fock-space Monte Carlo of a heralded atomic-ensemble quantum memory.

Submodules:

- :mod:`qmemsim.fock` state vectors and the elementary unitaries and measurements
- :mod:`qmemsim.protocol` configuration, calibration and the operation schedule
- :mod:`qmemsim.trajectory` seeded Monte Carlo engine
- :mod:`qmemsim.coincidence` counting, conditional probabilities, g2 and its decay fit
- :mod:`qmemsim.mzi` two-readout interference and visibility estimates
- :mod:`qmemsim.oracle` exact density-matrix reference
- :mod:`qmemsim.experiments` scripted scenarios
"""

from .coincidence import (CoincidenceStats, EstimateWithError, G2DecayFitter, accumulate,
                          conditional_prob, cross_correlation_g2, fit_g2_decay)
from .exceptions import ConfigurationError, FitError, InsufficientStatistics
from .fock import (Mode, StateVector, Truncation, apply_beam_splitter, apply_loss_sampled,
                   apply_two_mode_squeeze, expected_photon_number, measure_click, vacuum)
from .mzi import (FringeFitter, MeasuredProbs, PhaseScanPoint, VisibilityFit,
                  estimate_visibility_VE, fit_visibility, interfere_readouts)
from .oracle import DensityMatrix, click_probabilities_exact, evolve_exact
from .protocol import (DelayMode, ProtocolConfig, analytic_amplification, calibrate_coupling,
                       high_order_mean, memory_transmission)
from .trajectory import TrialOutcome, run_trial, simulate

__version__ = "0.1.0"

__all__ = [
    "CoincidenceStats", "EstimateWithError", "G2DecayFitter", "accumulate", "conditional_prob",
    "cross_correlation_g2", "fit_g2_decay", "ConfigurationError", "FitError",
    "InsufficientStatistics", "Mode", "StateVector", "Truncation", "apply_beam_splitter",
    "apply_loss_sampled", "apply_two_mode_squeeze", "expected_photon_number", "measure_click",
    "vacuum", "FringeFitter", "MeasuredProbs", "PhaseScanPoint", "VisibilityFit",
    "estimate_visibility_VE", "fit_visibility", "interfere_readouts", "DensityMatrix",
    "click_probabilities_exact", "evolve_exact", "DelayMode", "ProtocolConfig",
    "analytic_amplification", "calibrate_coupling", "high_order_mean", "memory_transmission",
    "TrialOutcome", "run_trial", "simulate",
]
