"""Thermodynamic potentials of Bayesian evidence and sample-size-dependent priors."""

from .core import (
    ContinuousDim,
    DiscreteDim,
    DivergenceError,
    EvidenceEstimate,
    InvalidInputError,
    ModelSpec,
    NotDefinedError,
    NotSupportedError,
    ParamSpace,
    PriorSpec,
    ThermoError,
    ThermoReport,
    avg_energy_loocv,
    disorder_average,
    fisher_information,
    gibbs_entropy_sample,
    log_evidence,
    statistical_resolution,
)

__version__ = "0.1.0"
