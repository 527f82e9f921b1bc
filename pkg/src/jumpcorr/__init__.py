"""Telegraph-trajectory simulation and dwell-time correlation analysis
for pairs of continuously monitored qubits."""

__version__ = "0.1.0"

from .covariance import (
    CovarianceCurve,
    DatasetEnsemble,
    ThresholdReport,
    detection_threshold,
    fit_covariance_decay,
    normalized_covariance,
    state_correlation,
)
from .estimator import (
    DwellSeries,
    PeakModel,
    StateTrace,
    dwell_series,
    estimate_peaks,
    estimate_t1,
    readout_fidelity,
    two_point_filter,
)
from .fluxonium import (
    DEVICE_A,
    DEVICE_B,
    FluxoniumParams,
    build_hamiltonian,
    el_from_inductance,
    fit_spectrum,
    spectrum_sweep,
    transition_frequency,
)
from .numerics import (
    FitResult,
    fit_exponential,
    inverse_normal_cdf,
    nonlinear_least_squares,
    symmetric_eigensolve,
)
from .readout import (
    Histogram2D,
    IQRecord,
    ReadoutModel,
    histogram2d,
    sigma_for_fidelity,
    synthesize_iq,
)
from .telegraph import (
    CorrelationInjection,
    TelegraphConfig,
    TelegraphTrajectory,
    effective_temperature,
    equilibrium_population,
    rates_from_t1,
    sample_correlated_pair,
    sample_trajectory,
)
