"""Designed multi-level atoms whose resonance fluorescence is highly antibunched."""

from .dynamics import (
    AmplitudeTrajectory,
    EigenStructure,
    SineSeries,
    amplitude_series,
    eigendecompose,
    evolve_ode_oracle,
    evolve_spectral,
)
from .photostats import (
    CorrelationTable,
    IntensityIntegral,
    WaitingTimeTable,
    cumulative_intensity,
    laplace_consistency_check,
    mean_rate,
    renewal_solve,
    survival,
    waiting_time,
    waiting_time_table,
)
from .synthesis import (
    CoupledSystem,
    EigenDesign,
    FourierTarget,
    build_design,
    fourier_coefficients,
    free_parameter_count,
    matched_gamma,
    synthesize,
    synthesize_levels,
    verify,
)
from .trajectory import (
    JumpRecord,
    empirical_wtd,
    fano_estimate,
    interruption_estimate,
    sample_waiting_time,
    simulate,
)

__version__ = "0.1.0"
