"""Pulse-level machinery: dispersion, split-step propagation, demultiplexing."""

from .demux import DETECTION_THRESHOLD_DB, DemuxReport, demux_simulate, sv_duration_estimate
from .dispersion import (
    DispersionRangeError,
    WaveguideDispersion,
    clock_rate_estimate,
    group_delay,
    gvd_at,
    gvm,
    omega_of,
    wavelength_of,
)
from .splitstep import (
    GainCurve,
    PropagationConfig,
    PulseField,
    ResolutionError,
    VacuumOutputs,
    detect,
    fit_sqrt_law,
    gain_curve,
    histogram_peak,
    photon_flux_invariant,
    simulate_vacuum_outputs,
    split_step_propagate,
    time_grid,
    vacuum_histogram,
)
