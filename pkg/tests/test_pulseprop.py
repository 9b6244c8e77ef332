from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import HIST_FILTER_NM
from opatomo.modes import JointSpectralAmplitude, compute_jsa, schmidt_decompose
from opatomo.pulseprop import (
    DispersionRangeError,
    PropagationConfig,
    PulseField,
    ResolutionError,
    WaveguideDispersion,
    clock_rate_estimate,
    demux_simulate,
    detect,
    fit_sqrt_law,
    gvd_at,
    gvm,
    histogram_peak,
    omega_of,
    photon_flux_invariant,
    simulate_vacuum_outputs,
    split_step_propagate,
    sv_duration_estimate,
    time_grid,
)
from opatomo.pulseprop.dispersion import C_MM_PER_FS
from opatomo.pulseprop.splitstep import seeded_gain

LAM = np.linspace(700.0, 3400.0, 80)


def table_from_beta(beta_of_omega, lam=LAM):
    w = omega_of(lam)
    return WaveguideDispersion(lam, beta_of_omega(w) * C_MM_PER_FS / w)


@pytest.fixture(scope="module")
def benchmark_dispersion():
    return WaveguideDispersion.reference_geometry()


# dispersion ---------------------------------------------------------------------


@given(st.floats(-500.0, 500.0), st.floats(5.0, 10.0))
def test_gvd_polynomial_oracle(b2, b1):
    w0 = omega_of(1860.0)
    disp = table_from_beta(lambda w: 7000.0 * w0 + b1 * (w - w0) + 0.5 * b2 * (w - w0) ** 2)
    for lam in (930.0, 1300.0, 1860.0, 2500.0):
        assert gvd_at(disp, lam) == pytest.approx(b2, rel=1e-6, abs=1e-6)


def test_bundled_table_figures_of_merit(benchmark_dispersion):
    assert gvd_at(benchmark_dispersion, 1860.0) == pytest.approx(-17.3, rel=0.05)
    assert gvd_at(benchmark_dispersion, 930.0) == pytest.approx(244.0, rel=0.05)
    assert gvm(benchmark_dispersion, 930.0, 1860.0) == pytest.approx(-87.0, rel=0.05)


def test_gvm_identical_wavelengths(benchmark_dispersion):
    assert gvm(benchmark_dispersion, 1500.0, 1500.0) == 0.0


def test_gvm_linear_index_medium():
    n0, n1 = 2.1, 0.05
    disp = table_from_beta(lambda w: (n0 + n1 * w) * w / C_MM_PER_FS)
    wp, ws = omega_of(930.0), omega_of(1860.0)
    analytic = 2 * n1 * (wp - ws) / C_MM_PER_FS
    assert gvm(disp, 930.0, 1860.0) == pytest.approx(analytic, rel=1e-8)


@given(st.floats(-1e4, 1e4), st.floats(-50.0, 50.0))
def test_gvd_and_gvm_gauge_invariance(b0, b1):
    base = WaveguideDispersion.reference_geometry()
    w = omega_of(base.wavelength_nm)
    shifted = WaveguideDispersion(base.wavelength_nm, base.n_eff + (b0 + b1 * w) * C_MM_PER_FS / w)
    for lam in (930.0, 1860.0):
        assert gvd_at(shifted, lam) == pytest.approx(gvd_at(base, lam), abs=1e-6 * 250)
    assert gvm(shifted, 930.0, 1860.0) == pytest.approx(gvm(base, 930.0, 1860.0), abs=1e-6 * 90)


def test_out_of_range_wavelength(benchmark_dispersion):
    with pytest.raises(DispersionRangeError):
        gvd_at(benchmark_dispersion, 500.0)
    with pytest.raises(DispersionRangeError):
        gvm(benchmark_dispersion, 930.0, 5000.0)


def test_dispersion_table_validation():
    with pytest.raises(ValueError):
        WaveguideDispersion(np.arange(5.0), np.ones(5))
    with pytest.raises(ValueError):
        WaveguideDispersion(np.array([1, 2, 3, 5, 4, 6, 7.0]), np.ones(7))


def test_dispersion_csv_round_trip(tmp_path, benchmark_dispersion):
    benchmark_dispersion.to_csv(tmp_path / "d.csv")
    back = WaveguideDispersion.from_csv(tmp_path / "d.csv")
    assert np.array_equal(back.n_eff, benchmark_dispersion.n_eff)


# clock rate and SV duration --------------------------------------------------------


def test_clock_rate_examples():
    assert clock_rate_estimate(154.3) == pytest.approx(6.481, abs=1e-3)
    assert clock_rate_estimate(1000.0) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        clock_rate_estimate(0.0)


@given(st.floats(1.0, 1e4))
def test_clock_rate_reciprocal(d):
    assert clock_rate_estimate(d / 2) == pytest.approx(2 * clock_rate_estimate(d))


def gaussian_mode_decomposition(fwhm_rad_per_fs):
    w = np.linspace(-0.5, 0.5, 1001)
    # intensity |f|^2 has FWHM fwhm_rad_per_fs
    f = np.exp(-2 * np.log(2) * w**2 / fwhm_rad_per_fs**2)
    return schmidt_decompose(JointSpectralAmplitude.from_product(w, w, f, f), max_modes=1)


def test_sv_duration_gaussian_time_bandwidth():
    dw = 0.05
    dnu = dw / (2 * np.pi)
    assert sv_duration_estimate(gaussian_mode_decomposition(dw)) == pytest.approx(0.441 / dnu, rel=0.01)


def test_sv_duration_scales_inversely_with_bandwidth():
    narrow = sv_duration_estimate(gaussian_mode_decomposition(0.04))
    wide = sv_duration_estimate(gaussian_mode_decomposition(0.08))
    assert wide == pytest.approx(narrow / 2, rel=0.01)


def test_sv_duration_window_check():
    dec = gaussian_mode_decomposition(0.05)
    with pytest.raises(ValueError):
        sv_duration_estimate(dec, pump_duration_fs=70.0, gvm_fs_per_mm=-87.0, length_mm=100.0)


@pytest.mark.xfail(
    strict=True,
    reason="leading mode of the low-gain JSA surrogate is far broader than the reference; see the decisions ledger",
)
def test_sv_duration_measurement_configuration(benchmark_dispersion):
    dec = schmidt_decompose(compute_jsa(benchmark_dispersion, 930.0, 70.0, 5.0), max_modes=1)
    duration = sv_duration_estimate(dec, 70.0, gvm(benchmark_dispersion, 930.0, 1860.0), 5.0)
    assert duration == pytest.approx(154.3, rel=0.25)


# pulse fields -------------------------------------------------------------------------


def test_pulse_field_energy():
    grid = time_grid(1024, 2000.0)
    p = PulseField.gaussian(grid, 70.0, 3.0, 930.0)
    assert p.energy() == pytest.approx(3e-12, rel=1e-12)


def test_pulse_field_rejects_non_uniform_grid():
    with pytest.raises(ValueError):
        PulseField(np.array([0.0, 1.0, 3.0]), np.zeros(3), 930.0)


def test_propagation_config_resolution_floor(benchmark_dispersion):
    with pytest.raises(ValueError):
        PropagationConfig(5.0, 99, 0.3, benchmark_dispersion)


# split-step ---------------------------------------------------------------------------


def test_linear_limit_conserves_energy_and_spectrum(benchmark_dispersion):
    grid = time_grid(2048, 4000.0)
    cfg = PropagationConfig(5.0, 100, 0.0, benchmark_dispersion)
    pump = PulseField.gaussian(grid, 70.0, 10.0, 930.0)
    sig = PulseField.gaussian(grid, 50.0, 1e-3, 1860.0, phase=0.3)
    p_out, s_out = split_step_propagate(pump, sig, cfg)
    assert p_out.energy() == pytest.approx(pump.energy(), rel=1e-10)
    assert s_out.energy() == pytest.approx(sig.energy(), rel=1e-10)
    for a, b in ((pump, p_out), (sig, s_out)):
        ref = np.abs(a.spectrum())
        assert np.max(np.abs(np.abs(b.spectrum()) - ref)) <= 1e-12 * ref.max()
    # dispersion did act: the pump broadened in time
    assert np.max(np.abs(p_out.envelope)) < 0.99 * np.max(np.abs(pump.envelope))


def test_zero_coupling_gives_zero_gain(benchmark_dispersion):
    cfg = PropagationConfig(5.0, 100, 0.0, benchmark_dispersion)
    gain, remaining = seeded_gain(cfg, time_grid(2048, 4000.0), 40.0)
    assert gain == pytest.approx(0.0, abs=1e-9)
    assert remaining == pytest.approx(1.0, abs=1e-12)


def test_photon_flux_drift_below_budget(benchmark_dispersion):
    grid = time_grid()
    cfg = PropagationConfig(5.0, 500, 0.3, benchmark_dispersion)
    pump = PulseField.gaussian(grid, 70.0, 80.0, 930.0)
    sig = PulseField.gaussian(grid, 70.0, 1e-3, 1860.0, phase=np.pi / 4)
    record = []
    p_out, s_out = split_step_propagate(pump, sig, cfg, record=record)
    assert max(record) < 1e-6
    start = photon_flux_invariant(pump.envelope, sig.envelope)
    end = photon_flux_invariant(p_out.envelope, s_out.envelope)
    assert abs(end / start - 1) < 1e-6
    # strong depletion actually happened
    assert p_out.energy() < 0.95 * pump.energy()


def test_halving_step_reduces_drift_at_least_fourfold(benchmark_dispersion):
    grid = time_grid(2048, 4000.0)
    pump = PulseField.gaussian(grid, 70.0, 60.0, 930.0)
    sig = PulseField.gaussian(grid, 70.0, 1e-3, 1860.0, phase=np.pi / 4)
    drifts = []
    for steps in (100, 200):
        cfg = PropagationConfig(5.0, steps, 0.3, benchmark_dispersion, substeps=1)
        record = []
        split_step_propagate(pump, sig, cfg, record=record, tolerance=np.inf)
        drifts.append(record[-1])
    assert drifts[0] / drifts[1] >= 4


def test_under_resolved_run_raises(benchmark_dispersion):
    grid = time_grid(2048, 4000.0)
    cfg = PropagationConfig(5.0, 100, 0.3, benchmark_dispersion, substeps=1)
    pump = PulseField.gaussian(grid, 70.0, 80.0, 930.0)
    sig = PulseField.gaussian(grid, 70.0, 1e-3, 1860.0, phase=np.pi / 4)
    with pytest.raises(ResolutionError, match="step_count"):
        split_step_propagate(pump, sig, cfg)


def test_mismatched_grids_rejected(benchmark_dispersion):
    cfg = PropagationConfig(5.0, 100, 0.3, benchmark_dispersion)
    with pytest.raises(ValueError):
        split_step_propagate(
            PulseField.gaussian(time_grid(512), 70.0, 1.0, 930.0),
            PulseField.gaussian(time_grid(1024), 70.0, 1e-3, 1860.0),
            cfg,
        )


def test_undepleted_gain_follows_sqrt_law(gain_sweep):
    curve = gain_sweep["curve"]
    assert curve.fit_r2 >= 0.999
    assert np.all(np.diff(curve.gain_db[curve.energy_pj <= 1.0]) > 0)


def test_gain_saturates_at_high_energy(gain_sweep):
    curve = gain_sweep["curve"]
    short = curve.model_gain_db - curve.gain_db
    assert short[-1] >= 1.0
    knee = curve.knee_energy(1.0)
    assert knee is not None and knee > 1.0
    # depletion grows with energy
    assert curve.remaining_pump_fraction[-1] < curve.remaining_pump_fraction[0]


def test_fit_sqrt_law_exact_line():
    e = np.array([0.1, 0.4, 0.9, 1.6])
    slope, intercept, r2 = fit_sqrt_law(e, 3.0 * np.sqrt(e) - 0.5)
    assert (slope, intercept, r2) == pytest.approx((3.0, -0.5, 1.0))


# pseudo-vacuum histograms -----------------------------------------------------------------


def test_vacuum_histogram_filter_outside_grid(prop_config):
    outputs = simulate_vacuum_outputs(prop_config, 1.0, 2, seed=0)
    with pytest.raises(ValueError):
        detect(outputs, (400.0, 410.0))


def test_vacuum_trials_independent_of_batch(prop_config):
    a = simulate_vacuum_outputs(prop_config, 5.0, 6, seed=4, batch=6)
    b = simulate_vacuum_outputs(prop_config, 5.0, 6, seed=4, batch=4)
    assert np.array_equal(detect(a).samples, detect(b).samples)


def test_zero_pump_vacuum_is_shot_noise(prop_config):
    # without pump the detected energy is the input vacuum: mean 1 in shot-noise units.
    # Propagation is then purely linear, so the coarsest allowed z grid suffices; the filtered band
    # holds only a few bins (about 60% spread per trial), hence 3000 trials.
    config = replace(prop_config, step_count=100)
    outputs = simulate_vacuum_outputs(config, 0.0, 3000, seed=2024)
    assert np.mean(detect(outputs, HIST_FILTER_NM).samples) == pytest.approx(1.0, rel=0.05)
    assert np.mean(detect(outputs).samples) == pytest.approx(1.0, rel=0.05)


def test_low_energy_filtered_peak_at_zero_edge(vacuum_sweep):
    low = vacuum_sweep["rows"][0]
    x = low["filtered"] / np.mean(low["filtered"])
    counts, _ = np.histogram(x, bins=40, range=(0.0, float(np.quantile(x, 0.995))))
    assert int(np.argmax(counts)) == 0


def test_peak_moves_away_from_zero_past_the_knee(vacuum_sweep):
    rows = vacuum_sweep["rows"]
    peaks = [histogram_peak(r["filtered"]) for r in rows]
    knee = [r["energy_pj"] for r in rows].index(40.0)
    assert max(peaks[:knee]) < min(peaks[knee:])


def test_unfiltered_peak_shift_at_least_filtered(vacuum_sweep):
    for r in vacuum_sweep["rows"]:
        assert histogram_peak(r["unfiltered"]) >= histogram_peak(r["filtered"])


def test_vacuum_mean_grows_with_energy(vacuum_sweep):
    means = [np.mean(r["unfiltered"]) for r in vacuum_sweep["rows"]]
    assert np.all(np.diff(means) > 0)
    filtered = [np.mean(r["filtered"]) for r in vacuum_sweep["rows"]]
    assert np.all(np.diff(filtered) > 0)


def test_histogram_peak_of_exponential_is_first_bin():
    rng = np.random.default_rng(0)
    assert histogram_peak(rng.exponential(1.0, 20_000)) < 0.1


# demux ---------------------------------------------------------------------------------


def test_demux_single_channel_detects_everything():
    rep = demux_simulate(6.48, 1, 40.0, 10)
    assert rep.detected == (tuple(range(10)),)


def test_demux_four_channels():
    rep = demux_simulate(6.48, 4, 40.0, 16)
    assert rep.is_correct(16)
    assert all(len(d) == 4 for d in rep.detected)
    assert rep.detected[1] == (1, 5, 9, 13)
    assert rep.channel_rate_thz == pytest.approx(1.62)


def test_demux_zero_gain_detects_nothing():
    rep = demux_simulate(6.48, 4, 0.0, 16)
    assert rep.total_detections == 0


@given(st.integers(1, 12), st.integers(0, 200), st.floats(20.0, 80.0))
def test_demux_routing_property(channels, pulses, gain):
    rep = demux_simulate(1.0, channels, gain, pulses)
    assert rep.is_correct(pulses)
    assert rep.total_detections == pulses
