import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import BENCH_ANTISQUEEZING_DB, BENCH_SQUEEZING_DB
from opatomo.fockspace import (
    DensityMatrix,
    GaussianStateSpec,
    WignerGrid,
    fidelity,
    principal_variances,
    squeezed_vacuum_dm,
    vacuum_dm,
)
from opatomo.opa import PhaseMarginal, TwoModeModel, shot_noise_vs_phase, substream, write_marginals_csv
from opatomo.tomography import (
    CalibrationError,
    FitConvergenceError,
    FitResult,
    HistogramSet,
    ManifestError,
    ReconstructionResult,
    calibrate_shot_noise,
    calibrate_shot_noise_by_phase,
    fit_two_mode,
    marginals_to_quadratures,
    mle_reconstruct,
    principal_from_phase_variances,
    score,
)

TWELVE_PHASES = np.linspace(0.0, np.pi, 12, endpoint=False)


def vacuum_marginal(g, n, seed, phi=0.0, offset=0.0):
    x = substream(seed, 0).normal(0.0, np.sqrt(0.5), n)
    return PhaseMarginal(phi, np.exp(2 * g) * x**2 + offset)


def p2_samples(model: TwoModeModel, n, seed):
    rng = substream(seed, 0)
    z1, z2 = rng.standard_normal((2, n))
    return model.mean1 * z1**2 + model.mean2 * z2**2 + model.offset


def quadrature_data(spec: GaussianStateSpec, n, seed, phases=TWELVE_PHASES):
    return [(float(p), substream(seed, k).normal(0.0, np.sqrt(spec.variance_at(p)), n)) for k, p in enumerate(phases)]


def squeezed_spec(r):
    return GaussianStateSpec(0.5 * np.exp(-2 * r), 0.5 * np.exp(2 * r))


def calibrated_fit(g, offset=0.0):
    return FitResult((TwoModeModel(0.5 * np.exp(2 * g), 0.0, offset),), (0.0,), g, offset, (0.0,))


# calibration -------------------------------------------------------------------


def test_calibration_recovers_gain():
    g, mean = calibrate_shot_noise([vacuum_marginal(3.0, 100_000, seed=1)])
    assert g == pytest.approx(3.0, abs=0.01)
    assert mean == pytest.approx(0.5 * np.exp(6.0), rel=0.02)


def test_calibration_subtracts_offset():
    g, _ = calibrate_shot_noise([vacuum_marginal(3.0, 100_000, seed=1, offset=25.0)], offset=25.0)
    assert g == pytest.approx(3.0, abs=0.01)


@given(st.floats(0.1, 50.0))
def test_calibration_scaling_law(c):
    m = vacuum_marginal(2.0, 5000, seed=3)
    g0, n0 = calibrate_shot_noise([m])
    g1, n1 = calibrate_shot_noise([PhaseMarginal(0.0, c * m.samples)])
    assert n1 == pytest.approx(c * n0, rel=1e-12)
    assert g1 - g0 == pytest.approx(0.5 * np.log(c), abs=1e-12)


def test_per_phase_calibration_extrema_at_zero_and_pi():
    phis = np.linspace(0.0, 2 * np.pi, 24, endpoint=False)
    vac = []
    for k, phi in enumerate(phis):
        mean = shot_noise_vs_phase(1.0, 0.3, phi, b=1.5)
        x = substream(7, k).normal(0.0, np.sqrt(0.5), 100_000)
        vac.append(PhaseMarginal(float(phi), 2 * mean * x**2))
    out_phis, gs = calibrate_shot_noise_by_phase(vac)
    assert np.allclose(out_phis, phis)
    peaks = [k for k in range(gs.size) if gs[k] > gs[k - 1] and gs[k] > gs[(k + 1) % gs.size]]
    assert [phis[k] for k in peaks] == pytest.approx([0.0, np.pi])


def test_calibration_errors():
    with pytest.raises(CalibrationError):
        calibrate_shot_noise([])
    with pytest.raises(CalibrationError):
        calibrate_shot_noise([vacuum_marginal(1.0, 100, seed=0)], offset=1e6)


# two-mode fit --------------------------------------------------------------------


def test_fit_single_mode_has_negligible_second_mode():
    model = fit_two_mode(PhaseMarginal(0.0, p2_samples(TwoModeModel(10.0, 0.0), 50_000, seed=2)))
    assert model.mean2 / model.mean1 < 0.02


def test_fit_recovers_two_mode_parameters():
    truth = TwoModeModel(10.0, 2.0, 0.5)
    model = fit_two_mode(PhaseMarginal(0.0, p2_samples(truth, 100_000, seed=4)))
    assert model.mean1 == pytest.approx(10.0, rel=0.05)
    assert model.mean2 == pytest.approx(2.0, rel=0.05)
    assert model.offset == pytest.approx(0.5, rel=0.20)
    assert model.mean1 >= model.mean2


def test_fit_needs_a_thousand_samples():
    with pytest.raises(ValueError, match="1000"):
        fit_two_mode(PhaseMarginal(0.0, p2_samples(TwoModeModel(1.0, 0.1), 999, seed=0)))


def test_fit_iteration_cap_reports_last_iterate():
    m = PhaseMarginal(0.0, p2_samples(TwoModeModel(10.0, 2.0, 0.5), 5000, seed=5))
    with pytest.raises(FitConvergenceError) as info:
        fit_two_mode(m, maxiter=3)
    assert isinstance(info.value.last_iterate, TwoModeModel)


def test_benchmark_configuration_fit_squeezing(benchmark_pipeline):
    fit = benchmark_pipeline["out"].fit
    sq, asq = fit.squeezing_db()
    assert sq == pytest.approx(BENCH_SQUEEZING_DB, abs=0.5)
    assert asq == pytest.approx(BENCH_ANTISQUEEZING_DB, abs=0.5)


def test_joint_fit_shares_one_nonnegative_offset(benchmark_pipeline):
    fit = benchmark_pipeline["out"].fit
    assert fit.offset >= 0
    assert {m.offset for m in fit.models} == {fit.offset}
    assert len(fit.goodness) == len(fit.models) == 12


def test_offset_robustness(benchmark_pipeline, benchmark_fit_with_offset):
    c, shifted = benchmark_fit_with_offset
    base = benchmark_pipeline["out"].fit
    assert c > 0
    assert shifted.offset == pytest.approx(base.offset + c, rel=0.2)
    for a, b in zip(base.squeezing_db(), shifted.squeezing_db()):
        assert a == pytest.approx(b, abs=0.1)


def test_principal_from_phase_variances_exact():
    spec = GaussianStateSpec(0.3, 1.2)
    lo, hi = principal_from_phase_variances(TWELVE_PHASES, spec.variance_at(TWELVE_PHASES))
    assert (lo, hi) == pytest.approx((0.3, 1.2), abs=1e-12)


# quadrature conversion --------------------------------------------------------------


def test_vacuum_quadrature_variance():
    x = marginals_to_quadratures(vacuum_marginal(3.0, 100_000, seed=8), calibrated_fit(3.0))
    assert np.var(x) == pytest.approx(0.5, rel=0.02)


def test_zero_photon_numbers_give_zero_quadratures():
    x = marginals_to_quadratures(PhaseMarginal(0.0, np.zeros(100)), calibrated_fit(2.0))
    assert np.all(x == 0.0)


def test_sign_alternation_centres_samples():
    x = marginals_to_quadratures(vacuum_marginal(3.0, 100_000, seed=9), calibrated_fit(3.0))
    assert abs(np.mean(x)) <= 3 * np.std(x) / np.sqrt(x.size)
    assert np.sum(x > 0) - np.sum(x < 0) in (-1, 0, 1)


def test_fundamental_mode_resampling_variance():
    g = 2.0
    fit = FitResult((TwoModeModel(0.8 * np.exp(2 * g), 0.1, 0.0),), (0.0,), g, 0.0, (0.0,))
    x = marginals_to_quadratures(PhaseMarginal(0.0, np.ones(10)), fit, mode="fundamental", count=200_000)
    assert x.size == 200_000
    assert np.var(x) == pytest.approx(0.8, rel=0.01)


def test_quadratures_need_calibration():
    with pytest.raises(CalibrationError):
        marginals_to_quadratures(PhaseMarginal(0.0, np.ones(10)), None)
    with pytest.raises(ValueError, match="mode"):
        marginals_to_quadratures(PhaseMarginal(0.0, np.ones(10)), calibrated_fit(1.0), mode="bogus")


# maximum likelihood -------------------------------------------------------------------


def assert_density_matrix(rho: DensityMatrix):
    m = rho.elements
    assert np.allclose(m, m.conj().T, atol=1e-12)
    assert np.trace(m).real == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.eigvalsh(m).min() >= -1e-10


def test_vacuum_reconstruction_fidelity():
    # 10^5 samples at each of 12 phases
    r = mle_reconstruct(quadrature_data(GaussianStateSpec.vacuum(), 100_000, seed=0), dim=20,
                        expected=vacuum_dm(20), bootstrap=0)
    assert r.fidelity_vs_expected >= 0.999
    assert_density_matrix(r.rho)


def test_squeezed_reconstruction_variances():
    r = 0.28
    rec = mle_reconstruct(quadrature_data(squeezed_spec(r), 20_000, seed=5), dim=20, bootstrap=0)
    vmin, vmax = principal_variances(rec.rho)
    assert vmin == pytest.approx(0.5 * np.exp(-2 * r), rel=0.05)
    assert vmax == pytest.approx(0.5 * np.exp(2 * r), rel=0.05)


@settings(max_examples=6)
@given(r=st.floats(0.0, 0.6), seed=st.integers(0, 2**16), dim=st.integers(4, 12))
def test_mle_monotone_and_physical(r, seed, dim):
    rec = mle_reconstruct(quadrature_data(squeezed_spec(r), 2000, seed, TWELVE_PHASES[::2]),
                          dim=dim, max_iters=300, bootstrap=0)
    history = rec.log_likelihood_history
    assert np.all(np.diff(history) >= 0)
    assert history[-1] == rec.final_log_likelihood
    assert len(history) == rec.iterations_used + 1
    assert_density_matrix(rec.rho)


@pytest.mark.parametrize("seed,r", list(enumerate([0.1, 0.2, 0.3, 0.4, 0.5])))
@pytest.mark.parametrize("n,floor", [(10_000, 0.99), (100_000, 0.999)])
def test_reconstruction_consistency(seed, r, n, floor):
    # n samples per phase, 12 phases, dim 30
    rec = mle_reconstruct(quadrature_data(squeezed_spec(r), n, seed=seed), dim=30,
                          expected=squeezed_vacuum_dm(r, 30), bootstrap=0)
    assert rec.fidelity_vs_expected >= floor


def test_phase_set_shifted_by_pi_gives_same_state():
    data = quadrature_data(squeezed_spec(0.3), 20_000, seed=12)
    a = mle_reconstruct(data, dim=20, bootstrap=0)
    # x at phi + pi is -x at phi
    b = mle_reconstruct([(p + np.pi, -x) for p, x in data], dim=20, bootstrap=0)
    assert fidelity(a.rho, b.rho) >= 0.999


def test_incomplete_phase_set_is_flagged():
    data = quadrature_data(squeezed_spec(0.2), 2000, seed=1, phases=[0.0, 0.3, 0.6])
    with pytest.warns(UserWarning, match="complete"):
        rec = mle_reconstruct(data, dim=8, max_iters=50, bootstrap=0)
    assert rec.complete is False
    full = mle_reconstruct(quadrature_data(squeezed_spec(0.2), 2000, seed=1), dim=8, max_iters=50, bootstrap=0)
    assert full.complete is True


def test_mle_rejects_tiny_dimension():
    with pytest.raises(ValueError):
        mle_reconstruct(quadrature_data(GaussianStateSpec.vacuum(), 100, seed=0), dim=1)


def test_bootstrap_uncertainties_are_finite(benchmark_pipeline):
    rec = benchmark_pipeline["out"].reconstruction
    for value, std in (rec.squeezing_db, rec.antisqueezing_db):
        assert np.isfinite(value)
        assert 0 < std < 0.5


# scoring and end to end ---------------------------------------------------------------


def result_for(rho: DensityMatrix) -> ReconstructionResult:
    axis = np.linspace(-1, 1, 3)
    grid = WignerGrid(axis, axis, np.zeros((3, 3)))
    return ReconstructionResult(rho, grid, (0.0, 0.0), (0.0, 0.0), None, 0, 0.0, np.zeros(1))


def test_score_identical_states():
    rho = squeezed_vacuum_dm(0.4, 30)
    report = score(result_for(rho), rho)
    assert report["fidelity"] == pytest.approx(1.0, abs=1e-10)
    assert report["max_abs_diff"] == 0.0
    assert report["squeezing_db"] == pytest.approx(10 * np.log10(np.exp(-0.8)), abs=1e-3)


def test_score_vacuum_against_squeezed():
    report = score(result_for(vacuum_dm(40)), squeezed_vacuum_dm(0.28, 40))
    assert report["fidelity"] == pytest.approx(1 / np.cosh(0.28), abs=1e-9)
    assert report["fidelity"] == pytest.approx(fidelity(vacuum_dm(40), squeezed_vacuum_dm(0.28, 40)), abs=1e-12)


def test_score_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        score(result_for(vacuum_dm(10)), vacuum_dm(12))


def test_end_to_end_benchmark_configuration(benchmark_pipeline):
    rec = benchmark_pipeline["out"].reconstruction
    assert rec.fidelity_vs_expected >= 0.999
    report = score(rec, benchmark_pipeline["expected"])
    assert report["fidelity"] == pytest.approx(rec.fidelity_vs_expected, abs=1e-12)
    rho00 = benchmark_pipeline["expected"].elements[0, 0].real
    assert report["max_abs_diff"] < 0.05 * rho00
    assert report["squeezing_db"] == pytest.approx(BENCH_SQUEEZING_DB, abs=0.5)
    assert report["antisqueezing_db"] == pytest.approx(BENCH_ANTISQUEEZING_DB, abs=0.5)


# histogram sets and manifests -----------------------------------------------------------


def marginals(phases, n=10):
    return [PhaseMarginal(float(p), np.ones(n)) for p in phases]


def test_histogram_set_invariants():
    HistogramSet(marginals([0.0, 0.8, 1.6]), marginals([0.0]), {})
    with pytest.raises(ValueError, match="vacuum"):
        HistogramSet(marginals([0.0, 0.8, 1.6]), [], {})
    with pytest.raises(ValueError, match="3 distinct"):
        HistogramSet(marginals([0.0, 1.6]), marginals([0.0]), {})
    with pytest.raises(ValueError, match="pi/2"):
        HistogramSet(marginals([0.0, 0.2, 0.4]), marginals([0.0]), {})


def test_histogram_set_shift():
    hs = HistogramSet(marginals([0.0, 0.8, 1.6]), marginals([0.0]), {})
    shifted = hs.shifted(2.5)
    assert np.all(shifted.marginals[1].samples == 3.5)
    assert np.all(shifted.vacuum_reference[0].samples == 3.5)


def write_manifest(tmp_path, manifest):
    write_marginals_csv(tmp_path / "signal.csv", marginals([0.0, 0.8, 1.6]))
    write_marginals_csv(tmp_path / "vacuum.csv", marginals([0.0]))
    path = tmp_path / "run.json"
    path.write_text(json.dumps(manifest))
    return path


def test_manifest_round_trip(tmp_path):
    path = write_manifest(tmp_path, {"marginals": ["signal.csv"], "vacuum_reference": ["vacuum.csv"],
                                     "metadata": {"source": "test"}})
    hs = HistogramSet.from_manifest(path)
    assert hs.phases == pytest.approx([0.0, 0.8, 1.6])
    assert hs.metadata == {"source": "test"}


def test_manifest_missing_vacuum_reference(tmp_path):
    path = write_manifest(tmp_path, {"marginals": ["signal.csv"]})
    with pytest.raises(ManifestError, match="vacuum_reference"):
        HistogramSet.from_manifest(path)


def test_manifest_syntax_error_names_line(tmp_path):
    path = tmp_path / "run.json"
    path.write_text('{\n  "marginals": ["a.csv"],\n  oops\n}')
    with pytest.raises(ManifestError, match="line 3"):
        HistogramSet.from_manifest(path)
