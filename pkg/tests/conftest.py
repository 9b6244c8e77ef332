"""Shared fixtures.  The expensive simulations are session-scoped so the unit
tests and the acceptance suite reuse one run of each."""

from __future__ import annotations

import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from opatomo.fockspace import GaussianStateSpec
from opatomo.opa import OpaGain, sample_pulse_train
from opatomo.pulseprop import (
    PropagationConfig,
    WaveguideDispersion,
    detect,
    simulate_vacuum_outputs,
)
from opatomo.tomography import HistogramSet, expected_state, reconstruct_from_histograms

settings.register_profile(
    "default",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

BENCH_SQUEEZING_DB = -2.41
BENCH_ANTISQUEEZING_DB = 3.87
BENCH_PHASES = 12
BENCH_PULSES = 20_000
BENCH_GAIN_G = 3.0
BENCH_SEED = 11

HIST_ENERGIES_PJ = (5.0, 20.0, 40.0, 80.0)
HIST_TRIALS = 1000
HIST_FILTER_NM = (1850.0, 1870.0)


def benchmark_histogram_set(seed: int = BENCH_SEED, offset: float = 0.0) -> HistogramSet:
    state = GaussianStateSpec.from_db(BENCH_SQUEEZING_DB, BENCH_ANTISQUEEZING_DB)
    gain = OpaGain(BENCH_GAIN_G)
    phases = np.linspace(0.0, np.pi, BENCH_PHASES, endpoint=False)
    signal = sample_pulse_train(state, gain, 0.2, offset, phases, BENCH_PULSES, seed)
    vacuum = sample_pulse_train(GaussianStateSpec.vacuum(), gain, 0.2, offset, [0.0], BENCH_PULSES, seed + 1)
    return HistogramSet(signal, vacuum, {"seed": seed})


@pytest.fixture(scope="session")
def benchmark_pipeline():
    """End-to-end run on the benchmark configuration (-2.41/+3.87 dB, 12 phases x 20000 pulses), with its wall time."""
    state = GaussianStateSpec.from_db(BENCH_SQUEEZING_DB, BENCH_ANTISQUEEZING_DB)
    t0 = time.perf_counter()
    hs = benchmark_histogram_set()
    expected = expected_state(state, 20)
    out = reconstruct_from_histograms(hs, dim=20, seed=BENCH_SEED + 2, expected=expected)
    elapsed = time.perf_counter() - t0
    return {"hs": hs, "expected": expected, "out": out, "elapsed_s": elapsed}


@pytest.fixture(scope="session")
def benchmark_fit_with_offset(benchmark_pipeline):
    """Joint fit of the same data after adding a constant offset to every pulse."""
    from opatomo.tomography import fit_histogram_set

    hs = benchmark_pipeline["hs"]
    c = 0.05 * float(np.mean(hs.vacuum_reference[0].samples))
    return c, fit_histogram_set(hs.shifted(c))


@pytest.fixture(scope="session")
def prop_config():
    return PropagationConfig(
        length_mm=5.0, step_count=200, kappa=0.3, dispersion=WaveguideDispersion.reference_geometry()
    )


@pytest.fixture(scope="session")
def vacuum_sweep(prop_config):
    """Pseudo-vacuum amplification at several pump energies, 1000 trials each."""
    t0 = time.perf_counter()
    rows = []
    for k, e in enumerate(HIST_ENERGIES_PJ):
        outputs = simulate_vacuum_outputs(prop_config, e, HIST_TRIALS, seed=100 + k)
        rows.append(
            {
                "energy_pj": e,
                "filtered": detect(outputs, HIST_FILTER_NM).samples,
                "unfiltered": detect(outputs).samples,
                "remaining": outputs.remaining_pump_fraction,
            }
        )
    return {"rows": rows, "elapsed_s": time.perf_counter() - t0}


GAIN_ENERGIES_PJ = (0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 60.0, 80.0)


@pytest.fixture(scope="session")
def gain_sweep():
    """Seeded gain against pump energy on the default 4096-point grid, 500 steps."""
    from opatomo.pulseprop import gain_curve

    config = PropagationConfig(
        length_mm=5.0, step_count=500, kappa=0.3, dispersion=WaveguideDispersion.reference_geometry()
    )
    t0 = time.perf_counter()
    curve = gain_curve(config, GAIN_ENERGIES_PJ, fit_range_pj=(0.1, 1.0))
    return {"curve": curve, "elapsed_s": time.perf_counter() - t0}


# acceptance reporting -------------------------------------------------------------

ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for a criterion and fail the test if any check failed.

    Usage: acceptance(number, title, [(label, ok, detail), ...]).
    """

    def report(number: int, title: str, checks) -> None:
        checks = list(checks)
        ok = all(c[1] for c in checks)
        detail = "; ".join(f"{label}: {d}{'' if good else ' [FAIL]'}" for label, good, d in checks)
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail}"
        request.config.stash.setdefault(ACCEPTANCE_KEY, []).append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
