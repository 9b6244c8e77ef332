"""Simulate histograms of a -2.41/+3.87 dB state, fit them and reconstruct the density matrix."""

import numpy as np

from opatomo.fockspace import GaussianStateSpec
from opatomo.opa import OpaGain, sample_pulse_train
from opatomo.tomography import HistogramSet, expected_state, reconstruct_from_histograms, score

state = GaussianStateSpec.from_db(-2.41, 3.87)
gain = OpaGain(3.0)
phases = np.linspace(0, np.pi, 12, endpoint=False)
hs = HistogramSet(
    sample_pulse_train(state, gain, 0.2, 0.0, phases, 20_000, seed=11),
    sample_pulse_train(GaussianStateSpec.vacuum(), gain, 0.2, 0.0, [0.0], 20_000, seed=12),
)
expected = expected_state(state, 20)
out = reconstruct_from_histograms(hs, dim=20, seed=13, expected=expected)
print("fitted gain g:", round(out.fit.g, 4), " fitted dB:", np.round(out.fit.squeezing_db(), 3))
rec = out.reconstruction
print("reconstructed squeezing: %.2f +- %.2f dB, anti-squeezing %.2f +- %.2f dB"
      % (*rec.squeezing_db, *rec.antisqueezing_db))
report = score(rec, expected)
print("fidelity:", round(report["fidelity"], 5), " max |d rho|:", round(report["max_abs_diff"], 5),
      " iterations:", rec.iterations_used)
