"""Photon-number statistics after the measurement amplifier and the loss model."""

import numpy as np

from opatomo.fockspace import GaussianStateSpec
from opatomo.opa import OpaGain, TwoModeModel, lossy_squeezing_db, p2_pdf, sample_pulse_train

state = GaussianStateSpec.from_db(-2.41, 3.87)
phases = np.linspace(0, np.pi, 6, endpoint=False)
for m in sample_pulse_train(state, OpaGain(3.0), 0.2, 0.0, phases, 20_000, seed=1):
    print(f"phi={m.phi:.2f}  mean N={m.mean():8.1f}")
n = np.array([1.0, 10.0, 50.0])
print("p2 pdf at", n, "->", p2_pdf(n, TwoModeModel(10.0, 2.0, 0.5)))
for eta in (0.55, 0.8, 1.0):
    print(f"eta={eta}: squeezing at r=1 -> {lossy_squeezing_db(1.0, eta):.3f} dB, "
          f"r=10 -> {lossy_squeezing_db(10.0, eta):.3f} dB")
