"""Split-step gain against pump energy, and the gated demultiplexer."""

from opatomo.pulseprop import PropagationConfig, WaveguideDispersion, demux_simulate, gain_curve

config = PropagationConfig(length_mm=5.0, step_count=200, kappa=0.3, dispersion=WaveguideDispersion.reference_geometry())
curve = gain_curve(config, [0.1, 0.2, 0.3, 0.5, 1.0, 5.0, 20.0, 80.0], fit_range_pj=(0.1, 1.0))
for e, g, m in curve.rows():
    print(f"{e:6.1f} pJ  gain {g:6.2f} dB  sqrt-law {m:6.2f} dB")
print("R^2 of the low-energy fit:", round(curve.fit_r2, 5), " knee:", curve.knee_energy(1.0), "pJ")
report = demux_simulate(6.48, 4, 40.0, 16)
print("demux channels:", report.detected, "correct:", report.is_correct(16))
