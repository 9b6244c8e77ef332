"""Low-gain joint spectral amplitude on the bundled waveguide table and its Schmidt modes."""

from opatomo.modes import apply_filter, compute_jsa, schmidt_decompose
from opatomo.pulseprop import WaveguideDispersion

disp = WaveguideDispersion.reference_geometry()
for length in (2.5, 5.0):
    jsa = compute_jsa(disp, 930.0, 70.0, length)
    dec = schmidt_decompose(jsa)
    filt = schmidt_decompose(apply_filter(jsa, (1700.0, 1950.0)))
    print(f"L={length} mm: K={dec.schmidt_number:.2f}, filtered K={filt.schmidt_number:.2f}, "
          f"leading weights {dec.weights[:3].round(3)}")
