"""Squeezed vacuum in a truncated Fock basis: populations, Wigner peak and fidelity."""

import numpy as np

from opatomo.fockspace import (
    GaussianStateSpec,
    fidelity,
    gaussian_dm_from_variances,
    principal_variances,
    squeezed_vacuum_dm,
    vacuum_dm,
    wigner,
)

rho = squeezed_vacuum_dm(0.28, dim=30)
print("populations n=0..5:", np.round(np.diag(rho.elements).real[:6], 5))
print("principal variances:", principal_variances(rho), "expected", 0.5 * np.exp(-0.56), 0.5 * np.exp(0.56))
axis = np.linspace(-4, 4, 161)
print("vacuum Wigner peak * pi:", wigner(vacuum_dm(10), axis, axis).values.max() * np.pi)
print("F(vacuum, r=0.28):", fidelity(vacuum_dm(30), rho), "closed form", 1 / np.cosh(0.28))
mixed = gaussian_dm_from_variances(GaussianStateSpec.from_db(-2.41, 3.87), dim=30)
print("-2.41/+3.87 dB state purity:", mixed.purity())
