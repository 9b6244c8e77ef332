"""Effective-index tables and the dispersion figures of merit derived from them.

Units: wavelengths in nm, angular frequency in rad/fs, propagation constant
beta in 1/mm, so d beta/d omega is fs/mm and d^2 beta/d omega^2 is fs^2/mm.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.interpolate import CubicSpline

C_NM_PER_FS = 299.792458
C_MM_PER_FS = 2.99792458e-4

PUMP_NM = 930.0
SIGNAL_NM = 1860.0


def omega_of(wavelength_nm):
    return 2 * np.pi * C_NM_PER_FS / np.asarray(wavelength_nm, dtype=float)


def wavelength_of(omega):
    return 2 * np.pi * C_NM_PER_FS / np.asarray(omega, dtype=float)


class DispersionRangeError(ValueError):
    pass


@dataclass(frozen=True)
class WaveguideDispersion:
    """Sampled effective index n_eff(lambda) with a C^2 spline of beta(omega)."""

    wavelength_nm: np.ndarray
    n_eff: np.ndarray
    valid_range: tuple[float, float] | None = None
    _spline: CubicSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        lam = np.asarray(self.wavelength_nm, dtype=float)
        n = np.asarray(self.n_eff, dtype=float)
        if lam.shape != n.shape or lam.ndim != 1:
            raise ValueError("wavelength and n_eff must be 1-D arrays of equal length")
        if lam.size < 7:
            raise ValueError("need at least 7 samples")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("wavelengths must be strictly increasing")
        object.__setattr__(self, "wavelength_nm", lam)
        object.__setattr__(self, "n_eff", n)
        if self.valid_range is None:
            object.__setattr__(self, "valid_range", (float(lam[0]), float(lam[-1])))
        w = omega_of(lam)[::-1]
        beta = (n * omega_of(lam) / C_MM_PER_FS)[::-1]
        object.__setattr__(self, "_spline", CubicSpline(w, beta, bc_type="not-a-knot"))

    def check(self, wavelength_nm, margin: int = 2) -> None:
        lo = max(self.valid_range[0], self.wavelength_nm[margin])
        hi = min(self.valid_range[1], self.wavelength_nm[-1 - margin])
        lam = np.atleast_1d(wavelength_nm)
        if np.any(lam < lo) or np.any(lam > hi):
            raise DispersionRangeError(
                f"wavelength {wavelength_nm} nm outside the usable range [{lo:.1f}, {hi:.1f}] nm"
            )

    def beta(self, omega, derivative: int = 0):
        """beta(omega) or one of its derivatives."""
        return self._spline(omega, derivative)

    @classmethod
    def from_csv(cls, path) -> "WaveguideDispersion":
        lam, n = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if [h.strip() for h in header] != ["wavelength_nm", "n_eff"]:
                raise ValueError(f"{path}: expected header 'wavelength_nm,n_eff'")
            for row_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    lam.append(float(row[0]))
                    n.append(float(row[1]))
                except (ValueError, IndexError):
                    raise ValueError(f"{path}: row {row_no}: bad value {row}") from None
        return cls(np.array(lam), np.array(n))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["wavelength_nm", "n_eff"])
            for lam, n in zip(self.wavelength_nm, self.n_eff):
                w.writerow([repr(float(lam)), repr(float(n))])

    @classmethod
    def reference_geometry(cls) -> "WaveguideDispersion":
        """Bundled table for the dispersion-engineered TFLN ridge (a fixture).

        See :func:`reference_geometry_table` for how it was constructed.
        """
        ref = resources.files("opatomo.data").joinpath("tfln_ridge_neff.csv")
        with resources.as_file(ref) as path:
            return cls.from_csv(path)


def gvd_at(dispersion: WaveguideDispersion, wavelength_nm: float) -> float:
    """Group-velocity dispersion beta_2 in fs^2/mm."""
    dispersion.check(wavelength_nm)
    return float(dispersion.beta(omega_of(wavelength_nm), 2))


def group_delay(dispersion: WaveguideDispersion, wavelength_nm: float) -> float:
    """Inverse group velocity beta_1 in fs/mm."""
    dispersion.check(wavelength_nm)
    return float(dispersion.beta(omega_of(wavelength_nm), 1))


def gvm(dispersion: WaveguideDispersion, pump_nm: float, signal_nm: float) -> float:
    """Group-velocity mismatch 1/v_g(pump) - 1/v_g(signal) in fs/mm."""
    return group_delay(dispersion, pump_nm) - group_delay(dispersion, signal_nm)


def clock_rate_estimate(sv_duration_fs: float) -> float:
    """Back-to-back pulse packing: one slot per squeezed-vacuum duration, in THz."""
    if sv_duration_fs <= 0:
        raise ValueError("duration must be > 0")
    return 1000.0 / sv_duration_fs


def reference_geometry_table(
    gvd_signal=-17.3,
    gvd_pump=244.0,
    gvm_ps=-87.0,
    n_eff_signal=1.85,
    group_index_signal=2.30,
    wavelengths=None,
):
    """Construct an n_eff table that reproduces three quoted figures of merit.

    beta''(omega) is taken quadratic in omega between the signal and pump
    frequencies; its endpoint values are the two GVDs and its integral is
    the GVM.  The absolute index and group index are plausible TFLN values
    and do not affect any of the three figures of merit.
    """
    if wavelengths is None:
        wavelengths = np.linspace(780.0, 3300.0, 127)
    ws, wp = omega_of(SIGNAL_NM), omega_of(PUMP_NM)
    span = wp - ws
    a = gvd_signal
    # a + b + c = gvd_pump ; a + b/2 + c/3 = gvm / span
    rhs = np.array([gvd_pump - a, gvm_ps / span - a])
    b, c = np.linalg.solve(np.array([[1.0, 1.0], [0.5, 1.0 / 3.0]]), rhs)
    w = omega_of(wavelengths)
    t = (w - ws) / span
    beta1_s = group_index_signal / C_MM_PER_FS
    beta0_s = n_eff_signal * ws / C_MM_PER_FS
    beta = beta0_s + beta1_s * (w - ws) + span**2 * (a * t**2 / 2 + b * t**3 / 6 + c * t**4 / 12)
    n = beta * C_MM_PER_FS / w
    return np.asarray(wavelengths, dtype=float), n
