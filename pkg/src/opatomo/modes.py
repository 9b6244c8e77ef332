"""Joint spectral amplitudes, their Schmidt (Bloch-Messiah) modes, and the
photon-number bookkeeping for a squeezer OPA cascaded into a measurement OPA.

Frequencies are detunings from degeneracy in rad/fs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .pulseprop.dispersion import (
    WaveguideDispersion,
    omega_of,
    wavelength_of,
)

DEFAULT_GRID_POINTS = 512
DEFAULT_SPAN_THZ = 60.0


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class JointSpectralAmplitude:
    signal_freqs: np.ndarray
    idler_freqs: np.ndarray
    amplitude: np.ndarray = field(repr=False)
    center_wavelength_nm: float = 1860.0

    def __post_init__(self):
        s = np.asarray(self.signal_freqs, dtype=float)
        i = np.asarray(self.idler_freqs, dtype=float)
        amp = np.asarray(self.amplitude, dtype=complex)
        if amp.shape != (s.size, i.size):
            raise ValueError(f"amplitude shape {amp.shape} does not match grids ({s.size}, {i.size})")
        for ax in (s, i):
            if ax.size < 2 or np.any(np.diff(ax) <= 0):
                raise ValueError("frequency grids must be strictly increasing")
        object.__setattr__(self, "signal_freqs", s)
        object.__setattr__(self, "idler_freqs", i)
        object.__setattr__(self, "amplitude", amp)

    @property
    def d_signal(self) -> float:
        return float(np.mean(np.diff(self.signal_freqs)))

    @property
    def d_idler(self) -> float:
        return float(np.mean(np.diff(self.idler_freqs)))

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amplitude) ** 2) * self.d_signal * self.d_idler)

    def normalized(self) -> "JointSpectralAmplitude":
        n = self.norm()
        if n <= 0:
            raise ValueError("JSA is identically zero")
        return JointSpectralAmplitude(
            self.signal_freqs, self.idler_freqs, self.amplitude / np.sqrt(n), self.center_wavelength_nm
        )

    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    @classmethod
    def from_product(cls, signal_freqs, idler_freqs, f_signal, f_idler, center_wavelength_nm=1860.0):
        """Separable JSA f_s(w_s) f_i(w_i)."""
        amp = np.outer(np.asarray(f_signal, complex), np.asarray(f_idler, complex))
        return cls(signal_freqs, idler_freqs, amp, center_wavelength_nm).normalized()

    def to_csv(self, path) -> None:
        """Long-format omega_s, omega_i, re, im plus a JSON sidecar with the grid."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["omega_s", "omega_i", "re", "im"])
            for a, ws in enumerate(self.signal_freqs):
                for b, wi in enumerate(self.idler_freqs):
                    z = self.amplitude[a, b]
                    w.writerow([repr(float(ws)), repr(float(wi)), repr(float(z.real)), repr(float(z.imag))])
        meta = {
            "n_signal": int(self.signal_freqs.size),
            "n_idler": int(self.idler_freqs.size),
            "signal_range_rad_per_fs": [float(self.signal_freqs[0]), float(self.signal_freqs[-1])],
            "idler_range_rad_per_fs": [float(self.idler_freqs[0]), float(self.idler_freqs[-1])],
            "center_wavelength_nm": self.center_wavelength_nm,
        }
        with open(f"{path}.json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path) -> "JointSpectralAmplitude":
        with open(f"{path}.json") as fh:
            meta = json.load(fh)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        ns, ni = meta["n_signal"], meta["n_idler"]
        amp = (data[:, 2] + 1j * data[:, 3]).reshape(ns, ni)
        return cls(data[::ni, 0], data[:ni, 1], amp, meta["center_wavelength_nm"])


@dataclass(frozen=True)
class SchmidtDecomposition:
    """J(ws, wi) = sum_k sqrt(weight_k) u_k(ws) v_k(wi), with modes orthonormal
    under the frequency-weighted inner product."""

    weights: np.ndarray
    signal_modes: np.ndarray = field(repr=False)
    idler_modes: np.ndarray = field(repr=False)
    signal_freqs: np.ndarray = field(repr=False)
    idler_freqs: np.ndarray = field(repr=False)
    center_wavelength_nm: float = 1860.0

    @property
    def schmidt_number(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    @property
    def d_signal(self) -> float:
        return float(np.mean(np.diff(self.signal_freqs)))

    def gram(self) -> np.ndarray:
        u = self.signal_modes
        return (u.conj() @ u.T) * self.d_signal

    def reconstruct(self) -> np.ndarray:
        return np.einsum("k,ka,kb->ab", np.sqrt(self.weights), self.signal_modes, self.idler_modes)

    def weights_to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "lambda"])
            for k, lam in enumerate(self.weights, start=1):
                w.writerow([k, repr(float(lam))])


@dataclass(frozen=True)
class ModeOverlap:
    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=complex)
        if np.any(np.abs(s) > 1 + 1e-9):
            raise ValueError("overlap magnitudes must be <= 1")
        object.__setattr__(self, "sigma", s)


@dataclass(frozen=True)
class CascadeSpec:
    """Per-mode squeezing of squeezer (m) and measurement (n) OPAs and their overlaps."""

    r_squeezer: np.ndarray
    r_measurement: np.ndarray
    overlap: ModeOverlap

    def __post_init__(self):
        rs = np.atleast_1d(np.asarray(self.r_squeezer, dtype=float))
        rm = np.atleast_1d(np.asarray(self.r_measurement, dtype=float))
        if self.overlap.sigma.shape != (rs.size, rm.size):
            raise ValueError(
                f"overlap shape {self.overlap.sigma.shape} does not match ({rs.size}, {rm.size})"
            )
        object.__setattr__(self, "r_squeezer", rs)
        object.__setattr__(self, "r_measurement", rm)


def frequency_grid(points: int = DEFAULT_GRID_POINTS, span_thz: float = DEFAULT_SPAN_THZ) -> np.ndarray:
    """Symmetric detuning grid spanning +/- span_thz (in rad/fs)."""
    half = 2 * np.pi * span_thz * 1e-3
    return np.linspace(-half, half, points)


def phase_mismatch(omega_s, omega_i, k1_diff, k2_pump, k2_signal):
    """Second-order Taylor expansion of k_p - k_s - k_i around degeneracy."""
    total = omega_s + omega_i
    return k1_diff * total + 0.5 * k2_pump * total**2 - 0.5 * k2_signal * (omega_s**2 + omega_i**2)


def compute_jsa(
    dispersion: WaveguideDispersion,
    pump_center_nm: float,
    pump_duration_fs: float,
    length_mm: float,
    grid=None,
) -> JointSpectralAmplitude:
    """Low-gain JSA: Gaussian pump envelope times the phase-matching sinc.

    ``pump_duration_fs`` is the intensity FWHM of a transform-limited pump.
    ``grid`` is a symmetric detuning array (rad/fs); the default spans
    +/-60 THz with 512 points.
    """
    w = frequency_grid() if grid is None else np.asarray(grid, dtype=float)
    if not np.allclose(w, -w[::-1], atol=1e-12 * max(1.0, np.max(np.abs(w)))):
        raise ValueError("grid must be symmetric about degeneracy")
    signal_nm = 2 * pump_center_nm
    w0 = omega_of(signal_nm)
    lam_edges = wavelength_of(w0 + np.array([w[-1], w[0]]))
    dispersion.check(pump_center_nm)
    dispersion.check(lam_edges)
    wp = omega_of(pump_center_nm)
    k1_diff = float(dispersion.beta(wp, 1) - dispersion.beta(w0, 1))
    k2_pump = float(dispersion.beta(wp, 2))
    k2_signal = float(dispersion.beta(w0, 2))

    ws, wi = np.meshgrid(w, w, indexing="ij")
    total = ws + wi
    pump = np.exp(-(total**2) * pump_duration_fs**2 / (8 * np.log(2)))
    dk = phase_mismatch(ws, wi, k1_diff, k2_pump, k2_signal)
    amp = pump * np.sinc(dk * length_mm / (2 * np.pi)) * np.exp(0.5j * dk * length_mm)
    amp = 0.5 * (amp + amp.T)
    return JointSpectralAmplitude(w, w, amp, signal_nm).normalized()


def schmidt_decompose(jsa: JointSpectralAmplitude, max_modes: int | None = None) -> SchmidtDecomposition:
    ds, di = jsa.d_signal, jsa.d_idler
    u, s, vh = np.linalg.svd(jsa.amplitude * np.sqrt(ds * di), full_matrices=False)
    k = s.size if max_modes is None else min(max_modes, s.size)
    lam = s[:k] ** 2
    lam = lam / lam.sum()
    return SchmidtDecomposition(
        weights=lam,
        signal_modes=u[:, :k].T / np.sqrt(ds),
        idler_modes=vh[:k, :] / np.sqrt(di),
        signal_freqs=jsa.signal_freqs,
        idler_freqs=jsa.idler_freqs,
        center_wavelength_nm=jsa.center_wavelength_nm,
    )


def schmidt_from_g2(g2: float) -> float:
    """Effective mode number K = 1/(g2 - 1) for thermal marginal statistics."""
    if not 1 < g2 <= 2:
        raise ValueError(f"g2 must lie in (1, 2], got {g2}")
    return 1.0 / (g2 - 1.0)


def g2_from_schmidt(k: float) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    return 1.0 + 1.0 / k


def passband_mask(freqs, center_wavelength_nm, passband_nm) -> np.ndarray:
    lo, hi = sorted(passband_nm)
    lam = wavelength_of(omega_of(center_wavelength_nm) + np.asarray(freqs))
    return (lam >= lo) & (lam <= hi)


def apply_filter(jsa: JointSpectralAmplitude, passband_nm) -> JointSpectralAmplitude:
    """Zero the JSA outside a wavelength passband on both axes and renormalise."""
    ms = passband_mask(jsa.signal_freqs, jsa.center_wavelength_nm, passband_nm)
    mi = passband_mask(jsa.idler_freqs, jsa.center_wavelength_nm, passband_nm)
    amp = jsa.amplitude * np.outer(ms, mi)
    if not np.any(amp):
        raise ValueError(f"passband {passband_nm} nm does not overlap the JSA support")
    return JointSpectralAmplitude(jsa.signal_freqs, jsa.idler_freqs, amp, jsa.center_wavelength_nm).normalized()


def mode_overlap(dec_a: SchmidtDecomposition, dec_b: SchmidtDecomposition) -> ModeOverlap:
    """sigma[m, n] = <a_m | b_n>, the overlap of mode m of ``dec_a`` with mode n of ``dec_b``."""
    if dec_a.signal_freqs.shape != dec_b.signal_freqs.shape or not np.allclose(
        dec_a.signal_freqs, dec_b.signal_freqs, rtol=0, atol=1e-12
    ):
        raise GridMismatchError("decompositions live on different frequency grids")
    sigma = (dec_a.signal_modes.conj() @ dec_b.signal_modes.T) * dec_a.d_signal
    # round-off can push an exact unit overlap a hair above 1
    mag = np.abs(sigma)
    sigma = np.where(mag > 1, sigma / np.maximum(mag, 1), sigma)
    return ModeOverlap(sigma)


def cascade_mean_photons(spec: CascadeSpec):
    """Mean photons per (squeezer m, measurement n) pair and their total.

    <N_mn> = |sigma_mn|^2 e^{2(r_ms_n + r_s_m)} / 4 with the vacuum expectation
    of (a + a^dag)^2 equal to 1.  Cross-mode terms vanish by orthonormality.
    """
    sigma2 = np.abs(spec.overlap.sigma) ** 2
    r_eff = spec.r_squeezer[:, None] + spec.r_measurement[None, :]
    per_pair = sigma2 * np.exp(2 * r_eff) / 4
    return per_pair, float(per_pair.sum())


def temporal_mode(dec: SchmidtDecomposition, k: int = 0, oversample: int = 8):
    """Time-domain envelope of signal mode ``k`` (zero-padded inverse transform).

    Returns (t_fs, psi_t) with sum |psi|^2 dt = 1.
    """
    spec = dec.signal_modes[k]
    n = spec.size
    if n < 2:
        raise ValueError("mode has a single sample")
    npad = int(2 ** np.ceil(np.log2(n * oversample)))
    dw = dec.d_signal
    padded = np.zeros(npad, dtype=complex)
    start = (npad - n) // 2
    padded[start : start + n] = spec
    psi = np.fft.fftshift(np.fft.ifft(np.fft.ifftshift(padded))) * npad
    dt = 2 * np.pi / (npad * dw)
    t = (np.arange(npad) - npad // 2) * dt
    psi = psi / np.sqrt(np.sum(np.abs(psi) ** 2) * dt)
    return t, psi


def fwhm(x, y) -> float:
    """Full width at half maximum of a single-peaked sampled profile."""
    y = np.asarray(y, dtype=float)
    i = int(np.argmax(y))
    half = 0.5 * y[i]
    left = i
    while left > 0 and y[left] > half:
        left -= 1
    right = i
    while right < y.size - 1 and y[right] > half:
        right += 1
    if y[left] > half or y[right] > half:
        raise ValueError("profile does not fall to half maximum inside the window")
    xl = np.interp(half, [y[left], y[left + 1]], [x[left], x[left + 1]])
    xr = np.interp(half, [y[right], y[right - 1]], [x[right], x[right - 1]])
    return float(xr - xl)
