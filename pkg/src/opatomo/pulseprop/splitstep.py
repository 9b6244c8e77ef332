"""Symmetric split-step propagation of the degenerate chi(2) coupled envelopes,
pseudo-vacuum seeding, and the gain-versus-pump-energy sweep.

In the frame moving with the signal group velocity and with zero carrier
phase mismatch:

    dA_s/dz = i D_s A_s + i kappa A_p conj(A_s)
    dA_p/dz = i D_p A_p + i kappa A_s^2

Envelopes are in sqrt(W), time in fs, length in mm.  The nonlinear terms
conserve |A_p|^2 + |A_s|^2 pointwise, which for a degenerate process is the
Manley-Rowe photon-flux invariant 2 N_p + N_s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.fft as sfft
from scipy.constants import hbar

from ..opa import PhaseMarginal, substream
from .dispersion import PUMP_NM, WaveguideDispersion, omega_of, wavelength_of

FS = 1e-15
PJ = 1e-12
CONSERVATION_TOL = 1e-6
_MAX_NL_STEP = 0.02  # kappa * |A| * h per RK4 substep


class ResolutionError(RuntimeError):
    """The z-grid is too coarse to keep the photon-flux invariant."""


@dataclass
class PulseField:
    """Complex envelope on a uniform time grid; leading axes may index trials."""

    time_grid_fs: np.ndarray
    envelope: np.ndarray
    carrier_nm: float

    def __post_init__(self):
        t = np.asarray(self.time_grid_fs, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("time grid must be 1-D")
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
            raise ValueError("time grid must be uniform")
        env = np.asarray(self.envelope, dtype=complex)
        if env.shape[-1] != t.size:
            raise ValueError("envelope does not match the time grid")
        self.time_grid_fs = t
        self.envelope = env

    @property
    def dt(self) -> float:
        return float(self.time_grid_fs[1] - self.time_grid_fs[0])

    def energy(self):
        """Pulse energy in J (per trial if batched)."""
        return np.sum(np.abs(self.envelope) ** 2, axis=-1) * self.dt * FS

    def spectrum(self) -> np.ndarray:
        return np.fft.fft(self.envelope, axis=-1)

    def angular_frequencies(self) -> np.ndarray:
        """Detuning of each FFT bin; A(t) = sum_k A_k exp(-i omega_k t)."""
        return -2 * np.pi * np.fft.fftfreq(self.time_grid_fs.size, self.dt)

    @classmethod
    def gaussian(cls, time_grid_fs, fwhm_fs, energy_pj, carrier_nm, phase=0.0):
        """Transform-limited Gaussian with intensity FWHM ``fwhm_fs``."""
        t = np.asarray(time_grid_fs, dtype=float)
        dt = t[1] - t[0]
        env = np.exp(-2 * np.log(2) * t**2 / fwhm_fs**2)
        scale = np.sqrt(energy_pj * PJ / (np.sum(env**2) * dt * FS)) if energy_pj > 0 else 0.0
        return cls(t, scale * env * np.exp(1j * phase), carrier_nm)


def time_grid(points: int = 2**12, window_fs: float = 4000.0) -> np.ndarray:
    dt = window_fs / points
    return (np.arange(points) - points // 2) * dt


@dataclass(frozen=True)
class PropagationConfig:
    length_mm: float
    step_count: int
    kappa: float
    dispersion: WaveguideDispersion = field(repr=False)
    noise_seed: int = 0
    pump_nm: float = PUMP_NM
    substeps: int | None = None

    def __post_init__(self):
        if self.length_mm <= 0:
            raise ValueError("length_mm must be > 0")
        if self.step_count < 100:
            raise ValueError("step_count must be >= 100")
        if self.substeps is not None and self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    @property
    def dz(self) -> float:
        return self.length_mm / self.step_count


def _linear_operators(config: PropagationConfig, omega: np.ndarray):
    d = config.dispersion
    wp = omega_of(config.pump_nm)
    ws = wp / 2
    d.check(config.pump_nm)
    d.check(wavelength_of(ws))
    k1_diff = float(d.beta(wp, 1) - d.beta(ws, 1))
    k2p = float(d.beta(wp, 2))
    k2s = float(d.beta(ws, 2))
    half = 0.5 * config.dz
    lin_p = np.exp(1j * (k1_diff * omega + 0.5 * k2p * omega**2) * half)
    lin_s = np.exp(1j * (0.5 * k2s * omega**2) * half)
    return lin_p, lin_s


@numba.njit(cache=True, nogil=True)
def _nonlinear_step(ap, as_, kappa, h, nsub, max_nl_step):
    """RK4 over one z-step for every sample, in place.

    nsub > 0 fixes the substep count; nsub == 0 picks it per sample from the
    local amplitude so that kappa*|A|*h_sub <= max_nl_step.
    """
    ik = 1j * kappa
    for i in range(ap.size):
        a = ap[i]
        s = as_[i]
        n = nsub
        if n == 0:
            amp = np.sqrt(a.real**2 + a.imag**2 + s.real**2 + s.imag**2)
            n = max(1, int(np.ceil(kappa * amp * h / max_nl_step)))
        hs = h / n
        for _ in range(n):
            k1a = ik * s * s
            k1s = ik * a * np.conj(s)
            a2 = a + 0.5 * hs * k1a
            s2 = s + 0.5 * hs * k1s
            k2a = ik * s2 * s2
            k2s = ik * a2 * np.conj(s2)
            a3 = a + 0.5 * hs * k2a
            s3 = s + 0.5 * hs * k2s
            k3a = ik * s3 * s3
            k3s = ik * a3 * np.conj(s3)
            a4 = a + hs * k3a
            s4 = s + hs * k3s
            k4a = ik * s4 * s4
            k4s = ik * a4 * np.conj(s4)
            a = a + hs / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
            s = s + hs / 6.0 * (k1s + 2.0 * k2s + 2.0 * k3s + k4s)
        ap[i] = a
        as_[i] = s


def photon_flux_invariant(pump: np.ndarray, signal: np.ndarray):
    """Sum of |A_p|^2 + |A_s|^2 over time (per trial); proportional to 2 N_p + N_s."""
    return np.sum(np.abs(pump) ** 2 + np.abs(signal) ** 2, axis=-1)


def split_step_propagate(
    pump: PulseField,
    signal: PulseField,
    config: PropagationConfig,
    record: list | None = None,
    tolerance: float = CONSERVATION_TOL,
):
    """Propagate pump and signal through the waveguide.

    Each z-step is half dispersion, full nonlinearity (RK4), half dispersion;
    adjacent half steps are fused.  If ``record`` is a list, the relative
    drift of the photon-flux invariant after every step is appended to it.
    Raises :class:`ResolutionError` when the drift exceeds ``tolerance``.
    """
    if pump.time_grid_fs.shape != signal.time_grid_fs.shape or not np.allclose(
        pump.time_grid_fs, signal.time_grid_fs
    ):
        raise ValueError("pump and signal must share a time grid")
    shape = np.broadcast_shapes(pump.envelope.shape, signal.envelope.shape)
    ap = np.array(np.broadcast_to(pump.envelope, shape))
    as_ = np.array(np.broadcast_to(signal.envelope, shape))
    half_p, half_s = _linear_operators(config, pump.angular_frequencies())
    full_p, full_s = half_p**2, half_s**2
    nsub = config.substeps or 0
    start = photon_flux_invariant(ap, as_)
    ref = np.where(start > 0, start, 1.0)

    ap_w = sfft.fft(ap, axis=-1) * half_p
    as_w = sfft.fft(as_, axis=-1) * half_s
    for step in range(config.step_count):
        if config.kappa != 0.0:
            ap = np.ascontiguousarray(sfft.ifft(ap_w, axis=-1))
            as_ = np.ascontiguousarray(sfft.ifft(as_w, axis=-1))
            fa, fs = ap.reshape(-1), as_.reshape(-1)
            _nonlinear_step(fa, fs, config.kappa, config.dz, nsub, _MAX_NL_STEP)
            if record is not None:
                record.append(float(np.max(np.abs(photon_flux_invariant(ap, as_) / ref - 1))))
            ap_w = sfft.fft(ap, axis=-1)
            as_w = sfft.fft(as_, axis=-1)
        elif record is not None:
            record.append(0.0)
        last = step == config.step_count - 1
        ap_w *= half_p if last else full_p
        as_w *= half_s if last else full_s
    ap = sfft.ifft(ap_w, axis=-1)
    as_ = sfft.ifft(as_w, axis=-1)
    drift = float(np.max(np.abs(photon_flux_invariant(ap, as_) / ref - 1)))
    if drift > tolerance:
        raise ResolutionError(
            f"photon-flux drift {drift:.2e} exceeds {tolerance:.0e} with {config.step_count} steps; "
            "increase step_count"
        )
    return (
        PulseField(pump.time_grid_fs, ap, pump.carrier_nm),
        PulseField(signal.time_grid_fs, as_, signal.carrier_nm),
    )


# gain versus pump energy -----------------------------------------------------


@dataclass(frozen=True)
class GainCurve:
    energy_pj: np.ndarray
    gain_db: np.ndarray
    slope_db_per_sqrt_pj: float
    intercept_db: float
    fit_r2: float
    fit_range_pj: tuple[float, float]
    remaining_pump_fraction: np.ndarray

    @property
    def model_gain_db(self) -> np.ndarray:
        return self.slope_db_per_sqrt_pj * np.sqrt(self.energy_pj) + self.intercept_db

    @property
    def b_coefficient(self) -> float:
        """b in G_dB = 10 log10(exp(b sqrt(E))), with E in J."""
        return float(self.slope_db_per_sqrt_pj * np.log(10) / 10 / np.sqrt(PJ))

    def knee_energy(self, threshold_db: float = 1.0) -> float | None:
        """First energy where the gain falls more than ``threshold_db`` below the fit."""
        short = self.model_gain_db - self.gain_db
        hits = np.nonzero(short > threshold_db)[0]
        return float(self.energy_pj[hits[0]]) if hits.size else None

    def rows(self):
        return list(zip(self.energy_pj.tolist(), self.gain_db.tolist(), self.model_gain_db.tolist()))


def fit_sqrt_law(energy_pj, gain_db):
    """Least-squares line of gain (dB) against sqrt(E); returns slope, intercept, R^2."""
    x = np.sqrt(np.asarray(energy_pj, dtype=float))
    y = np.asarray(gain_db, dtype=float)
    a = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def seeded_gain(config, grid, energy_pj, pump_fwhm_fs=70.0, seed_energy_fj=1.0, seed_fwhm_fs=70.0):
    """Signal energy gain (dB) and remaining pump fraction for one pump energy.

    The seed sits on the amplified quadrature (phase pi/4 against a real pump).
    """
    pump = PulseField.gaussian(grid, pump_fwhm_fs, energy_pj, config.pump_nm)
    seed = PulseField.gaussian(grid, seed_fwhm_fs, seed_energy_fj * 1e-3, 2 * config.pump_nm, phase=np.pi / 4)
    p_out, s_out = split_step_propagate(pump, seed, config)
    gain = 10 * np.log10(s_out.energy() / seed.energy())
    remaining = p_out.energy() / pump.energy() if energy_pj > 0 else 1.0
    return float(gain), float(remaining)


def gain_curve(
    config: PropagationConfig,
    energies_pj,
    grid=None,
    fit_range_pj=None,
    pump_fwhm_fs=70.0,
    seed_energy_fj=1.0,
    map_fn=map,
) -> GainCurve:
    """Sweep pump energy, fit the undepleted sqrt(E) law over ``fit_range_pj``.

    ``fit_range_pj`` defaults to the lowest decade of the sweep.  ``map_fn``
    may be a pool's ordered ``map`` for parallel sweeps.
    """
    energies = np.asarray(sorted(energies_pj), dtype=float)
    grid = time_grid() if grid is None else grid
    results = list(
        map_fn(lambda e: seeded_gain(config, grid, e, pump_fwhm_fs, seed_energy_fj), energies)
    )
    gains = np.array([g for g, _ in results])
    remaining = np.array([r for _, r in results])
    if fit_range_pj is None:
        fit_range_pj = (energies[0], 10 * energies[0])
    lo, hi = fit_range_pj
    sel = (energies >= lo * (1 - 1e-9)) & (energies <= hi * (1 + 1e-9))
    if sel.sum() < 3:
        raise ValueError("need at least 3 energies inside the fit range")
    slope, intercept, r2 = fit_sqrt_law(energies[sel], gains[sel])
    return GainCurve(energies, gains, slope, intercept, r2, (float(lo), float(hi)), remaining)


# pseudo-vacuum amplification -------------------------------------------------


def vacuum_noise(rng: np.random.Generator, n_time: int, dt_fs: float, carrier_nm: float, shape=()):
    """Complex white noise carrying hbar*omega/2 of energy per spectral bin."""
    photon = hbar * omega_of(carrier_nm) / FS
    sigma = np.sqrt(photon / 2 / (dt_fs * FS) / 2)
    return sigma * (rng.standard_normal((*shape, n_time)) + 1j * rng.standard_normal((*shape, n_time)))


@dataclass(frozen=True)
class VacuumOutputs:
    """Output signal spectra of a batch of pseudo-vacuum trials at one pump energy."""

    pump_energy_pj: float
    spectra: np.ndarray = field(repr=False)
    omega: np.ndarray = field(repr=False)
    carrier_nm: float
    dt_fs: float
    remaining_pump_fraction: float


def simulate_vacuum_outputs(
    config: PropagationConfig,
    pump_energy_pj: float,
    trials: int,
    grid=None,
    seed: int | None = None,
    pump_fwhm_fs: float = 70.0,
    batch: int = 250,
) -> VacuumOutputs:
    """Amplify ``trials`` independent pseudo-vacuum realisations.

    Trial k draws its noise from substream(seed, k), so results do not
    depend on the batch size.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed = config.noise_seed if seed is None else seed
    grid = time_grid(2**10, 1500.0) if grid is None else np.asarray(grid)
    dt = float(grid[1] - grid[0])
    signal_nm = 2 * config.pump_nm
    pump = PulseField.gaussian(grid, pump_fwhm_fs, pump_energy_pj, config.pump_nm)
    noise = np.stack([vacuum_noise(substream(seed, k), grid.size, dt, signal_nm) for k in range(trials)])
    spectra = np.empty((trials, grid.size), dtype=complex)
    remaining = []
    for start in range(0, trials, batch):
        chunk = noise[start : start + batch]
        p_out, s_out = split_step_propagate(pump, PulseField(grid, chunk, signal_nm), config)
        spectra[start : start + batch] = s_out.spectrum()
        remaining.append(p_out.energy())
    frac = float(np.mean(np.concatenate(remaining)) / pump.energy()) if pump_energy_pj > 0 else 1.0
    return VacuumOutputs(float(pump_energy_pj), spectra, pump.angular_frequencies(), signal_nm, dt, frac)


def detect(outputs: VacuumOutputs, filter_band_nm=None) -> PhaseMarginal:
    """Integrate the (optionally band-passed) output energy of every trial.

    Samples are in units of the mean input vacuum energy inside the detection
    band (hbar*omega/2 per spectral bin), so they read as gain over shot noise.
    """
    if filter_band_nm is None:
        mask = np.ones(outputs.omega.size, dtype=bool)
    else:
        lo, hi = sorted(filter_band_nm)
        lam = wavelength_of(omega_of(outputs.carrier_nm) + outputs.omega)
        mask = (lam >= lo) & (lam <= hi)
        if not np.any(mask):
            raise ValueError(f"filter band {filter_band_nm} nm lies outside the simulation grid")
    n_time = outputs.omega.size
    energy = np.sum(np.abs(outputs.spectra[:, mask]) ** 2, axis=1) / n_time * outputs.dt_fs * FS
    half_photon = hbar * omega_of(outputs.carrier_nm) / FS / 2
    return PhaseMarginal(0.0, energy / (mask.sum() * half_photon))


def vacuum_histogram(
    config: PropagationConfig,
    pump_energy_pj: float,
    trials: int,
    filter_band_nm=None,
    seed: int | None = None,
    grid=None,
) -> PhaseMarginal:
    outputs = simulate_vacuum_outputs(config, pump_energy_pj, trials, grid=grid, seed=seed)
    return detect(outputs, filter_band_nm)


def histogram_peak(samples, bins: int = 40, upper_quantile: float = 0.995) -> float:
    """Centre of the most populated bin, in units of the sample mean."""
    x = np.asarray(samples, dtype=float) / np.mean(samples)
    counts, edges = np.histogram(x, bins=bins, range=(0.0, float(np.quantile(x, upper_quantile))))
    k = int(np.argmax(counts))
    return float(0.5 * (edges[k] + edges[k + 1]))
