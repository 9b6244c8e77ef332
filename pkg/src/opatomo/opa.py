"""Measurement-OPA model: quadrature rotation and gain, photon-number
statistics, squeezing arithmetic and per-pulse sampling of P(N, phi).

Photon numbers follow N = (x_phi e^g)^2 in the large-gain limit, so a vacuum
input gives <N> = e^{2g}/2 with the vacuum variance fixed at 1/2.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf, roots_legendre

from .fockspace import VACUUM_VARIANCE, GaussianStateSpec

DEFAULT_SECONDARY_SQUEEZE_RATIO = 0.6
PERIOD_FS = 3.1  # 930 nm pump; 0.775 fs of delay is phi = pi/2


@dataclass(frozen=True)
class OpaGain:
    """Field gain e^g of the measurement amplifier.

    With the undepleted model the exponent follows the pump energy as
    g = b * sqrt(E); use :meth:`from_pump_energy` for that route.
    """

    g: float
    pump_energy: float | None = None
    b_coefficient: float | None = None

    def __post_init__(self):
        if self.g < 0:
            raise ValueError("gain exponent g must be >= 0")
        if self.b_coefficient is not None and self.b_coefficient <= 0:
            raise ValueError("b_coefficient must be > 0")
        if self.pump_energy is not None and self.pump_energy < 0:
            raise ValueError("pump_energy must be >= 0")

    @classmethod
    def from_pump_energy(cls, b: float, energy: float) -> "OpaGain":
        return cls(b * np.sqrt(energy), pump_energy=energy, b_coefficient=b)

    @property
    def amplitude_gain(self) -> float:
        return float(np.exp(self.g))

    @property
    def power_gain_db(self) -> float:
        return float(20 * self.g / np.log(10))


@dataclass
class PhaseMarginal:
    """Per-pulse photon numbers recorded at one measurement phase."""

    phi: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1:
            raise ValueError("samples must be 1-D")
        if np.any(self.samples < 0):
            raise ValueError("photon-number samples must be >= 0")

    def __len__(self):
        return self.samples.size

    def histogram(self, bins=100, range=None):
        counts, edges = np.histogram(self.samples, bins=bins, range=range)
        return edges, counts

    def mean(self) -> float:
        return float(self.samples.mean())


@dataclass(frozen=True)
class TwoModeModel:
    """Means of the fundamental and secondary mode plus a shift along N."""

    mean1: float
    mean2: float
    offset: float = 0.0

    def __post_init__(self):
        if self.mean1 < 0 or self.mean2 < 0 or self.offset < 0:
            raise ValueError("means and offset must be >= 0")
        if self.mean2 > self.mean1:
            raise ValueError("mean1 must be >= mean2 (mode 1 is the fundamental)")

    @property
    def mean(self) -> float:
        return self.mean1 + self.mean2 + self.offset


def rotate_quadratures(x, p, phi):
    """Quadratures seen by an amplifier at relative phase ``phi``."""
    c, s = np.cos(phi), np.sin(phi)
    return x * c + p * s, p * c - x * s


def photon_number(x_phi, p_phi, gain: OpaGain, large_gain: bool = False):
    amp = np.exp(gain.g)
    if large_gain:
        return (np.asarray(x_phi) * amp) ** 2
    n = (np.asarray(x_phi) * amp) ** 2 + (np.asarray(p_phi) / amp) ** 2 - 0.5
    return np.maximum(n, 0.0)


def p1_pdf(n, mean_n):
    """Single-mode photon-number density (a scaled chi-squared, one dof).

    Diverges as N^{-1/2} at the origin; returns inf at N = 0 and 0 below it.
    """
    n = np.asarray(n, dtype=float)
    if np.any(np.asarray(mean_n) <= 0):
        raise ValueError("mean_n must be > 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(-n / (2 * mean_n)) / np.sqrt(2 * np.pi * n * mean_n)
    out = np.where(n > 0, out, np.where(n == 0, np.inf, 0.0))
    return out if out.ndim else float(out)


def p1_cdf(n, mean_n):
    n = np.maximum(np.asarray(n, dtype=float), 0.0)
    return erf(np.sqrt(n / (2 * mean_n)))


_GL_ORDER = 20
_gl_x, _gl_w = roots_legendre(_GL_ORDER)


def _graded_nodes(upper: np.ndarray, scale: float):
    """Composite Gauss-Legendre nodes on [0, upper] refined towards 0.

    Panels shrink geometrically until they reach ``scale`` (the width of the
    narrowest Gaussian factor), so both broad and very narrow integrands are
    resolved.  Returns nodes and weights with shape (len(upper), n_nodes).
    """
    top = float(np.max(upper)) if np.size(upper) else 1.0
    levels = int(np.clip(np.ceil(np.log2(max(top, 1e-300) / (0.05 * scale))), 1, 60))
    frac = np.concatenate([[0.0], 2.0 ** -np.arange(levels, 0, -1), [1.0]])
    lo, hi = frac[:-1], frac[1:]
    half = 0.5 * (hi - lo)
    t = (lo + half)[:, None] + half[:, None] * _gl_x[None, :]
    wt = (half[:, None] * _gl_w[None, :]).ravel()
    t = t.ravel()
    upper = np.asarray(upper, dtype=float)[:, None]
    return upper * t[None, :], upper * wt[None, :]


def _convolve(n_eff, m1, m2, outer):
    """Integral over [0, n_eff] of outer(n_eff - n; m1) * p1(n; m2) dn.

    Split at n_eff/2; each half uses the substitution n = u^2 (or
    n_eff - n = v^2) that removes the inverse-square-root endpoint singularity.
    """
    n_eff = np.asarray(n_eff, dtype=float)
    half = 0.5 * n_eff
    root = np.sqrt(half)
    # first half: singular p1(n; m2) at n = 0
    u, wu = _graded_nodes(root, np.sqrt(m2))
    g2 = 2.0 / np.sqrt(2 * np.pi * m2) * np.exp(-(u**2) / (2 * m2))
    part_a = np.sum(wu * g2 * outer(n_eff[:, None] - u**2, m1), axis=1)
    # second half: substitute around the other endpoint
    v, wv = _graded_nodes(root, np.sqrt(m1))
    rest = n_eff[:, None] - v**2
    with np.errstate(divide="ignore", invalid="ignore"):
        f2 = np.where(rest > 0, np.exp(-rest / (2 * m2)) / np.sqrt(2 * np.pi * rest * m2), 0.0)
    if outer is p1_pdf:
        inner = 2.0 / np.sqrt(2 * np.pi * m1) * np.exp(-(v**2) / (2 * m1))
    else:
        # outer is the CDF; F1(v^2) is smooth in v so keep the 2v Jacobian
        inner = 2.0 * v * outer(v**2, m1)
    part_b = np.sum(wv * inner * f2, axis=1)
    return part_a + part_b


def p2_pdf(n, model: TwoModeModel):
    """Two-mode density: p1(mean1) convolved with p1(mean2), shifted by the offset."""
    m1, m2 = model.mean1, model.mean2
    if m1 <= 0 or m2 <= 0:
        raise ValueError("p2_pdf needs both means > 0")
    scalar = np.ndim(n) == 0
    n = np.atleast_1d(np.asarray(n, dtype=float))
    n_eff = n - model.offset
    out = np.zeros_like(n_eff)
    pos = n_eff > 0
    if np.any(pos):
        out[pos] = _convolve(n_eff[pos], m1, m2, p1_pdf)
    return float(out[0]) if scalar else out


def p2_cdf(n, model: TwoModeModel):
    m1, m2 = model.mean1, model.mean2
    scalar = np.ndim(n) == 0
    n = np.atleast_1d(np.asarray(n, dtype=float))
    n_eff = n - model.offset
    out = np.zeros_like(n_eff)
    pos = n_eff > 0
    if np.any(pos):
        finite = pos & np.isfinite(n_eff)
        if np.any(finite):
            out[finite] = _convolve(n_eff[finite], m1, m2, p1_cdf)
        out[pos & ~np.isfinite(n_eff)] = 1.0
    out = np.clip(out, 0.0, 1.0)
    return float(out[0]) if scalar else out


def squeezing_db(mean_n, mean_n_vac):
    """Squeezing relative to the calibrated shot noise, in dB."""
    mean_n = np.asarray(mean_n, dtype=float)
    if np.any(mean_n <= 0) or np.any(np.asarray(mean_n_vac) <= 0):
        raise ValueError("photon-number means must be > 0")
    out = 10 * np.log10(mean_n / mean_n_vac)
    return float(out) if out.ndim == 0 else out


def lossy_squeezing_db(r, eta, sign=-1):
    """Measured (anti-)squeezing after efficiency ``eta``; ``sign`` is -1 or +1."""
    if not 0 <= eta <= 1:
        raise ValueError("eta must lie in [0, 1]")
    if sign not in (-1, 1):
        raise ValueError("sign must be -1 or +1")
    r = np.asarray(r, dtype=float)
    out = 10 * np.log10((1 - eta) + eta * np.exp(sign * 2 * r))
    return float(out) if out.ndim == 0 else out


def phase_noise_variance(v_minus, v_plus, phi, sigma_phi):
    """Quadrature variance averaged over Gaussian phase jitter of width sigma_phi.

    phi = 0 is the anti-squeezed axis, so the noiseless limit is
    V+ cos^2(phi) + V- sin^2(phi).
    """
    if v_minus <= 0 or v_plus <= 0 or sigma_phi < 0:
        raise ValueError("variances must be > 0 and sigma_phi >= 0")
    phi = np.asarray(phi, dtype=float)
    mean = 0.5 * (v_minus + v_plus)
    out = mean + 0.5 * (v_plus - v_minus) * np.exp(-2 * sigma_phi**2) * np.cos(2 * phi)
    return float(out) if out.ndim == 0 else out


def effective_pump_energy(pump_main_amp, pump_leak_amp, phi, energy_scale=1.0):
    """|A_m + A_s e^{2i phi}|^2: leaked squeezer pump interfering in the measurement OPA.

    The pump phase advances twice as fast as the quadrature phase, so the
    anti-squeezed setting (phi = 0) sees constructive interference.
    """
    if pump_main_amp < 0 or pump_leak_amp < 0:
        raise ValueError("amplitudes must be >= 0")
    phi = np.asarray(phi, dtype=float)
    return energy_scale * np.abs(pump_main_amp + pump_leak_amp * np.exp(2j * phi)) ** 2


def shot_noise_vs_phase(pump_main_amp, pump_leak_amp, phi, b, energy_scale=1.0):
    """Vacuum mean photon number e^{2g}/2 with g = b sqrt(E_eff(phi))."""
    e_eff = effective_pump_energy(pump_main_amp, pump_leak_amp, phi, energy_scale)
    out = np.exp(2 * b * np.sqrt(e_eff)) * VACUUM_VARIANCE
    return float(out) if np.ndim(out) == 0 else out


def delay_to_phase(delay_fs, period_fs=PERIOD_FS):
    """Pump-delay to measurement phase; a quarter period is phi = pi/2."""
    return 2 * np.pi * np.asarray(delay_fs, dtype=float) / period_fs


def secondary_variance(state: GaussianStateSpec, phi, squeeze_ratio=DEFAULT_SECONDARY_SQUEEZE_RATIO):
    """Variance of the second Schmidt mode: same purity, squeezing r2 = ratio * r1."""
    r2 = squeeze_ratio * state.squeezing_parameter
    scale = np.sqrt(state.squeezed_variance * state.antisqueezed_variance)
    phi = np.asarray(phi, dtype=float)
    return scale * (np.exp(2 * r2) * np.cos(phi) ** 2 + np.exp(-2 * r2) * np.sin(phi) ** 2)


def substream(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for substream ``index`` (key = seed XOR index)."""
    return np.random.Generator(np.random.Philox(key=(int(seed) ^ int(index)) & (2**64 - 1)))


def sample_pulse_train(
    state: GaussianStateSpec,
    gain: OpaGain,
    secondary_mean_ratio: float,
    offset: float,
    phases: Sequence[float],
    pulses_per_phase: int,
    seed: int,
    secondary_squeeze_ratio: float = DEFAULT_SECONDARY_SQUEEZE_RATIO,
) -> list[PhaseMarginal]:
    """Simulate detector-integrated photon numbers for each measurement phase.

    The fundamental mode contributes e^{2g} x^2 with x drawn from the state's
    quadrature distribution at ``phi``.  The secondary mode carries
    ``secondary_mean_ratio`` times the fundamental's vacuum-level mean, scaled
    by its own (weaker) squeezing.  ``offset`` is added to every pulse.
    """
    phases = list(phases)
    if not phases:
        raise ValueError("phase list is empty")
    if pulses_per_phase < 1:
        raise ValueError("pulses_per_phase must be >= 1")
    if secondary_mean_ratio < 0 or offset < 0:
        raise ValueError("secondary_mean_ratio and offset must be >= 0")
    amp2 = np.exp(2 * gain.g)
    out = []
    for k, phi in enumerate(phases):
        rng = substream(seed, k)
        x = rng.normal(0.0, np.sqrt(state.variance_at(phi)), pulses_per_phase)
        z = rng.standard_normal(pulses_per_phase)
        mean2 = secondary_mean_ratio * amp2 * secondary_variance(state, phi, secondary_squeeze_ratio)
        n = amp2 * x**2 + mean2 * z**2 + offset
        out.append(PhaseMarginal(float(phi), n))
    return out


class MarginalFormatError(ValueError):
    pass


def write_marginals_csv(path, marginals: Sequence[PhaseMarginal]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["phi_rad", "N"])
        for m in marginals:
            phi = repr(float(m.phi))
            for n in m.samples:
                w.writerow([phi, repr(float(n))])


def read_marginals_csv(path) -> list[PhaseMarginal]:
    """Read long-format ``phi_rad,N`` rows; phases keep first-seen order."""
    groups: dict[float, list[float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["phi_rad", "N"]:
            raise MarginalFormatError(f"{path}: row 1: expected header 'phi_rad,N', got {header}")
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise MarginalFormatError(f"{path}: row {row_no}: expected 2 fields, got {len(row)}")
            try:
                phi, n = float(row[0]), float(row[1])
            except ValueError:
                raise MarginalFormatError(f"{path}: row {row_no}: non-numeric value {row}") from None
            if not (np.isfinite(phi) and np.isfinite(n)) or n < 0:
                raise MarginalFormatError(f"{path}: row {row_no}: invalid value {row}")
            groups.setdefault(phi, []).append(n)
    if not groups:
        raise MarginalFormatError(f"{path}: no data rows")
    return [PhaseMarginal(phi, np.array(ns)) for phi, ns in groups.items()]
