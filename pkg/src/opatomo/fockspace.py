"""Truncated Fock-space numerics for single-mode states.

Conventions: hbar = 1, x = (a + a^dag)/sqrt(2), so the vacuum quadrature
variance is 1/2.  The measured quadrature at phase ``phi`` is
``x cos(phi) + p sin(phi)`` and ``phi = 0`` picks the anti-squeezed axis.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import diags
from scipy.sparse.linalg import expm_multiply
from scipy.special import gammaln

VACUUM_VARIANCE = 0.5
DEFAULT_DIM = 40
MAX_TRUNCATION_DEFICIT = 1e-6

HERMITIAN_ATOL = 1e-12
TRACE_ATOL = 1e-10
EIGEN_FLOOR = -1e-10


class TruncationError(ValueError):
    """The Fock cutoff is too small for the requested state."""


class InvalidStateError(ValueError):
    pass


@dataclass(frozen=True)
class DensityMatrix:
    """Validated single-mode density matrix in a truncated Fock basis.

    ``truncation_deficit`` records the population of the untruncated state
    that fell outside the basis before renormalisation.
    """

    elements: np.ndarray
    truncation_deficit: float = 0.0

    def __post_init__(self):
        rho = np.array(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise InvalidStateError(f"density matrix must be square, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_ATOL:
            raise InvalidStateError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise InvalidStateError(f"trace is {tr!r}, expected 1")
        min_eig = np.linalg.eigvalsh(rho).min()
        if min_eig < EIGEN_FLOOR:
            raise InvalidStateError(f"negative eigenvalue {min_eig:.3e}")
        rho.setflags(write=False)
        object.__setattr__(self, "elements", rho)

    @property
    def dim(self) -> int:
        return self.elements.shape[0]

    @classmethod
    def from_unnormalized(cls, matrix, truncation_deficit=0.0):
        """Hermitise and trace-normalise ``matrix`` before validation."""
        m = np.asarray(matrix, dtype=complex)
        m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real, truncation_deficit)

    @classmethod
    def from_ket(cls, psi, truncation_deficit=0.0):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls.from_unnormalized(np.outer(psi, psi.conj()), truncation_deficit)

    def mean_photon_number(self) -> float:
        return float(np.real(np.sum(np.arange(self.dim) * np.diag(self.elements))))

    def purity(self) -> float:
        return float(np.real(np.trace(self.elements @ self.elements)))

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "re": self.elements.real.ravel().tolist(),
            "im": self.elements.imag.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DensityMatrix":
        dim = int(data["dim"])
        re = np.asarray(data["re"], dtype=float)
        im = np.asarray(data["im"], dtype=float)
        if re.size != dim * dim or im.size != dim * dim:
            raise InvalidStateError(f"expected {dim * dim} elements for dim={dim}")
        return cls((re + 1j * im).reshape(dim, dim))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def from_json(cls, path) -> "DensityMatrix":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class GaussianStateSpec:
    """Zero-mean single-mode Gaussian state given by its principal variances."""

    squeezed_variance: float
    antisqueezed_variance: float

    def __post_init__(self):
        vm, vp = self.squeezed_variance, self.antisqueezed_variance
        if vm <= 0 or vp <= 0:
            raise ValueError("variances must be positive")
        if vm > vp * (1 + 1e-12):
            raise ValueError("squeezed_variance must not exceed antisqueezed_variance")
        if vm * vp < 0.25 * (1 - 1e-12):
            raise ValueError(f"uncertainty bound violated: V-*V+ = {vm * vp:.6g} < 1/4")

    @classmethod
    def from_db(cls, squeezing_db: float, antisqueezing_db: float) -> "GaussianStateSpec":
        """Build from dB levels relative to vacuum, e.g. (-2.41, 3.87)."""
        return cls(
            VACUUM_VARIANCE * 10 ** (squeezing_db / 10),
            VACUUM_VARIANCE * 10 ** (antisqueezing_db / 10),
        )

    @classmethod
    def vacuum(cls) -> "GaussianStateSpec":
        return cls(VACUUM_VARIANCE, VACUUM_VARIANCE)

    @property
    def squeezing_parameter(self) -> float:
        return 0.25 * np.log(self.antisqueezed_variance / self.squeezed_variance)

    @property
    def thermal_occupation(self) -> float:
        return max(np.sqrt(self.squeezed_variance * self.antisqueezed_variance) - 0.5, 0.0)

    def variance_at(self, phi):
        """Quadrature variance at phase ``phi`` (phi = 0 is anti-squeezed)."""
        phi = np.asarray(phi, dtype=float)
        return self.antisqueezed_variance * np.cos(phi) ** 2 + self.squeezed_variance * np.sin(phi) ** 2

    def wigner(self, x, p):
        """Closed-form Wigner function on the meshgrid of ``x`` and ``p``."""
        X, P = np.meshgrid(np.asarray(x, float), np.asarray(p, float), indexing="ij")
        vx, vp = self.antisqueezed_variance, self.squeezed_variance
        return np.exp(-X**2 / (2 * vx) - P**2 / (2 * vp)) / (2 * np.pi * np.sqrt(vx * vp))


@dataclass(frozen=True)
class WignerGrid:
    x_axis: np.ndarray
    p_axis: np.ndarray
    values: np.ndarray = field(repr=False)

    def cell_area(self) -> float:
        return float(np.mean(np.diff(self.x_axis)) * np.mean(np.diff(self.p_axis)))

    def total(self) -> float:
        """Riemann sum of W over the grid."""
        return float(self.values.sum() * self.cell_area())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "p", "w"])
            for i, x in enumerate(self.x_axis):
                for j, p in enumerate(self.p_axis):
                    w.writerow([repr(float(x)), repr(float(p)), repr(float(self.values[i, j]))])

    @classmethod
    def from_csv(cls, path) -> "WignerGrid":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xs = np.unique(data[:, 0])
        ps = np.unique(data[:, 1])
        return cls(xs, ps, data[:, 2].reshape(xs.size, ps.size))


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)


def vacuum_dm(dim: int = DEFAULT_DIM) -> DensityMatrix:
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    return DensityMatrix(rho)


def _squeezed_vacuum_amplitudes(r: float, n_max: int) -> np.ndarray:
    """Amplitudes <k|psi> for k < n_max; anti-squeezed along x for r > 0."""
    amps = np.zeros(n_max)
    k = np.arange(0, n_max, 2)
    n = k // 2
    t = np.tanh(r)
    if t == 0.0:
        amps[0] = 1.0
        return amps
    log_mag = (
        n * np.log(abs(t)) + 0.5 * gammaln(k + 1) - n * np.log(2.0) - gammaln(n + 1)
        - 0.5 * np.log(np.cosh(r))
    )
    amps[k] = np.sign(t) ** n * np.exp(log_mag)
    return amps


def squeezed_vacuum_dm(r: float, dim: int = DEFAULT_DIM) -> DensityMatrix:
    """Pure squeezed vacuum with Var(x) = e^{2r}/2 and Var(p) = e^{-2r}/2."""
    if dim < 2:
        raise ValueError("dim must be >= 2")
    if abs(r) > 3:
        raise ValueError("|r| must be <= 3")
    amps = _squeezed_vacuum_amplitudes(r, dim)
    deficit = float(max(1.0 - np.sum(amps**2), 0.0))
    if deficit > MAX_TRUNCATION_DEFICIT:
        raise TruncationError(f"dim={dim} loses {deficit:.2e} of the population for r={r}")
    return DensityMatrix.from_ket(amps, truncation_deficit=deficit)


def _thermal_populations(nbar: float, tail: float = 1e-15) -> np.ndarray:
    if nbar <= 0:
        return np.array([1.0])
    q = nbar / (nbar + 1)
    kmax = int(np.ceil(np.log(tail) / np.log(q))) + 1
    return (1 - q) * q ** np.arange(kmax)


def gaussian_dm_from_variances(spec: GaussianStateSpec, dim: int = DEFAULT_DIM) -> DensityMatrix:
    """Squeezed thermal state S(r) rho_th S(r)^dag with the given variances.

    ``r`` and the thermal occupation follow from V-/+ = (nbar + 1/2) e^{-/+2r}.
    The squeeze operator acts on a padded basis and the result is cut to
    ``dim``; the population lost by the cut is checked and stored.
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    r = spec.squeezing_parameter
    if r > 3:
        raise ValueError("squeezing parameter above 3 is not supported")
    pops = _thermal_populations(spec.thermal_occupation)
    n_work = max(4 * dim, dim + 120, 2 * pops.size + 120)
    if r == 0.0:
        full = np.diag(np.concatenate([pops, np.zeros(max(n_work - pops.size, 0))]))[:n_work, :n_work]
    else:
        a = diags(np.sqrt(np.arange(1, n_work, dtype=float)), 1, format="csc")
        gen = 0.5 * r * (a.T @ a.T - a @ a)
        kets = np.zeros((n_work, pops.size))
        kets[np.arange(pops.size), np.arange(pops.size)] = 1.0
        kets = expm_multiply(gen, kets)
        full = (kets * pops) @ kets.T
    block = full[:dim, :dim]
    deficit = float(max(1.0 - np.trace(block).real, 0.0))
    if deficit > MAX_TRUNCATION_DEFICIT:
        raise TruncationError(f"dim={dim} loses {deficit:.2e} of the population")
    return DensityMatrix.from_unnormalized(block, truncation_deficit=deficit)


def wigner(rho: DensityMatrix, x_axis, p_axis) -> WignerGrid:
    """Wigner function on an (x, p) grid from the Fock expansion.

    Uses the three-term recurrence for the Fock-pair kernels W_mn (these are
    Laguerre polynomials times a Gaussian), which stays bounded by 1/pi and
    avoids the overflow of evaluating high-order Laguerre polynomials directly.
    """
    x_axis = np.asarray(x_axis, dtype=float)
    p_axis = np.asarray(p_axis, dtype=float)
    for ax in (x_axis, p_axis):
        if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0):
            raise ValueError("axes must be strictly increasing 1-D arrays")
    r = rho.elements
    dim = rho.dim
    X, P = np.meshgrid(x_axis, p_axis, indexing="ij")
    alpha2 = np.sqrt(2.0) * (X + 1j * P)  # 2*alpha, alpha = (x + ip)/sqrt(2)

    wlist = [None] * dim
    wlist[0] = np.exp(-0.5 * np.abs(alpha2) ** 2) / np.pi
    w = r[0, 0].real * wlist[0]
    for n in range(1, dim):
        wlist[n] = alpha2 * wlist[n - 1] / np.sqrt(n)
        w = w + 2 * np.real(r[0, n] * wlist[n])
    for m in range(1, dim):
        temp = wlist[m]
        wlist[m] = (np.conj(alpha2) * temp - np.sqrt(m) * wlist[m - 1]) / np.sqrt(m)
        w = w + np.real(r[m, m] * wlist[m])
        for n in range(m + 1, dim):
            temp2 = (alpha2 * wlist[n - 1] - np.sqrt(m) * temp) / np.sqrt(n)
            temp = wlist[n]
            wlist[n] = temp2
            w = w + 2 * np.real(r[m, n] * wlist[n])
    return WignerGrid(x_axis, p_axis, np.real(w))


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(m)
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.conj().T


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2.

    Evaluated as the squared nuclear norm of sqrt(rho) sqrt(sigma), which is
    symmetric in its arguments and stays accurate for rank-deficient states.
    """
    if rho.dim != sigma.dim:
        raise ValueError(f"dimension mismatch: {rho.dim} vs {sigma.dim}")
    prod = _sqrtm_psd(rho.elements) @ _sqrtm_psd(sigma.elements)
    f = np.sum(np.linalg.svd(prod, compute_uv=False)) ** 2
    return float(min(max(f, 0.0), 1.0))


def _moments(rho: DensityMatrix):
    a = annihilation(rho.dim)
    r = rho.elements
    mean_a = np.trace(r @ a)
    mean_a2 = np.trace(r @ a @ a)
    mean_n = np.real(np.trace(r @ a.T @ a))
    return mean_a, mean_a2, mean_n


def quadrature_variance(rho: DensityMatrix, phi) -> float | np.ndarray:
    """Var(x cos(phi) + p sin(phi)), evaluated from normal-ordered moments."""
    phi = np.asarray(phi, dtype=float)
    mean_a, mean_a2, mean_n = _moments(rho)
    rot = np.exp(-1j * phi)
    second = np.real(mean_a2 * rot**2) + mean_n + 0.5
    first = np.sqrt(2.0) * np.real(mean_a * rot)
    out = second - first**2
    return float(out) if out.ndim == 0 else out


def quadrature_covariance(rho: DensityMatrix) -> np.ndarray:
    """2x2 symmetrised covariance matrix of (x, p)."""
    v0 = quadrature_variance(rho, 0.0)
    v90 = quadrature_variance(rho, np.pi / 2)
    v45 = quadrature_variance(rho, np.pi / 4)
    cxp = v45 - 0.5 * (v0 + v90)
    return np.array([[v0, cxp], [cxp, v90]])


def principal_variances(rho: DensityMatrix) -> tuple[float, float]:
    """(min, max) of the quadrature variance over all phases."""
    lo, hi = np.linalg.eigvalsh(quadrature_covariance(rho))
    return float(lo), float(hi)
