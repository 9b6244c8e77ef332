"""Shot-noise calibration, two-mode histogram fitting and maximum-likelihood
state reconstruction from phase-resolved photon-number data."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import optimize, stats

from .fockspace import (
    VACUUM_VARIANCE,
    DensityMatrix,
    GaussianStateSpec,
    WignerGrid,
    fidelity,
    gaussian_dm_from_variances,
    principal_variances,
    wigner,
)
from .opa import PhaseMarginal, TwoModeModel, p2_cdf, read_marginals_csv, substream

MIN_FIT_SAMPLES = 1000
BOOTSTRAP_RESAMPLES = 100
RESAMPLE_COUNT = 200_000
_LOG_RATIO_FLOOR = 14.0  # mean2 >= mean1 * e^-14 inside the simplex


class CalibrationError(ValueError):
    pass


class FitConvergenceError(RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class LikelihoodDecreaseError(RuntimeError):
    """The reconstruction lowered the log-likelihood; this indicates a numerical fault."""


class ManifestError(ValueError):
    pass


# data containers --------------------------------------------------------------


def phase_span(phases) -> float:
    """Smallest arc (mod pi) covering all phases; variances are pi-periodic."""
    p = np.sort(np.mod(np.asarray(phases, dtype=float), np.pi))
    if p.size < 2:
        return 0.0
    gaps = np.diff(np.concatenate([p, [p[0] + np.pi]]))
    return float(np.pi - gaps.max())


@dataclass
class HistogramSet:
    marginals: list[PhaseMarginal]
    vacuum_reference: list[PhaseMarginal]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.vacuum_reference:
            raise ValueError("vacuum_reference is empty")
        if len(set(self.phases)) < 3:
            raise ValueError("need at least 3 distinct phases")
        if phase_span(self.phases) < np.pi / 2 - 1e-9:
            raise ValueError("phases must span at least pi/2")

    @property
    def phases(self) -> list[float]:
        return [m.phi for m in self.marginals]

    def shifted(self, offset: float) -> "HistogramSet":
        """Copy with ``offset`` added to every sample (signal and vacuum)."""
        def mv(ms):
            return [PhaseMarginal(m.phi, m.samples + offset) for m in ms]

        return HistogramSet(mv(self.marginals), mv(self.vacuum_reference), dict(self.metadata))

    @classmethod
    def from_manifest(cls, path) -> "HistogramSet":
        """Load a run manifest: {"marginals": [csv...], "vacuum_reference": [csv...], "metadata": {...}}.

        Relative file names resolve against the manifest's directory.
        """
        path = Path(path)
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}: line {exc.lineno}: {exc.msg}") from None
        base = path.parent
        for key in ("marginals", "vacuum_reference"):
            files = manifest.get(key)
            if not files:
                raise ManifestError(f"{path}: manifest field '{key}' is missing or empty")
        def load(files):
            out = []
            for f in files:
                out.extend(read_marginals_csv(base / f))
            return out

        return cls(load(manifest["marginals"]), load(manifest["vacuum_reference"]), manifest.get("metadata", {}))


@dataclass(frozen=True)
class FitResult:
    models: tuple[TwoModeModel, ...]
    phases: tuple[float, ...]
    g: float
    offset: float
    goodness: tuple[float, ...]
    vacuum_model: TwoModeModel | None = None

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError("offset must be >= 0")

    @property
    def mean1(self) -> np.ndarray:
        return np.array([m.mean1 for m in self.models])

    @property
    def fundamental_variances(self) -> np.ndarray:
        """Quadrature variance of the fundamental mode at each phase."""
        return self.mean1 / np.exp(2 * self.g)

    def squeezing_db(self) -> tuple[float, float]:
        """Principal (squeezed, anti-squeezed) dB from the fitted mean1(phi)."""
        lo, hi = principal_from_phase_variances(self.phases, self.fundamental_variances)
        return 10 * np.log10(lo / VACUUM_VARIANCE), 10 * np.log10(hi / VACUUM_VARIANCE)

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "offset": self.offset,
            "phases": list(self.phases),
            "mean1": [m.mean1 for m in self.models],
            "mean2": [m.mean2 for m in self.models],
            "ks_statistic": list(self.goodness),
        }


@dataclass(frozen=True)
class ReconstructionResult:
    rho: DensityMatrix
    wigner: WignerGrid
    squeezing_db: tuple[float, float]  # (value, bootstrap std)
    antisqueezing_db: tuple[float, float]
    fidelity_vs_expected: float | None
    iterations_used: int
    final_log_likelihood: float
    log_likelihood_history: np.ndarray = field(repr=False)
    complete: bool = True


# calibration and fitting --------------------------------------------------------


def calibrate_shot_noise(vacuum_marginals: Sequence[PhaseMarginal], offset: float = 0.0):
    """Gain g and mean vacuum photon number from shutter-closed runs.

    Uses <N_vac> = e^{2g} / 2, i.e. the vacuum quadrature variance of 1/2
    amplified by e^{2g}.
    """
    samples = np.concatenate([np.asarray(m.samples) for m in vacuum_marginals]) if vacuum_marginals else []
    if len(samples) == 0:
        raise CalibrationError("no vacuum samples")
    mean = float(np.mean(samples)) - offset
    if mean <= 0:
        raise CalibrationError(f"vacuum mean after offset subtraction is {mean:.3g} <= 0")
    return 0.5 * np.log(2 * mean), mean


def calibrate_shot_noise_by_phase(vacuum_marginals: Sequence[PhaseMarginal], offset: float = 0.0):
    """Per-phase (phi, g) pairs; useful when pump leakage modulates the shot noise."""
    phis = np.array([m.phi for m in vacuum_marginals])
    gs = np.array([calibrate_shot_noise([m], offset)[0] for m in vacuum_marginals])
    return phis, gs


def _bin_edges(samples: np.ndarray, bins: int) -> np.ndarray:
    q = np.concatenate([[1e-4, 1e-3, 4e-3], np.linspace(0, 1, bins + 1)[1:-1]])
    inner = np.unique(np.quantile(samples, np.sort(q)))
    return inner


def _binned_counts(samples, edges):
    idx = np.searchsorted(edges, samples, side="right")
    return np.bincount(idx, minlength=edges.size + 1).astype(float)


def _binned_nll(model: TwoModeModel, edges, counts) -> float:
    c = p2_cdf(edges, model)
    probs = np.diff(np.concatenate([[0.0], c, [1.0]]))
    probs = np.maximum(probs, 1e-300)
    return -float(np.dot(counts, np.log(probs)))


def _fit_fixed_offset(edges, counts, offset, start_means, maxiter=2000):
    def obj(u):
        m1, m2 = np.exp(np.maximum(u, max(u) - _LOG_RATIO_FLOOR))
        if not np.isfinite(m1 + m2) or m1 + m2 <= 0:
            return np.inf
        hi, lo = max(m1, m2), min(m1, m2)
        return _binned_nll(TwoModeModel(hi, lo, offset), edges, counts)

    best = None
    for m1, m2 in start_means:
        res = optimize.minimize(
            obj,
            np.log([m1, m2]),
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-5, "fatol": 1e-4},
        )
        if best is None or res.fun < best.fun:
            best = res
    u = best.x
    m1, m2 = np.exp(np.maximum(u, max(u) - _LOG_RATIO_FLOOR))
    return TwoModeModel(max(m1, m2), min(m1, m2), offset), best


def _starts(mean_excess: float):
    return [(0.8 * mean_excess, 0.2 * mean_excess), (0.95 * mean_excess, 0.05 * mean_excess), (0.55 * mean_excess, 0.45 * mean_excess)]


def fit_two_mode(
    marginal: PhaseMarginal,
    init: TwoModeModel | None = None,
    bins: int = 80,
    fixed_offset: float | None = None,
    maxiter: int = 4000,
) -> TwoModeModel:
    """Binned maximum-likelihood fit of (mean1, mean2, offset) under p2.

    Simplex over (log mean1, log mean2, offset) from three starts; the
    offset is kept non-negative by reflection.
    """
    x = np.asarray(marginal.samples, dtype=float)
    if x.size < MIN_FIT_SAMPLES:
        raise ValueError(f"need >= {MIN_FIT_SAMPLES} samples, got {x.size}")
    edges = _bin_edges(x, bins)
    counts = _binned_counts(x, edges)
    if fixed_offset is not None:
        excess = max(x.mean() - fixed_offset, 1e-12)
        starts = _starts(excess) if init is None else [(init.mean1, max(init.mean2, 1e-3 * init.mean1))] + _starts(excess)[:2]
        model, res = _fit_fixed_offset(edges, counts, fixed_offset, starts, maxiter)
        return model

    def obj(u):
        m1, m2 = np.exp(np.maximum(u[:2], max(u[:2]) - _LOG_RATIO_FLOOR))
        off = abs(u[2])
        if not np.isfinite(m1 + m2):
            return np.inf
        return _binned_nll(TwoModeModel(max(m1, m2), min(m1, m2), off), edges, counts)

    off0 = 0.5 * float(np.quantile(x, 1e-4))
    excess = max(x.mean() - off0, 1e-12)
    starts = [(m1, m2, off0) for m1, m2 in _starts(excess)]
    if init is not None:
        starts[0] = (init.mean1, max(init.mean2, 1e-3 * init.mean1), init.offset)
    best = None
    for m1, m2, off in starts:
        u0 = np.array([np.log(m1), np.log(m2), off])
        res = optimize.minimize(
            obj,
            u0,
            method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-5, "fatol": 1e-4},
        )
        if best is None or res.fun < best.fun:
            best = res
    if not best.success:
        m1, m2 = np.exp(best.x[:2])
        raise FitConvergenceError(
            f"two-mode fit did not converge after {best.nit} iterations: {best.message}",
            TwoModeModel(max(m1, m2), min(m1, m2), abs(best.x[2])),
        )
    m1, m2 = np.exp(np.maximum(best.x[:2], max(best.x[:2]) - _LOG_RATIO_FLOOR))
    return TwoModeModel(max(m1, m2), min(m1, m2), abs(float(best.x[2])))


def ks_statistic(marginal: PhaseMarginal, model: TwoModeModel) -> float:
    return float(stats.kstest(marginal.samples, lambda n: p2_cdf(n, model)).statistic)


def fit_joint(
    marginals: Sequence[PhaseMarginal],
    bins: int = 80,
    offset_bounds: tuple[float, float] | None = None,
) -> tuple[list[TwoModeModel], float]:
    """Fit every phase with a single shared offset.

    The offset is found by a bounded scalar search on the summed binned
    negative log-likelihood; each phase's means are refitted inside.
    """
    data = [np.asarray(m.samples, dtype=float) for m in marginals]
    for d in data:
        if d.size < MIN_FIT_SAMPLES:
            raise ValueError(f"need >= {MIN_FIT_SAMPLES} samples per phase, got {d.size}")
    binned = []
    for d in data:
        e = _bin_edges(d, bins)
        binned.append((e, _binned_counts(d, e)))
    floor = min(float(d.min()) for d in data)
    lo, hi = offset_bounds if offset_bounds is not None else (0.0, max(floor, 0.0))
    cache = {}
    warm: list = [None] * len(data)

    def total(off):
        fits = []
        nll = 0.0
        for k, ((e, c), d) in enumerate(zip(binned, data)):
            excess = max(d.mean() - off, 1e-12)
            starts = _starts(excess)[:2] if warm[k] is None else [warm[k]]
            m, res = _fit_fixed_offset(e, c, off, starts)
            warm[k] = (m.mean1, max(m.mean2, 1e-6 * m.mean1))
            fits.append(m)
            nll += res.fun
        cache[off] = fits
        return nll

    if hi <= lo:
        off = lo
        total(off)
    else:
        res = optimize.minimize_scalar(total, bounds=(lo, hi), method="bounded", options={"xatol": 1e-4 * max(hi, 1e-9)})
        # the bounded search never evaluates the endpoints; zero offset is a common truth
        off = float(res.x) if res.fun <= total(lo) else lo
        if off not in cache:
            total(off)
    return cache[off], off


def fit_histogram_set(hs: HistogramSet, bins: int = 80, joint: bool = True) -> FitResult:
    """Calibrate the gain on the vacuum reference and fit every signal phase.

    The vacuum reference is fitted with the same two-mode model, so the gain
    comes from the fundamental-mode vacuum mean (e^{2g} = 2 mean1_vac).
    """
    vac_samples = np.concatenate([m.samples for m in hs.vacuum_reference])
    vac = PhaseMarginal(0.0, vac_samples)
    if joint:
        models, offset = fit_joint(list(hs.marginals) + [vac], bins)
        vac_model = models[-1]
        models = models[:-1]
    else:
        vac_model = fit_two_mode(vac, bins=bins)
        offset = vac_model.offset
        models = [fit_two_mode(m, bins=bins, fixed_offset=offset) for m in hs.marginals]
    g = 0.5 * np.log(2 * vac_model.mean1)
    good = tuple(ks_statistic(m, mod) for m, mod in zip(hs.marginals, models))
    return FitResult(tuple(models), tuple(float(p) for p in hs.phases), float(g), float(offset), good, vac_model)


def principal_from_phase_variances(phases, variances) -> tuple[float, float]:
    """Least-squares V(phi) = a + b cos 2phi + c sin 2phi; return (min, max)."""
    phases = np.asarray(phases, dtype=float)
    a = np.vstack([np.ones_like(phases), np.cos(2 * phases), np.sin(2 * phases)]).T
    (c0, c1, c2), *_ = np.linalg.lstsq(a, np.asarray(variances, dtype=float), rcond=None)
    amp = np.hypot(c1, c2)
    return float(c0 - amp), float(c0 + amp)


# quadrature samples ----------------------------------------------------------------


def alternating_signs(n: int) -> np.ndarray:
    s = np.ones(n)
    s[1::2] = -1.0
    return s


def marginals_to_quadratures(
    marginal: PhaseMarginal,
    fit: FitResult,
    mode: str = "raw",
    seed: int = 0,
    index: int = 0,
    count: int | None = None,
) -> np.ndarray:
    """Signed quadrature samples at ``marginal.phi``.

    ``raw`` inverts N = e^{2g} x^2 + offset with alternating signs, so it is
    only valid for zero-mean states.  ``fundamental`` redraws from the fitted
    fundamental-mode model at this phase (matched by ``index``), which strips
    the secondary mode and the offset.
    """
    if fit is None or not np.isfinite(fit.g):
        raise CalibrationError("missing gain calibration")
    if mode == "raw":
        n = np.maximum(np.asarray(marginal.samples, dtype=float) - fit.offset, 0.0)
        return alternating_signs(n.size) * np.sqrt(n) / np.exp(fit.g)
    if mode == "fundamental":
        var = fit.models[index].mean1 / np.exp(2 * fit.g)
        rng = substream(seed, index)
        count = len(marginal) if count is None else count
        mag = np.sqrt(var) * np.abs(rng.standard_normal(count))
        return alternating_signs(count) * mag
    raise ValueError(f"unknown mode {mode!r}")


# maximum likelihood reconstruction ----------------------------------------------------


def hermite_functions(x, dim: int) -> np.ndarray:
    """psi_n(x) for n < dim, vacuum variance 1/2; shape (len(x), dim)."""
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, dim))
    out[:, 0] = np.pi**-0.25 * np.exp(-(x**2) / 2)
    if dim > 1:
        out[:, 1] = np.sqrt(2.0) * x * out[:, 0]
    for n in range(1, dim - 1):
        out[:, n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[:, n] - np.sqrt(n / (n + 1)) * out[:, n - 1]
    return out


@dataclass(frozen=True)
class BinnedQuadratures:
    """Counts per (phase, bin) plus quadrature rows for bin-integrated projectors."""

    phases: np.ndarray
    edges: np.ndarray
    counts: np.ndarray  # (phases, bins)

    @classmethod
    def from_samples(cls, data: Sequence[tuple[float, np.ndarray]], bin_width: float | None = None):
        width = 0.25 * np.sqrt(VACUUM_VARIANCE) if bin_width is None else bin_width
        xmax = max(float(np.max(np.abs(x))) for _, x in data) + width
        nb = int(np.ceil(xmax / width))
        edges = np.arange(-nb, nb + 1) * width
        counts = np.array([np.histogram(x, bins=edges)[0] for _, x in data], dtype=float)
        return cls(np.array([p for p, _ in data], dtype=float), edges, counts)

    def projector_rows(self, dim: int, order: int = 4):
        """Rows u (nodes x dim) and weights so that Pi_bin = sum_j w_j u_j^H u_j."""
        gx, gw = leggauss(order)
        lo, hi = self.edges[:-1], self.edges[1:]
        half = 0.5 * (hi - lo)
        nodes = (0.5 * (lo + hi))[:, None] + half[:, None] * gx[None, :]
        weights = half[:, None] * gw[None, :]
        psi = hermite_functions(nodes.ravel(), dim)  # (bins*order, dim)
        n = np.arange(dim)
        rows = [psi * np.exp(-1j * phi * n)[None, :] for phi in self.phases]
        return np.stack(rows), weights.ravel()


def _log_likelihood(probs, counts):
    mask = counts > 0
    return float(np.sum(counts[mask] * np.log(np.maximum(probs[mask], 1e-300))))


def mle_reconstruct(
    data: Sequence[tuple[float, np.ndarray]],
    dim: int = 20,
    max_iters: int = 5000,
    tol: float = 1e-10,
    expected: DensityMatrix | None = None,
    wigner_axis=None,
    bootstrap: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    initial: DensityMatrix | None = None,
    bootstrap_data=None,
) -> ReconstructionResult:
    """Iterative R rho R reconstruction from quadrature samples at several phases.

    ``data`` is a list of (phi, samples).  ``tol`` bounds the per-sample
    log-likelihood gain at which iteration stops.  A full RrhoR step that
    would lower the likelihood is replaced by a diluted step, halving the
    dilution until the likelihood does not drop; a drop that survives
    dilution raises :class:`LikelihoodDecreaseError` unless it is at
    rounding level (1e-12 relative), which ends the iteration instead.

    Squeezing uncertainties are bootstrapped over ``bootstrap_data``
    (defaults to ``data``).
    """
    if dim < 2:
        raise ValueError("dim must be >= 2")
    phases = [p for p, _ in data]
    complete = phase_span(phases) >= np.pi / 2 - 1e-9 and len(set(np.mod(phases, np.pi))) >= 3
    if not complete:
        warnings.warn("phases span less than pi/2; reconstruction is not tomographically complete", stacklevel=2)
    binned = BinnedQuadratures.from_samples(data)
    rows, w = binned.projector_rows(dim)
    order = w.size // binned.counts.shape[1]
    counts = binned.counts
    total = counts.sum()
    # expand per-bin frequencies onto nodes
    node_counts = np.repeat(counts, order, axis=1)  # (phases, nodes)
    flat_rows = rows.reshape(-1, dim)
    w_all = np.tile(w, len(phases))

    def probs_of(rho):
        # p_node = u rho u^H per node, then bin sums
        pn = np.einsum("ij,jk,ik->i", flat_rows, rho, flat_rows.conj()).real * w_all
        return pn.reshape(len(phases), -1, order).sum(axis=2)

    def r_operator(rho, p):
        ratio = np.where(counts > 0, counts / np.maximum(p, 1e-300), 0.0) / total
        c = np.repeat(ratio, order, axis=1).ravel() * w_all
        return (flat_rows.conj().T * c) @ flat_rows

    rho = np.eye(dim, dtype=complex) / dim if initial is None else initial.elements.copy()
    p = probs_of(rho)
    ll = _log_likelihood(p, counts)
    history = [ll]
    it = 0
    for it in range(1, max_iters + 1):
        r = r_operator(rho, p)
        cand = r @ rho @ r
        cand = 0.5 * (cand + cand.conj().T)
        cand /= np.trace(cand).real
        p_new = probs_of(cand)
        ll_new = _log_likelihood(p_new, counts)
        eps = 1.0
        slack = 1e-12 * abs(ll)
        while ll_new < ll - slack and eps > 1e-8:
            eps *= 0.5
            op = (np.eye(dim) + eps * r) / (1 + eps)
            cand = op @ rho @ op.conj().T
            cand = 0.5 * (cand + cand.conj().T)
            cand /= np.trace(cand).real
            p_new = probs_of(cand)
            ll_new = _log_likelihood(p_new, counts)
        if ll_new < ll - slack:
            raise LikelihoodDecreaseError(f"log-likelihood fell from {ll:.12g} to {ll_new:.12g} at iteration {it}")
        if ll_new < ll:
            # rounding-level stationary point: keep the previous iterate so the record never decreases
            it -= 1
            break
        gain = (ll_new - ll) / total
        rho, p, ll = cand, p_new, ll_new
        history.append(ll)
        if gain < tol:
            break
    dm = DensityMatrix.from_unnormalized(rho)
    axis = np.linspace(-4, 4, 81) if wigner_axis is None else np.asarray(wigner_axis)
    wg = wigner(dm, axis, axis)
    vmin, vmax = principal_variances(dm)
    sq_std, asq_std = bootstrap_squeezing_std(data if bootstrap_data is None else bootstrap_data, bootstrap, seed)
    return ReconstructionResult(
        rho=dm,
        wigner=wg,
        squeezing_db=(10 * np.log10(vmin / VACUUM_VARIANCE), sq_std),
        antisqueezing_db=(10 * np.log10(vmax / VACUUM_VARIANCE), asq_std),
        fidelity_vs_expected=None if expected is None else fidelity(dm, expected),
        iterations_used=it,
        final_log_likelihood=ll,
        log_likelihood_history=np.array(history),
        complete=complete,
    )


def bootstrap_squeezing_std(data, resamples: int = BOOTSTRAP_RESAMPLES, seed: int = 0):
    """Bootstrap std of the principal squeezing / anti-squeezing (dB) over pulses.

    Each resample redraws pulses per phase and refits the second-moment
    fringe; this tracks the sampling error of the reconstruction cheaply.
    """
    if resamples < 2:
        return float("nan"), float("nan")
    rng = np.random.Generator(np.random.Philox(key=seed ^ 0xB00757))
    phases = [p for p, _ in data]
    out = np.empty((resamples, 2))
    for b in range(resamples):
        v = []
        for _, x in data:
            xs = np.asarray(x)[rng.integers(0, len(x), len(x))]
            v.append(np.mean(xs**2))
        lo, hi = principal_from_phase_variances(phases, v)
        out[b] = 10 * np.log10(np.array([lo, hi]) / VACUUM_VARIANCE)
    sd = out.std(axis=0, ddof=1)
    return float(sd[0]), float(sd[1])


# scoring and pipeline -----------------------------------------------------------


def score(result: ReconstructionResult, expected: DensityMatrix) -> dict:
    if result.rho.dim != expected.dim:
        raise ValueError(f"dimension mismatch: {result.rho.dim} vs {expected.dim}")
    diff = np.abs(result.rho.elements - expected.elements)
    vmin, vmax = principal_variances(result.rho)
    return {
        "fidelity": fidelity(result.rho, expected),
        "abs_diff": diff,
        "max_abs_diff": float(diff.max()),
        "squeezing_db": 10 * np.log10(vmin / VACUUM_VARIANCE),
        "antisqueezing_db": 10 * np.log10(vmax / VACUUM_VARIANCE),
    }


@dataclass(frozen=True)
class PipelineOutput:
    fit: FitResult
    quadratures: list
    reconstruction: ReconstructionResult


def reconstruct_from_histograms(
    hs: HistogramSet,
    dim: int = 20,
    mode: str = "fundamental",
    seed: int = 0,
    expected: DensityMatrix | None = None,
    max_iters: int = 5000,
    tol: float = 1e-10,
    bootstrap: int = BOOTSTRAP_RESAMPLES,
    bins: int = 80,
    resample_count: int = RESAMPLE_COUNT,
) -> PipelineOutput:
    """Calibrate, fit, convert to quadratures and reconstruct.

    In ``fundamental`` mode each phase is redrawn ``resample_count`` times
    from its fitted model; the bootstrap always runs over the measured pulses.
    """
    fit = fit_histogram_set(hs, bins=bins)
    raw = [(m.phi, marginals_to_quadratures(m, fit, mode="raw")) for m in hs.marginals]
    if mode == "raw":
        quads = raw
    else:
        quads = [
            (m.phi, marginals_to_quadratures(m, fit, mode=mode, seed=seed, index=k, count=resample_count))
            for k, m in enumerate(hs.marginals)
        ]
    rec = mle_reconstruct(
        quads, dim=dim, max_iters=max_iters, tol=tol, expected=expected,
        bootstrap=bootstrap, seed=seed, bootstrap_data=raw,
    )
    return PipelineOutput(fit, quads, rec)


def expected_state(spec: GaussianStateSpec, dim: int) -> DensityMatrix:
    return gaussian_dm_from_variances(spec, dim)
