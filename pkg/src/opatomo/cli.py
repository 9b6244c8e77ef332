"""Command-line front end: ``opatomo {simulate,modes,prop,fit,reconstruct,demux}``.

Every run is driven by a flat JSON config (or a bundled preset name) plus a
seed, writes into ``--out``, and leaves a provenance sidecar next to every
output file.  Exit codes: 0 ok, 2 config error, 3 numerical contract
failure, 4 I/O or input-data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .fockspace import (
    GaussianStateSpec,
    InvalidStateError,
    TruncationError,
    fidelity,
    gaussian_dm_from_variances,
    wigner,
)
from .modes import (
    JointSpectralAmplitude,
    apply_filter,
    compute_jsa,
    frequency_grid,
    schmidt_decompose,
)
from .opa import (
    MarginalFormatError,
    OpaGain,
    sample_pulse_train,
    write_marginals_csv,
)
from .pulseprop import (
    PropagationConfig,
    ResolutionError,
    WaveguideDispersion,
    clock_rate_estimate,
    demux_simulate,
    detect,
    gvm,
    gain_curve,
    histogram_peak,
    simulate_vacuum_outputs,
    sv_duration_estimate,
    time_grid,
)
from .tomography import (
    FitConvergenceError,
    HistogramSet,
    LikelihoodDecreaseError,
    ManifestError,
    fit_histogram_set,
    reconstruct_from_histograms,
)

log = logging.getLogger("opatomo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


# config handling ---------------------------------------------------------------

_NUM = (int, float)

# key -> (accepted types, default)
SCHEMAS: dict[str, dict[str, tuple]] = {
    "simulate": {
        "squeezing_db": (_NUM, -2.41),
        "antisqueezing_db": (_NUM, 3.87),
        "gain_g": (_NUM, 3.0),
        "secondary_mean_ratio": (_NUM, 0.2),
        "secondary_squeeze_ratio": (_NUM, 0.6),
        "offset": (_NUM, 0.0),
        "phase_count": (int, 12),
        "pulses_per_phase": (int, 20000),
        "vacuum_pulses": (int, 20000),
        "dim": (int, 20),
        "mode": (str, "fundamental"),
        "resample_count": (int, 200000),
        "bootstrap": (int, 100),
        "max_iters": (int, 5000),
        "tol": (_NUM, 1e-10),
        "bins": (int, 80),
        "wigner_extent": (_NUM, 4.0),
        "wigner_points": (int, 81),
    },
    "modes": {
        "jsa": (str, "dispersion"),
        "length_mm": (_NUM, 5.0),
        "pump_duration_fs": (_NUM, 70.0),
        "pump_nm": (_NUM, 930.0),
        "grid_points": (int, 512),
        "span_thz": (_NUM, 60.0),
        "filter_nm": ((list, type(None)), None),
        "dispersion_csv": ((str, type(None)), None),
        "separable_width_thz": (_NUM, 5.0),
        "mode_count": (int, 4),
        "write_jsa": (bool, False),
        "expected_schmidt_number": ((int, float, type(None)), None),
        "expected_filtered_schmidt_number": ((int, float, type(None)), None),
    },
    "prop": {
        "length_mm": (_NUM, 5.0),
        "kappa": (_NUM, 0.3),
        "step_count": (int, 500),
        "time_points": (int, 4096),
        "window_fs": (_NUM, 4000.0),
        "pump_fwhm_fs": (_NUM, 70.0),
        "seed_energy_fj": (_NUM, 1.0),
        "energies_pj": (list, [0.1, 0.2, 0.3, 0.5, 0.7, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0]),
        "fit_range_pj": ((list, type(None)), None),
        "knee_threshold_db": (_NUM, 1.0),
        "histogram_energies_pj": (list, []),
        "trials": (int, 1000),
        "filter_nm": ((list, type(None)), [1850.0, 1870.0]),
        "vacuum_step_count": (int, 200),
        "vacuum_time_points": (int, 1024),
        "vacuum_window_fs": (_NUM, 1500.0),
        "histogram_bins": (int, 40),
        "dispersion_csv": ((str, type(None)), None),
    },
    "fit": {"manifest": (str, None), "bins": (int, 80)},
    "reconstruct": {
        "manifest": (str, None),
        "dim": (int, 20),
        "mode": (str, "fundamental"),
        "resample_count": (int, 200000),
        "bootstrap": (int, 100),
        "max_iters": (int, 5000),
        "tol": (_NUM, 1e-10),
        "bins": (int, 80),
        "wigner_extent": (_NUM, 4.0),
        "wigner_points": (int, 81),
    },
    "demux": {
        "stream_rate_thz": (_NUM, 6.48),
        "channels": (int, 4),
        "gate_gain_db": (_NUM, 40.0),
        "pulse_count": (int, 16),
        "threshold_db": (_NUM, 20.0),
    },
}


@dataclass(frozen=True)
class RunConfig:
    pipeline: str
    params: dict
    source: str
    base_dir: Path

    def digest(self, seed: int) -> str:
        blob = json.dumps({"pipeline": self.pipeline, "params": self.params, "seed": seed}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def preset_names() -> list[str]:
    root = resources.files("opatomo") / "data" / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _read_config_text(ref: str) -> tuple[str, str, Path]:
    path = Path(ref)
    if path.exists():
        try:
            return path.read_text(), str(path), path.resolve().parent
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    name = ref[:-5] if ref.endswith(".json") else ref
    if name in preset_names():
        res = resources.files("opatomo") / "data" / "presets" / f"{name}.json"
        return res.read_text(), f"preset:{name}", Path.cwd()
    raise ConfigError(f"{ref}: no such file or bundled preset (presets: {', '.join(preset_names())})")


def _line_of(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return 1


def load_config(ref: str | None, pipeline: str, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config for ``pipeline``; errors carry file:line.

    ``overrides`` (e.g. a manifest given on the command line) replace config
    values before validation.
    """
    if ref is None:
        text, source, base = "{}", "<defaults>", Path.cwd()
    else:
        text, source, base = _read_config_text(ref)
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}:1: config must be a JSON object")
    declared = raw.pop("pipeline", pipeline)
    if declared != pipeline:
        raise ConfigError(
            f"{source}:{_line_of(text, 'pipeline')}: config is for pipeline '{declared}', not '{pipeline}'"
        )
    schema = SCHEMAS[pipeline]
    params = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"{source}:{_line_of(text, key)}: unknown key '{key}' for pipeline '{pipeline}'")
        types, _ = schema[key]
        ok = isinstance(value, types) and not (isinstance(value, bool) and types in (_NUM, int))
        if not ok:
            raise ConfigError(f"{source}:{_line_of(text, key)}: '{key}' has the wrong type ({type(value).__name__})")
        params[key] = value
    params.update(overrides or {})
    for key, (_, default) in schema.items():
        params.setdefault(key, default)
    _validate_values(params, pipeline, source, text)
    return RunConfig(pipeline, params, source, base)


def _validate_values(p: dict, pipeline: str, source: str, text: str) -> None:
    def fail(key, msg):
        raise ConfigError(f"{source}:{_line_of(text, key)}: '{key}' {msg}")

    positive = {
        "simulate": ["pulses_per_phase", "vacuum_pulses", "phase_count", "dim", "resample_count", "wigner_points"],
        "modes": ["length_mm", "pump_duration_fs", "grid_points", "span_thz", "separable_width_thz", "mode_count"],
        "prop": ["length_mm", "step_count", "time_points", "window_fs", "trials", "pump_fwhm_fs"],
        "reconstruct": ["dim", "resample_count", "wigner_points"],
        "demux": ["stream_rate_thz", "channels"],
        "fit": ["bins"],
    }[pipeline]
    for key in positive:
        if p[key] <= 0:
            fail(key, "must be > 0")
    if pipeline in ("simulate", "reconstruct") and p["mode"] not in ("raw", "fundamental"):
        fail("mode", "must be 'raw' or 'fundamental'")
    if pipeline == "simulate" and p["phase_count"] < 3:
        fail("phase_count", "must be >= 3")
    if pipeline == "modes" and p["jsa"] not in ("dispersion", "separable"):
        fail("jsa", "must be 'dispersion' or 'separable'")
    for key in ("filter_nm", "fit_range_pj"):
        if key in p and p[key] is not None and (len(p[key]) != 2 or not all(isinstance(v, _NUM) for v in p[key])):
            fail(key, "must be a two-element numeric list")
    if pipeline in ("fit", "reconstruct") and not p["manifest"]:
        fail("manifest", "is required (a run manifest JSON path)")
    if pipeline == "prop" and p["step_count"] < 100:
        fail("step_count", "must be >= 100")


# output helpers ------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


class Outputs:
    """Writes files into the run directory and a provenance sidecar for each."""

    def __init__(self, out_dir: Path, cfg: RunConfig, seed: int):
        self.dir = Path(out_dir)
        self.cfg = cfg
        self.seed = seed
        self.written: list[str] = []
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {self.dir}: {exc}") from None

    def path(self, name: str) -> Path:
        return self.dir / name

    def _provenance(self, name: str):
        prov = {
            "file": name,
            "tool": "opatomo",
            "version": __version__,
            "pipeline": self.cfg.pipeline,
            "config_sha256": self.cfg.digest(self.seed),
            "seed": self.seed,
        }
        self.path(name + ".prov.json").write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")
        self.written.append(name)

    def json(self, name: str, payload) -> None:
        self.path(name).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
        self._provenance(name)

    def done(self, name: str) -> None:
        """Register a file written by a module-level writer."""
        self._provenance(name)


def _svg(out: Outputs, name: str, draw) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "opatomo", "svg.fonttype": "none", "path.simplify": False}):
        fig, ax = plt.subplots(figsize=(5, 3.6))
        draw(fig, ax)
        fig.tight_layout()
        fig.savefig(out.path(name), format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    out.done(name)


def _pool_map(threads: int):
    if threads <= 1:
        return map, None
    pool = ThreadPoolExecutor(max_workers=threads)
    return pool.map, pool  # ordered by input index


# pipelines ---------------------------------------------------------------------


def _phases(count: int) -> np.ndarray:
    return np.arange(count) * np.pi / count


def _tomography_outputs(out: Outputs, hs: HistogramSet, p: dict, seed: int, expected_spec, report_extra: dict):
    dim = p["dim"]
    expected = gaussian_dm_from_variances(expected_spec, dim) if expected_spec is not None else None
    res = reconstruct_from_histograms(
        hs,
        dim=dim,
        mode=p["mode"],
        seed=seed + 2,
        expected=expected,
        max_iters=p["max_iters"],
        tol=p["tol"],
        bootstrap=p["bootstrap"],
        bins=p["bins"],
        resample_count=p["resample_count"],
    )
    fit, rec = res.fit, res.reconstruction
    fit_sq, fit_asq = fit.squeezing_db()
    if expected is None:
        # the expected state implied by the fitted fundamental-mode squeezing
        expected_spec = GaussianStateSpec.from_db(min(fit_sq, 0.0), max(fit_asq, 0.0))
        expected = gaussian_dm_from_variances(expected_spec, dim)
    out.json("fit.json", fit.to_dict() | {"squeezing_db": fit_sq, "antisqueezing_db": fit_asq})
    rec.rho.to_json(out.path("rho.json"))
    out.done("rho.json")
    ext, npts = p["wigner_extent"], p["wigner_points"]
    axis = np.linspace(-ext, ext, npts)
    wg = wigner(rec.rho, axis, axis)
    wg.to_csv(out.path("wigner.csv"))
    out.done("wigner.csv")
    diff = np.abs(rec.rho.elements - expected.elements)
    report = {
        "fidelity": fidelity(rec.rho, expected),
        "squeezing_db": rec.squeezing_db[0],
        "squeezing_db_std": rec.squeezing_db[1],
        "antisqueezing_db": rec.antisqueezing_db[0],
        "antisqueezing_db_std": rec.antisqueezing_db[1],
        "fit_squeezing_db": fit_sq,
        "fit_antisqueezing_db": fit_asq,
        "gain_g": fit.g,
        "offset": fit.offset,
        "iterations": rec.iterations_used,
        "final_log_likelihood": rec.final_log_likelihood,
        "log_likelihood_nondecreasing": bool(np.all(np.diff(rec.log_likelihood_history) >= 0)),
        "max_abs_diff": float(diff.max()),
        "wigner_peak": float(wg.values.max()),
        "tomographically_complete": rec.complete,
        "expected": {"squeezing_db": 10 * np.log10(expected_spec.squeezed_variance / 0.5),
                     "antisqueezing_db": 10 * np.log10(expected_spec.antisqueezed_variance / 0.5)},
    } | report_extra
    out.json("report.json", report)

    def draw_w(fig, ax):
        im = ax.imshow(wg.values.T, origin="lower", extent=(axis[0], axis[-1], axis[0], axis[-1]), cmap="RdBu_r")
        ax.set_xlabel("x")
        ax.set_ylabel("p")
        ax.set_aspect("equal")
        fig.colorbar(im, ax=ax, label="W(x, p)")

    _svg(out, "wigner.svg", draw_w)

    def draw_v(fig, ax):
        ph = np.asarray(fit.phases)
        ax.plot(ph, 10 * np.log10(fit.fundamental_variances / 0.5), "o-")
        ax.axhline(0.0, color="0.5", lw=0.8)
        ax.set_xlabel("phase (rad)")
        ax.set_ylabel("fundamental-mode variance (dB vs vacuum)")

    _svg(out, "phase_variance.svg", draw_v)
    return report


def run_simulate(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    p = cfg.params
    spec = GaussianStateSpec.from_db(p["squeezing_db"], p["antisqueezing_db"])
    gain = OpaGain(p["gain_g"])
    phases = _phases(p["phase_count"])
    sig = sample_pulse_train(
        spec, gain, p["secondary_mean_ratio"], p["offset"], phases, p["pulses_per_phase"], seed,
        p["secondary_squeeze_ratio"],
    )
    vac = sample_pulse_train(
        GaussianStateSpec.vacuum(), gain, p["secondary_mean_ratio"], p["offset"], [0.0], p["vacuum_pulses"], seed + 1,
        p["secondary_squeeze_ratio"],
    )
    write_marginals_csv(out.path("marginals.csv"), sig)
    out.done("marginals.csv")
    write_marginals_csv(out.path("vacuum.csv"), vac)
    out.done("vacuum.csv")
    manifest = {
        "marginals": ["marginals.csv"],
        "vacuum_reference": ["vacuum.csv"],
        "metadata": {
            "source": "simulate",
            "seed": seed,
            "expected": {"squeezing_db": p["squeezing_db"], "antisqueezing_db": p["antisqueezing_db"]},
        },
    }
    out.json("manifest.json", manifest)
    hs = HistogramSet(sig, vac, manifest["metadata"])
    return _tomography_outputs(out, hs, p, seed, spec, {})


def _load_manifest(cfg: RunConfig) -> tuple[HistogramSet, Path]:
    path = Path(cfg.params["manifest"])
    if not path.is_absolute():
        path = cfg.base_dir / path if not path.exists() else path
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return HistogramSet.from_manifest(path), path


def _expected_from_metadata(meta: dict):
    exp = meta.get("expected") if isinstance(meta, dict) else None
    if not exp:
        return None
    return GaussianStateSpec.from_db(float(exp["squeezing_db"]), float(exp["antisqueezing_db"]))


def run_fit(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    hs, _ = _load_manifest(cfg)
    fit = fit_histogram_set(hs, bins=cfg.params["bins"])
    sq, asq = fit.squeezing_db()
    payload = fit.to_dict() | {"squeezing_db": sq, "antisqueezing_db": asq}
    out.json("fit.json", payload)
    return payload


def run_reconstruct(cfg: RunConfig, out: Outputs, seed: int | None, threads: int) -> dict:
    hs, _ = _load_manifest(cfg)
    if seed is None:
        seed = int(hs.metadata.get("seed", 0))
    out.seed = seed
    return _tomography_outputs(out, hs, cfg.params, seed, _expected_from_metadata(hs.metadata), {})


def _dispersion(p: dict, base: Path) -> WaveguideDispersion:
    if p.get("dispersion_csv"):
        path = Path(p["dispersion_csv"])
        return WaveguideDispersion.from_csv(path if path.is_absolute() else base / path)
    return WaveguideDispersion.reference_geometry()


def run_modes(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    p = cfg.params
    grid = frequency_grid(p["grid_points"], p["span_thz"])
    center = 2 * p["pump_nm"]
    if p["jsa"] == "separable":
        sigma = 2 * np.pi * p["separable_width_thz"] * 1e-3
        f = np.exp(-(grid**2) / (2 * sigma**2))
        jsa = JointSpectralAmplitude.from_product(grid, grid, f, f, center)
    else:
        jsa = compute_jsa(_dispersion(p, cfg.base_dir), p["pump_nm"], p["pump_duration_fs"], p["length_mm"], grid)
    dec = schmidt_decompose(jsa)
    report = {"schmidt_number": dec.schmidt_number, "leading_weights": dec.weights[:8]}
    if p["jsa"] == "dispersion":
        disp = _dispersion(p, cfg.base_dir)
        g = gvm(disp, p["pump_nm"], center)
        dur = sv_duration_estimate(dec, p["pump_duration_fs"], g, p["length_mm"])
        report |= {"sv_duration_fs": dur, "clock_rate_thz": clock_rate_estimate(dur), "gvm_fs_per_mm": g}
    if p["expected_schmidt_number"] is not None:
        k0 = p["expected_schmidt_number"]
        report["expected_schmidt_number"] = k0
        report["schmidt_within_15pct"] = bool(abs(dec.schmidt_number - k0) <= 0.15 * k0)
    dec.weights_to_csv(out.path("weights.csv"))
    out.done("weights.csv")
    _write_mode_profiles(out, "modes.csv", dec, p["mode_count"])
    if p["filter_nm"] is not None:
        fdec = schmidt_decompose(apply_filter(jsa, p["filter_nm"]))
        report |= {"filter_nm": p["filter_nm"], "filtered_schmidt_number": fdec.schmidt_number}
        fdec.weights_to_csv(out.path("weights_filtered.csv"))
        out.done("weights_filtered.csv")
        _write_mode_profiles(out, "modes_filtered.csv", fdec, p["mode_count"])
        if p["expected_filtered_schmidt_number"] is not None:
            report["expected_filtered_schmidt_number"] = p["expected_filtered_schmidt_number"]
    if p["write_jsa"]:
        jsa.to_csv(out.path("jsa.csv"))
        out.done("jsa.csv")
    out.json("modes_report.json", report)
    thz = grid / (2 * np.pi) * 1e3

    def draw_jsi(fig, ax):
        im = ax.imshow(jsa.intensity().T, origin="lower", extent=(thz[0], thz[-1], thz[0], thz[-1]), cmap="viridis")
        ax.set_xlabel("signal detuning (THz)")
        ax.set_ylabel("idler detuning (THz)")
        fig.colorbar(im, ax=ax, label="|J|^2")

    _svg(out, "jsi.svg", draw_jsi)

    def draw_modes(fig, ax):
        for k in range(min(p["mode_count"], dec.weights.size)):
            ax.plot(thz, np.abs(dec.signal_modes[k]) ** 2, label=f"mode {k} ({dec.weights[k]:.3f})")
        ax.set_xlabel("signal detuning (THz)")
        ax.set_ylabel("|f_k|^2")
        ax.legend(fontsize=7)

    _svg(out, "modes.svg", draw_modes)
    return report


def _write_mode_profiles(out: Outputs, name: str, dec, count: int) -> None:
    count = min(count, dec.weights.size)
    cols = ["omega_rad_per_fs"] + [f"{part}{k}" for k in range(count) for part in ("re", "im")]
    with open(out.path(name), "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i, w in enumerate(dec.signal_freqs):
            vals = [repr(float(w))]
            for k in range(count):
                vals += [repr(float(dec.signal_modes[k, i].real)), repr(float(dec.signal_modes[k, i].imag))]
            fh.write(",".join(vals) + "\n")
    out.done(name)


def run_prop(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    p = cfg.params
    disp = _dispersion(p, cfg.base_dir)
    pcfg = PropagationConfig(p["length_mm"], p["step_count"], p["kappa"], disp, noise_seed=seed)
    mapper, pool = _pool_map(threads)
    try:
        grid = time_grid(p["time_points"], p["window_fs"])
        fit_range = tuple(p["fit_range_pj"]) if p["fit_range_pj"] else None
        curve = gain_curve(pcfg, p["energies_pj"], grid, fit_range, p["pump_fwhm_fs"], p["seed_energy_fj"], mapper)
        knee = curve.knee_energy(p["knee_threshold_db"])
        with open(out.path("gain.csv"), "w") as fh:
            fh.write("energy_pJ,gain_db,model_gain_db\n")
            for e, g, m in curve.rows():
                fh.write(f"{e!r},{g!r},{m!r}\n")
        out.done("gain.csv")
        report = {
            "kappa": p["kappa"],
            "fit_range_pj": list(curve.fit_range_pj),
            "fit_r2": curve.fit_r2,
            "slope_db_per_sqrt_pj": curve.slope_db_per_sqrt_pj,
            "intercept_db": curve.intercept_db,
            "b_per_sqrt_joule": curve.b_coefficient,
            "knee_energy_pj": knee,
            "knee_threshold_db": p["knee_threshold_db"],
            "remaining_pump_fraction": curve.remaining_pump_fraction,
            "histograms": [],
        }
        if p["histogram_energies_pj"]:
            vcfg = PropagationConfig(p["length_mm"], p["vacuum_step_count"], p["kappa"], disp, noise_seed=seed)
            vgrid = time_grid(p["vacuum_time_points"], p["vacuum_window_fs"])
            energies = sorted(float(e) for e in p["histogram_energies_pj"])

            def one(e):
                return simulate_vacuum_outputs(vcfg, e, p["trials"], grid=vgrid, seed=seed, pump_fwhm_fs=p["pump_fwhm_fs"])

            for e, vo in zip(energies, mapper(one, energies)):
                entry = {"energy_pj": e, "remaining_pump_fraction": vo.remaining_pump_fraction}
                bands = {"unfiltered": None}
                if p["filter_nm"] is not None:
                    bands["filtered"] = p["filter_nm"]
                for label, band in bands.items():
                    marg = detect(vo, band)
                    name = f"hist_{e:g}pJ_{label}.csv"
                    write_marginals_csv(out.path(name), [marg])
                    out.done(name)
                    entry[label] = {
                        "mean": marg.mean(),
                        "peak_over_mean": histogram_peak(marg.samples, p["histogram_bins"]),
                        "file": name,
                    }
                report["histograms"].append(entry)
    finally:
        if pool is not None:
            pool.shutdown()
    out.json("prop_report.json", report)

    def draw_gain(fig, ax):
        x = np.sqrt(curve.energy_pj)
        ax.plot(x, curve.gain_db, "o", label="split-step")
        ax.plot(x, curve.model_gain_db, "-", label="sqrt(E) fit")
        if knee is not None:
            ax.axvline(np.sqrt(knee), color="0.5", ls="--", lw=0.8)
        ax.set_xlabel("sqrt(pump energy / pJ)")
        ax.set_ylabel("gain (dB)")
        ax.legend(fontsize=8)

    _svg(out, "gain.svg", draw_gain)
    return report


def run_demux(cfg: RunConfig, out: Outputs, seed: int, threads: int) -> dict:
    p = cfg.params
    rep = demux_simulate(p["stream_rate_thz"], p["channels"], p["gate_gain_db"], p["pulse_count"], p["threshold_db"])
    payload = rep.to_dict() | {"correct": rep.is_correct(p["pulse_count"]), "pulse_count": p["pulse_count"]}
    out.json("demux.json", payload)
    return payload


RUNNERS = {
    "simulate": run_simulate,
    "modes": run_modes,
    "prop": run_prop,
    "fit": run_fit,
    "reconstruct": run_reconstruct,
    "demux": run_demux,
}


# entry point ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="config JSON path or preset name")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="opatomo", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate pulse statistics, fit and reconstruct",
        "modes": "joint spectral amplitude and Schmidt modes",
        "prop": "split-step gain curve and vacuum histograms",
        "fit": "calibrate and fit histograms listed in a manifest",
        "reconstruct": "fit and reconstruct from a manifest",
        "demux": "gated demultiplexer routing check",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, help=text, parents=[common])
        if name in ("fit", "reconstruct"):
            sp.add_argument("manifest", nargs="?", help="run manifest JSON (overrides the config key)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    opts = vars(args)
    logging.basicConfig(level=logging.INFO if opts.get("verbose") else logging.WARNING, format="%(message)s")
    command = args.command
    seed = opts.get("seed")
    out_dir = Path(opts.get("out", f"opatomo-{command}"))
    threads = max(1, int(opts.get("threads", 1)))
    try:
        overrides = {}
        if command in ("fit", "reconstruct") and opts.get("manifest"):
            overrides["manifest"] = str(Path(opts["manifest"]).resolve())
        cfg = load_config(opts.get("config"), command, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        run_seed = seed if (seed is not None or command == "reconstruct") else 0
        out = Outputs(out_dir, cfg, run_seed if run_seed is not None else 0)
        result = RUNNERS[command](cfg, out, run_seed, threads)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResolutionError, LikelihoodDecreaseError, FitConvergenceError, TruncationError, InvalidStateError) as exc:
        print(f"numerical contract failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, MarginalFormatError, ManifestError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = {k: v for k, v in _jsonable(result).items() if not isinstance(v, (list, dict))}
    print(json.dumps({"command": command, "out": str(out_dir), **summary}, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
