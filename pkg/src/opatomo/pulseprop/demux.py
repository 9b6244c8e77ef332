"""Gated OPA demultiplexing of a pulse train and the SV duration estimate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from ..modes import SchmidtDecomposition

DETECTION_THRESHOLD_DB = 20.0


@dataclass(frozen=True)
class DemuxReport:
    stream_rate_thz: float
    channels: int
    gate_gain_db: float
    threshold_db: float
    detected: tuple[tuple[int, ...], ...]

    @property
    def channel_rate_thz(self) -> float:
        return self.stream_rate_thz / self.channels

    @property
    def total_detections(self) -> int:
        return sum(len(d) for d in self.detected)

    def is_correct(self, pulse_count: int) -> bool:
        """Channel c saw exactly the pulses i with i mod channels == c."""
        return all(
            tuple(range(c, pulse_count, self.channels)) == det for c, det in enumerate(self.detected)
        )

    def to_dict(self) -> dict:
        return {
            "stream_rate_THz": self.stream_rate_thz,
            "channel_rate_THz": self.channel_rate_thz,
            "channels": self.channels,
            "gate_gain_db": self.gate_gain_db,
            "threshold_db": self.threshold_db,
            "detected": [list(d) for d in self.detected],
        }


def demux_simulate(
    stream_rate_thz: float,
    channels: int,
    gate_gain_db: float,
    pulse_count: int,
    threshold_db: float = DETECTION_THRESHOLD_DB,
) -> DemuxReport:
    """Route every pulse to every channel; channel c amplifies only slots i = c (mod channels).

    A pulse is detected when its level exceeds the ungated level by
    ``threshold_db``.  A gate gain below threshold simply yields no detections.
    """
    if stream_rate_thz <= 0:
        raise ValueError("stream rate must be positive")
    if channels < 1 or pulse_count < 0:
        raise ValueError("channels must be >= 1 and pulse_count >= 0")
    idx = np.arange(pulse_count)
    detected = []
    for c in range(channels):
        # levels relative to an ungated pulse (0 dB)
        level_db = np.where(idx % channels == c, gate_gain_db, 0.0)
        detected.append(tuple(int(i) for i in idx[level_db >= threshold_db]))
    return DemuxReport(float(stream_rate_thz), int(channels), float(gate_gain_db), float(threshold_db), tuple(detected))


def sv_duration_estimate(
    modes: "SchmidtDecomposition",
    pump_duration_fs: float | None = None,
    gvm_fs_per_mm: float | None = None,
    length_mm: float | None = None,
    oversample: int = 8,
) -> float:
    """Intensity FWHM (fs) of the leading Schmidt mode in the time domain.

    When the pump duration and walk-off are given, the spectral grid is
    checked to span a time window long enough to hold a pulse of that size.
    """
    from ..modes import fwhm, temporal_mode  # modes imports this package

    spec = modes.signal_modes[0]
    if spec.size < 2:
        raise ValueError("leading mode has a single sample")
    if pump_duration_fs is not None and gvm_fs_per_mm is not None and length_mm is not None:
        window = 2 * np.pi / modes.d_signal
        needed = 2 * (pump_duration_fs + abs(gvm_fs_per_mm) * length_mm)
        if window < needed:
            raise ValueError(f"spectral grid spans only {window:.0f} fs in time; need >= {needed:.0f} fs")
    t, psi = temporal_mode(modes, 0, oversample)
    return fwhm(t, np.abs(psi) ** 2)
