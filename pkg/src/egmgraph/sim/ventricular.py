"""Synthetic ventricular activity and mixing with atrial activity."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatchError, InvalidParameterError
from ..transforms import SignalPanel

# (centre ms, spread ms, weight) of the Q, R and S deflections
QRS_COMPONENTS = ((-25.0, 8.0, -0.15), (0.0, 10.0, 1.0), (28.0, 9.0, -0.30))


def qrs_waveform(t_ms: np.ndarray, width: float = 1.0) -> np.ndarray:
    """Sum of three Gaussians; ``width`` stretches the time axis."""
    t = np.asarray(t_ms, dtype=float) / width
    return sum(w * np.exp(-0.5 * ((t - c) / s) ** 2) for c, s, w in QRS_COMPONENTS)


def nominal_peak() -> float:
    """Waveform value at the R-peak, independent of the width factor."""
    return float(qrs_waveform(np.array([0.0]))[0])


def grid_positions_mm(rows: int = 8, cols: int = 8, pitch_mm: float = 2.0) -> np.ndarray:
    r, c = np.divmod(np.arange(rows * cols), cols)
    return np.column_stack([c * pitch_mm, r * pitch_mm]).astype(float)


def attenuation_map(positions_mm: np.ndarray, source_offset_mm: tuple[float, float, float] = (-15.0, -25.0, 30.0)) -> np.ndarray:
    """Inverse-distance gain from a distant source, normalised to mean one.

    The source sits at ``source_offset_mm`` from the array centroid, so the
    map varies smoothly across the electrodes.
    """
    p = np.asarray(positions_mm, dtype=float)
    centre = p.mean(axis=0)
    src = np.array([centre[0] + source_offset_mm[0], centre[1] + source_offset_mm[1], source_offset_mm[2]])
    d = np.sqrt((p[:, 0] - src[0]) ** 2 + (p[:, 1] - src[1]) ** 2 + src[2] ** 2)
    gain = 1.0 / d
    return gain / gain.mean()


@dataclass(frozen=True, eq=False)
class VentricularActivity:
    train: np.ndarray
    channel_map: np.ndarray
    r_peaks: np.ndarray
    amplitudes: np.ndarray
    widths: np.ndarray
    sample_rate_hz: float = 1000.0

    def panel(self) -> SignalPanel:
        return SignalPanel(np.outer(self.channel_map, self.train), self.sample_rate_hz)


def synthesize_va(n_beats: int, rate_bpm: float, amplitude_jitter: float = 0.1, width_jitter: float = 0.1,
                  seed: int = 0, *, n_samples: int | None = None, sample_rate_hz: float = 1000.0,
                  amplitude_mv: float = 1.0, channel_map: np.ndarray | None = None,
                  first_beat_ms: float | None = None) -> VentricularActivity:
    """QRS train with per-beat uniform amplitude and width factors in ``[1 - j, 1 + j]``.

    Beats are spaced ``60 / rate_bpm`` seconds apart starting at
    ``first_beat_ms`` (default half a period); beats whose R-peak falls
    outside the record are dropped.
    """
    if not rate_bpm > 0:
        raise InvalidParameterError("beat rate must be positive")
    if not (0 <= amplitude_jitter < 1 and 0 <= width_jitter < 1):
        raise InvalidParameterError("jitter fractions must lie in [0, 1)")
    period_ms = 60e3 / rate_bpm
    if n_samples is None:
        n_samples = int(round(n_beats * period_ms * sample_rate_hz / 1e3))
    first = period_ms / 2.0 if first_beat_ms is None else first_beat_ms
    rng = np.random.default_rng(seed)
    amps = amplitude_mv * rng.uniform(1 - amplitude_jitter, 1 + amplitude_jitter, n_beats)
    widths = rng.uniform(1 - width_jitter, 1 + width_jitter, n_beats)

    t_ms = np.arange(n_samples) * 1e3 / sample_rate_hz
    peaks = np.round((first + period_ms * np.arange(n_beats)) * sample_rate_hz / 1e3).astype(np.int64)
    keep = (peaks >= 0) & (peaks < n_samples)
    train = np.zeros(n_samples)
    for pk, a, w in zip(peaks[keep], amps[keep], widths[keep]):
        # waveform support is well inside +-120 ms even at the widest jitter
        lo = max(0, pk - int(0.12 * sample_rate_hz * 1.5))
        hi = min(n_samples, pk + int(0.12 * sample_rate_hz * 1.5) + 1)
        train[lo:hi] += a * qrs_waveform(t_ms[lo:hi] - t_ms[pk], w)

    if channel_map is None:
        channel_map = attenuation_map(grid_positions_mm())
    return VentricularActivity(train, np.asarray(channel_map, dtype=float), peaks[keep], amps[keep],
                               widths[keep], sample_rate_hz)


def mix(atrial: SignalPanel, ventricular: SignalPanel) -> SignalPanel:
    if atrial.samples.shape != ventricular.samples.shape:
        raise DimensionMismatchError(f"shapes differ: {atrial.samples.shape} vs {ventricular.samples.shape}")
    if atrial.sample_rate_hz != ventricular.sample_rate_hz:
        raise DimensionMismatchError("sample rates differ")
    return SignalPanel(atrial.samples + ventricular.samples, atrial.sample_rate_hz)
