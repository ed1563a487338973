"""Atrial activity extraction by graph-smoothness shrinkage, and the average beat subtraction baseline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.signal import find_peaks

from .errors import (DimensionMismatchError, InsufficientBeatsError, InsufficientDataError,
                     InvalidParameterError)
from .graph import ElectrodeGraph, LaplacianSpectrum, graph_spectrum
from .transforms import FrameConfig, JointSpectrum, SignalPanel, inverse_joint, joint_transform


@dataclass(frozen=True)
class GAEParams:
    """Smoothness bound ``c``, multiplier ``mu`` and the VA detection factor."""

    c: float = 0.14
    mu: float = 2.0
    va_threshold_factor: float = 4.0

    def __post_init__(self) -> None:
        if not self.mu >= 0:
            raise InvalidParameterError(f"mu must be non-negative, got {self.mu}")
        if not self.va_threshold_factor > 0:
            raise InvalidParameterError("va_threshold_factor must be positive")
        # the smallest Laplacian eigenvalue is always 0
        if 1.0 - self.mu * self.c <= 0:
            raise InvalidParameterError(
                f"infeasible parameters: mu*c = {self.mu * self.c:g} must be < 1 "
                "so that the shrinkage denominator stays positive at lambda = 0")

    def denominators(self, lambdas: np.ndarray) -> np.ndarray:
        d = 1.0 - self.mu * self.c + self.mu * np.asarray(lambdas, dtype=float)
        bad = np.flatnonzero(d <= 0)
        if bad.size:
            raise InvalidParameterError(f"nonpositive shrinkage denominator at k = {int(bad[0])}")
        return d


@dataclass(frozen=True, eq=False)
class SeparationResult:
    atrial: SignalPanel
    ventricular: SignalPanel
    va_frames: frozenset[int] = field(default_factory=frozenset)


def gae_shrink(y_hat: np.ndarray, lambdas: np.ndarray, p: GAEParams) -> np.ndarray:
    """Closed-form smooth estimate ``y_hat(k) / (1 - mu c + mu lambda_k)`` along axis 0."""
    y_hat = np.asarray(y_hat)
    d = p.denominators(lambdas)
    if y_hat.shape[0] != d.size:
        raise DimensionMismatchError(f"{y_hat.shape[0]} coefficients but {d.size} eigenvalues")
    return y_hat / d.reshape((-1,) + (1,) * (y_hat.ndim - 1))


def k0_frame_energy(j: JointSpectrum) -> np.ndarray:
    return np.sum(np.abs(j.coeffs[0]) ** 2, axis=-1)


def detect_va_frames(j: JointSpectrum, p: GAEParams) -> frozenset[int]:
    """Frames whose k=0 energy exceeds ``va_threshold_factor`` times the median."""
    if j.frame_count < 3:
        raise InsufficientDataError(f"VA detection needs at least 3 frames, got {j.frame_count}")
    e0 = k0_frame_energy(j)
    return frozenset(int(m) for m in np.flatnonzero(e0 > p.va_threshold_factor * np.median(e0)))


def extract_atrial(panel: SignalPanel, g: ElectrodeGraph | LaplacianSpectrum,
                   cfg: FrameConfig = FrameConfig(), p: GAEParams = GAEParams()) -> SeparationResult:
    """Split ``panel`` into atrial and ventricular parts.

    The ventricular part is the shrunken joint spectrum on flagged frames,
    inverted back to time; the atrial part is the remainder, so both always
    add up to the input.
    """
    spectrum = g if isinstance(g, LaplacianSpectrum) else graph_spectrum(g)
    j = joint_transform(panel, cfg, spectrum)
    flagged = detect_va_frames(j, p)
    v_hat = np.zeros_like(j.coeffs)
    if flagged:
        idx = np.array(sorted(flagged))
        v_hat[:, idx, :] = gae_shrink(j.coeffs[:, idx, :], spectrum.lambdas, p)
    ventricular = inverse_joint(j.with_coeffs(v_hat))
    atrial = SignalPanel(panel.samples - ventricular.samples, panel.sample_rate_hz)
    return SeparationResult(atrial, ventricular, flagged)


def detect_r_peaks(panel: SignalPanel, threshold: float = 0.6, refractory_ms: float = 200.0) -> np.ndarray:
    """R-peak samples on the rectified channel mean."""
    ref = np.abs(panel.samples.mean(axis=0))
    top = ref.max(initial=0.0)
    if top <= 0:
        return np.zeros(0, dtype=np.int64)
    distance = max(1, int(round(refractory_ms * panel.sample_rate_hz / 1000.0)))
    peaks, _ = find_peaks(ref, height=threshold * top, distance=distance)
    return peaks.astype(np.int64)


def abs_baseline(panel: SignalPanel, r_peaks: Sequence[int] | Sequence[Sequence[int]],
                 qrs_half_width: int = 50) -> SeparationResult:
    """Average beat subtraction.

    ``r_peaks`` is either one list shared by all channels or one list per
    channel. The template is the mean of all complete beat windows; it is
    subtracted at every beat, truncated where a window leaves the record.
    """
    y = panel.samples
    K, T = y.shape
    peaks = list(r_peaks)
    if len(peaks) == 0 or np.ndim(peaks[0]) == 0:
        per_channel = [np.asarray(peaks, dtype=np.int64)] * K
    else:
        if len(peaks) != K:
            raise DimensionMismatchError(f"{len(peaks)} peak lists for {K} channels")
        per_channel = [np.asarray(p, dtype=np.int64) for p in peaks]

    hw = int(qrs_half_width)
    offsets = np.arange(-hw, hw + 1)
    atrial = y.copy()
    for i, pk in enumerate(per_channel):
        full = pk[(pk - hw >= 0) & (pk + hw < T)]
        if full.size < 2:
            raise InsufficientBeatsError(f"channel {i}: {full.size} complete beats, need at least 2")
        template = y[i, full[:, None] + offsets].mean(axis=0)
        for r in pk:
            idx = r + offsets
            ok = (idx >= 0) & (idx < T)
            atrial[i, idx[ok]] -= template[ok]
    atrial_panel = SignalPanel(atrial, panel.sample_rate_hz)
    return SeparationResult(atrial_panel, SignalPanel(y - atrial, panel.sample_rate_hz), frozenset())
