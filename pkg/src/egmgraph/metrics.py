"""Quality metrics for extracted atrial activity and beat annotation plumbing."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks

from .errors import DimensionMismatchError, InsufficientBeatsError, UndefinedReferenceError
from .transforms import SignalPanel


class MetricWarning(UserWarning):
    """Emitted when a channel or beat is excluded or clamped."""


@dataclass(frozen=True, eq=False)
class BeatAnnotations:
    """Per-channel R-peaks and inclusive QRS intervals ``[begin, end]``."""

    r_peaks: tuple[np.ndarray, ...]
    intervals: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.r_peaks) != len(self.intervals):
            raise DimensionMismatchError("peaks and intervals disagree on the channel count")
        for pk, iv in zip(self.r_peaks, self.intervals):
            if iv.shape != (pk.size, 2):
                raise DimensionMismatchError("one interval per peak is required")
            if pk.size and (np.any(np.diff(pk) <= 0) or np.any(iv[1:, 0] <= iv[:-1, 1])
                            or np.any(pk < iv[:, 0]) or np.any(pk > iv[:, 1])):
                raise ValueError("intervals must be sorted, disjoint and contain their peaks")

    @property
    def channel_count(self) -> int:
        return len(self.r_peaks)

    @property
    def beat_counts(self) -> np.ndarray:
        return np.array([p.size for p in self.r_peaks], dtype=np.int64)

    @classmethod
    def from_peaks(cls, peaks: np.ndarray | list, n_channels: int, n_samples: int,
                   half_width: int = 50) -> "BeatAnnotations":
        """Share one peak list across channels, or take one list per channel."""
        if len(peaks) and np.ndim(peaks[0]) > 0:
            lists = [np.asarray(p, dtype=np.int64) for p in peaks]
        else:
            lists = [np.asarray(peaks, dtype=np.int64)] * n_channels
        if len(lists) != n_channels:
            raise DimensionMismatchError(f"{len(lists)} peak lists for {n_channels} channels")
        return cls(tuple(np.sort(p) for p in lists),
                   tuple(_intervals(np.sort(p), n_samples, half_width) for p in lists))


def _intervals(peaks: np.ndarray, n_samples: int, hw: int) -> np.ndarray:
    """Windows of ``peak +- hw`` clipped to the record and to the midpoints between neighbours."""
    if peaks.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    begin = np.maximum(peaks - hw, 0)
    end = np.minimum(peaks + hw, n_samples - 1)
    if peaks.size > 1:
        mid = (peaks[:-1] + peaks[1:]) // 2
        end[:-1] = np.minimum(end[:-1], mid)
        begin[1:] = np.maximum(begin[1:], mid + 1)
    return np.column_stack([begin, end]).astype(np.int64)


def detect_beats(panel: SignalPanel, threshold: float = 0.6, refractory_ms: float = 200.0,
                 qrs_half_width_ms: float = 50.0, reference: np.ndarray | None = None) -> BeatAnnotations:
    """Threshold-and-refractory R-peak detection on ``|y|``.

    Runs per channel unless a ``reference`` trace is given, in which case its
    peaks are shared by all channels.
    """
    fs = panel.sample_rate_hz
    K, T = panel.samples.shape
    distance = max(1, int(round(refractory_ms * fs / 1000.0)))
    hw = int(round(qrs_half_width_ms * fs / 1000.0))

    def pick(x: np.ndarray) -> np.ndarray:
        x = np.abs(x)
        top = x.max(initial=0.0)
        if top <= 0:
            return np.zeros(0, dtype=np.int64)
        return find_peaks(x, height=threshold * top, distance=distance)[0].astype(np.int64)

    if reference is not None:
        return BeatAnnotations.from_peaks(pick(np.asarray(reference, dtype=float)), K, T, hw)
    return BeatAnnotations.from_peaks([pick(row) for row in panel.samples], K, T, hw)


def _pair(a: SignalPanel, b: SignalPanel) -> tuple[np.ndarray, np.ndarray]:
    if a.samples.shape != b.samples.shape:
        raise DimensionMismatchError(f"shapes differ: {a.samples.shape} vs {b.samples.shape}")
    return a.samples, b.samples


def nmse_per_channel(a: SignalPanel, a_est: SignalPanel) -> np.ndarray:
    x, y = _pair(a, a_est)
    ref = np.sum(x ** 2, axis=1)
    err = np.sum((x - y) ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(ref > 0, err / np.where(ref > 0, ref, 1.0), np.nan)


def nmse(a: SignalPanel, a_est: SignalPanel) -> float:
    """Mean over channels of squared error energy relative to reference energy."""
    per = nmse_per_channel(a, a_est)
    bad = np.isnan(per)
    if bad.all():
        raise UndefinedReferenceError("every reference channel has zero energy")
    if bad.any():
        warnings.warn(f"nmse: {int(bad.sum())} zero-energy reference channel(s) excluded", MetricWarning)
    return float(np.mean(per[~bad]))


def cc_per_channel(a: SignalPanel, a_est: SignalPanel) -> np.ndarray:
    x, y = _pair(a, a_est)
    xc = x - x.mean(axis=1, keepdims=True)
    yc = y - y.mean(axis=1, keepdims=True)
    den = np.sqrt(np.sum(xc ** 2, axis=1) * np.sum(yc ** 2, axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, np.sum(xc * yc, axis=1) / np.where(den > 0, den, 1.0), np.nan)
    return np.clip(r, -1.0, 1.0)


def cc(a: SignalPanel, a_est: SignalPanel) -> float:
    """Mean Pearson correlation over channels."""
    per = cc_per_channel(a, a_est)
    bad = np.isnan(per)
    if bad.all():
        raise UndefinedReferenceError("every channel pair contains a constant signal")
    if bad.any():
        warnings.warn(f"cc: {int(bad.sum())} constant channel(s) excluded", MetricWarning)
    return float(np.mean(per[~bad]))


def vdr_per_channel(mixed: SignalPanel, residual: SignalPanel, ann: BeatAnnotations,
                    eps: float = 1e-12) -> np.ndarray:
    """Mean R-peak amplitude reduction in dB, per channel (NaN without beats).

    ``residual`` is what remains at the R-peaks after cancellation, i.e. the
    atrial estimate.
    """
    y, r = _pair(mixed, residual)
    if ann.channel_count != y.shape[0]:
        raise DimensionMismatchError("annotations do not match the panel")
    out = np.full(y.shape[0], np.nan)
    clamped = 0
    for i, pk in enumerate(ann.r_peaks):
        if pk.size == 0:
            continue
        rm = np.abs(y[i, pk])
        rr = np.abs(r[i, pk])
        keep = rm > 0
        if not keep.any():
            continue
        rm, rr = rm[keep], rr[keep]
        zero = rr < eps * rm
        clamped += int(zero.sum())
        rr = np.where(zero, eps * rm, rr)
        out[i] = np.mean(10.0 * np.log10(rm / rr))
    if clamped:
        warnings.warn(f"vdr: {clamped} zero residual peak(s) clamped to eps", MetricWarning)
    return out


def vdr(mixed: SignalPanel, residual: SignalPanel, ann: BeatAnnotations, eps: float = 1e-12) -> float:
    per = vdr_per_channel(mixed, residual, ann, eps)
    if np.isnan(per).all():
        raise InsufficientBeatsError("no annotated beats with nonzero mixed amplitude")
    return float(np.nanmean(per))


def vr_per_channel(a_est: SignalPanel, ann: BeatAnnotations) -> np.ndarray:
    """Mean over beats of peak-times-root-energy inside each QRS interval over the record RMS."""
    x = a_est.samples
    if ann.channel_count != x.shape[0]:
        raise DimensionMismatchError("annotations do not match the panel")
    out = np.full(x.shape[0], np.nan)
    for i, iv in enumerate(ann.intervals):
        if iv.shape[0] == 0:
            continue
        rms = np.sqrt(np.mean(x[i] ** 2))
        if rms == 0:
            out[i] = 0.0
            continue
        vals = []
        for b, e in iv:
            seg = x[i, b:e + 1]
            vals.append(np.abs(seg).max() * np.sqrt(np.sum(seg ** 2)) / rms)
        out[i] = np.mean(vals)
    return out


def vr(a_est: SignalPanel, ann: BeatAnnotations) -> float:
    per = vr_per_channel(a_est, ann)
    if np.isnan(per).all():
        raise InsufficientBeatsError("annotations contain no beats")
    return float(np.nanmean(per))


@dataclass
class MetricReport:
    method: str
    nmse: float | None = None
    cc: float | None = None
    vdr: float | None = None
    vr: float | None = None
    per_channel: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"method": self.method, "nmse": self.nmse, "cc": self.cc, "vdr": self.vdr,
                "vr": self.vr, "per_channel": self.per_channel, "warnings": self.warnings}


def _nan_to_none(x: float) -> float | None:
    return None if x is None or np.isnan(x) else float(x)


def evaluate(method: str, estimate: SignalPanel, *, reference: SignalPanel | None = None,
             mixed: SignalPanel | None = None, ann: BeatAnnotations | None = None,
             metrics: tuple[str, ...] = ("nmse", "cc", "vdr", "vr")) -> MetricReport:
    """Compute the requested metrics that the supplied inputs allow."""
    report = MetricReport(method)
    per: dict[str, np.ndarray] = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MetricWarning)
        if reference is not None:
            if "nmse" in metrics:
                report.nmse = nmse(reference, estimate)
            if "cc" in metrics:
                report.cc = cc(reference, estimate)
        if ann is not None:
            if "vdr" in metrics and mixed is not None:
                report.vdr = vdr(mixed, estimate, ann)
            if "vr" in metrics:
                report.vr = vr(estimate, ann)
    report.warnings = [str(w.message) for w in caught if issubclass(w.category, MetricWarning)]
    # per-channel values repeat the same exclusions, so their warnings are dropped
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MetricWarning)
        if report.nmse is not None:
            per["nmse"] = nmse_per_channel(reference, estimate)
        if report.cc is not None:
            per["cc"] = cc_per_channel(reference, estimate)
        if report.vdr is not None:
            per["vdr"] = vdr_per_channel(mixed, estimate, ann)
        if report.vr is not None:
            per["vr"] = vr_per_channel(estimate, ann)
    report.per_channel = [{"channel": i, **{k: _nan_to_none(v[i]) for k, v in per.items()}}
                          for i in range(estimate.channel_count)]
    return report
