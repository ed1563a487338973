"""Energy maps, level discretization, graph variation and related summaries."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError, UndefinedReferenceError
from .graph import LaplacianSpectrum
from .transforms import JointSpectrum, SignalPanel, STFTTensor, gft


class Level(IntEnum):
    L1 = 1
    L2 = 2
    L3 = 3


@dataclass(frozen=True, eq=False)
class EnergyMapDB:
    """Energies in dB relative to the map maximum; zero cells hold ``-inf``.

    ``freqs_hz`` labels the columns of a time-frequency map and is ``None``
    for graph-frequency maps.
    """

    values: np.ndarray
    reference_max: float
    freqs_hz: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class LevelMap:
    labels: np.ndarray
    thresholds: tuple[float, float] = (-1.0, -6.0)
    freqs_hz: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class VariationSeries:
    values: np.ndarray
    kind: str = "raw"


def _db(power: np.ndarray) -> tuple[np.ndarray, float]:
    pmax = float(power.max(initial=0.0))
    if pmax <= 0.0:
        raise UndefinedReferenceError("energy map is identically zero")
    with np.errstate(divide="ignore"):
        values = 10.0 * np.log10(power / pmax)
    return values, float(np.sqrt(pmax))


def normalized_energy_db(t: STFTTensor | JointSpectrum, channel: int) -> EnergyMapDB:
    """Per-cell power of one channel (or graph mode) over frames and bins, in dB."""
    if not 0 <= channel < t.coeffs.shape[0]:
        raise InvalidParameterError(f"channel {channel} out of range")
    values, ref = _db(np.abs(t.coeffs[channel]) ** 2)
    return EnergyMapDB(values, ref, t.frequencies_hz())


def quantize_levels(e: EnergyMapDB, t1: float = -1.0, t2: float = -6.0) -> LevelMap:
    v = e.values
    labels = np.full(v.shape, Level.L3, dtype=np.int8)
    labels[v >= t2] = Level.L2
    labels[v >= t1] = Level.L1
    return LevelMap(labels, (t1, t2), e.freqs_hz)


def relevant_band(lm: LevelMap, level: Level, bin_width_hz: float | None = None) -> tuple[float, float]:
    """``(0, f_max)`` where ``f_max`` is the highest non-negative bin reaching ``level``."""
    F = lm.labels.shape[-1]
    freqs = lm.freqs_hz if lm.freqs_hz is not None else np.arange(F) * (bin_width_hz or 1.0)
    width = bin_width_hz if bin_width_hz else (freqs[1] - freqs[0] if F > 1 else 1.0)
    half = F // 2 + 1
    hits = np.flatnonzero((lm.labels[..., :half] == level).any(axis=tuple(range(lm.labels.ndim - 1))))
    if hits.size == 0 or hits[-1] == 0:
        return 0.0, 0.0
    f_max = np.floor(freqs[hits[-1]] / width + 1e-9) * width
    return 0.0, float(f_max)


def gft_energy(panel: SignalPanel, spectrum: LaplacianSpectrum) -> np.ndarray:
    """Linear energy ``|x_hat(k, t)|^2`` with shape (K, T)."""
    return np.abs(gft(spectrum, panel.samples)) ** 2


def gft_energy_db(panel: SignalPanel, spectrum: LaplacianSpectrum) -> EnergyMapDB:
    values, ref = _db(gft_energy(panel, spectrum))
    return EnergyMapDB(values, ref)


def quadratic_variation(L: np.ndarray, x: np.ndarray) -> float:
    """Laplacian quadratic form, i.e. the weighted sum over edges of squared differences."""
    L = np.asarray(L)
    x = np.asarray(x)
    if x.shape != (L.shape[0],):
        raise DimensionMismatchError(f"vector of shape {x.shape} does not match {L.shape[0]} vertices")
    return float(np.real(np.vdot(x, L @ x)))


def normalized_variation(L_or_spectrum: np.ndarray | LaplacianSpectrum, x: np.ndarray) -> float:
    """Rayleigh quotient. With a spectrum it is evaluated from GFT coefficients."""
    x = np.asarray(x)
    energy = float(np.real(np.vdot(x, x)))
    if energy == 0.0:
        raise InvalidParameterError("normalized variation of the zero vector is undefined")
    if isinstance(L_or_spectrum, LaplacianSpectrum):
        coeffs = gft(L_or_spectrum, x)
        return float(np.sum(L_or_spectrum.lambdas * np.abs(coeffs) ** 2) / energy)
    return quadratic_variation(L_or_spectrum, x) / energy


def graph_variation_series(panel: SignalPanel, L: np.ndarray) -> VariationSeries:
    """Quadratic variation of the graph signal at every time instant."""
    y = panel.samples
    if y.shape[0] != L.shape[0]:
        raise DimensionMismatchError("panel does not match the Laplacian")
    return VariationSeries(np.einsum("it,it->t", y, L @ y), "raw")


def boundary_graph_frequency(energy: np.ndarray, p: float) -> int:
    """Smallest ``k_b`` whose cumulative energy (summed over time) reaches fraction ``p``."""
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"fraction p must lie in (0, 1), got {p}")
    e = np.asarray(energy, dtype=float)
    per_mode = e.sum(axis=tuple(range(1, e.ndim))) if e.ndim > 1 else e
    total = per_mode.sum()
    if total <= 0.0:
        raise UndefinedReferenceError("total energy is zero")
    cum = np.cumsum(per_mode)
    return int(np.flatnonzero(cum >= p * total * (1.0 - 1e-12))[0])


def band_average_variation(j: JointSpectrum, split_hz: float = 100.0) -> tuple[VariationSeries, VariationSeries]:
    """Per-frame mean normalized variation over the bins below and above ``split_hz``.

    Only the non-negative half of the spectrum is used; bins with zero energy
    are skipped and a frame without any usable bin yields NaN.
    """
    freqs = j.frequencies_hz()
    nyquist = j.sample_rate_hz / 2.0
    if not 0.0 < split_hz <= nyquist:
        raise InvalidParameterError(f"split frequency must lie in (0, {nyquist}] Hz")
    half = freqs <= nyquist
    low = np.flatnonzero(half & (freqs < split_hz))
    high = np.flatnonzero(half & (freqs >= split_hz))
    if low.size == 0 or high.size == 0:
        raise InvalidParameterError("one of the frequency bands contains no bins")

    power = np.abs(j.coeffs) ** 2
    num = np.einsum("k,kmf->mf", j.spectrum.lambdas, power)
    den = power.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)

    def band_mean(bins: np.ndarray) -> np.ndarray:
        r = ratio[:, bins]
        ok = ~np.isnan(r)
        count = ok.sum(axis=1)
        with np.errstate(invalid="ignore"):
            return np.where(count > 0, np.nansum(r, axis=1) / np.maximum(count, 1), np.nan)

    return VariationSeries(band_mean(low), "normalized"), VariationSeries(band_mean(high), "normalized")


def is_bandlimited(x_hat: np.ndarray, k0: int, tol: float = 0.0) -> bool:
    return bool(np.all(np.abs(np.asarray(x_hat)[k0 + 1:]) <= tol))
