"""Framing, STFT, graph Fourier transform and the joint transform with inverses."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import check_COLA, get_window

from .errors import DimensionMismatchError, InvalidConfigError, InvalidLengthError, InvalidParameterError
from .graph import LaplacianSpectrum

WINDOW_IDS = {"hann": 1, "hamming": 2, "boxcar": 3}


@dataclass(frozen=True, eq=False)
class SignalPanel:
    """K channels by T samples of real data in millivolts."""

    samples: np.ndarray
    sample_rate_hz: float = 1000.0

    def __post_init__(self) -> None:
        x = np.asarray(self.samples, dtype=float)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2:
            raise DimensionMismatchError(f"panel must be 2-D (K x T), got shape {x.shape}")
        if not self.sample_rate_hz > 0:
            raise InvalidParameterError("sample_rate_hz must be positive")
        x = np.ascontiguousarray(x)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def times_s(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate_hz


@dataclass(frozen=True)
class FrameConfig:
    frame_len: int = 100
    hop: int | None = None
    window: str = "hann"
    fft_bins: int | None = None

    def __post_init__(self) -> None:
        if self.frame_len < 1:
            raise InvalidParameterError("frame_len must be positive")
        if self.hop is None:
            object.__setattr__(self, "hop", max(1, self.frame_len // 2))
        if self.fft_bins is None:
            object.__setattr__(self, "fft_bins", self.frame_len)
        if not 1 <= self.hop <= self.frame_len:
            raise InvalidParameterError(f"hop must lie in [1, frame_len], got {self.hop}")
        if self.fft_bins < self.frame_len:
            raise InvalidParameterError("fft_bins must be >= frame_len")
        if self.window not in WINDOW_IDS:
            raise InvalidParameterError(f"unknown window {self.window!r}; choose from {sorted(WINDOW_IDS)}")

    @classmethod
    def from_seconds(cls, frame_s: float, sample_rate_hz: float, overlap: float = 0.5,
                     window: str = "hann") -> "FrameConfig":
        n = int(round(frame_s * sample_rate_hz))
        return cls(n, max(1, int(round(n * (1.0 - overlap)))), window)

    def taper(self) -> np.ndarray:
        """Periodic window of length ``frame_len``."""
        return get_window(self.window, self.frame_len, fftbins=True)

    def is_cola(self) -> bool:
        return bool(check_COLA(self.taper(), self.frame_len, self.frame_len - self.hop, tol=1e-10))

    def cola_constant(self) -> float:
        return float(self.taper().sum() / self.hop)

    def frame_count(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            raise InvalidLengthError(f"signal of {n_samples} samples is shorter than one frame ({self.frame_len})")
        return (n_samples - self.frame_len) // self.hop + 1

    def bin_frequencies(self, sample_rate_hz: float) -> np.ndarray:
        return np.arange(self.fft_bins) * sample_rate_hz / self.fft_bins


@dataclass(frozen=True, eq=False)
class STFTTensor:
    """Complex coefficients with shape (K, M, F)."""

    coeffs: np.ndarray
    config: FrameConfig
    sample_rate_hz: float
    n_samples: int

    @property
    def frame_count(self) -> int:
        return self.coeffs.shape[1]

    def frequencies_hz(self) -> np.ndarray:
        return self.config.bin_frequencies(self.sample_rate_hz)


@dataclass(frozen=True, eq=False)
class JointSpectrum:
    """Graph-frequency-major coefficients with shape (K, M, F)."""

    coeffs: np.ndarray
    spectrum: LaplacianSpectrum
    config: FrameConfig
    sample_rate_hz: float
    n_samples: int

    @property
    def frame_count(self) -> int:
        return self.coeffs.shape[1]

    def frequencies_hz(self) -> np.ndarray:
        return self.config.bin_frequencies(self.sample_rate_hz)

    def with_coeffs(self, coeffs: np.ndarray) -> "JointSpectrum":
        if coeffs.shape != self.coeffs.shape:
            raise DimensionMismatchError(f"expected shape {self.coeffs.shape}, got {coeffs.shape}")
        return JointSpectrum(coeffs, self.spectrum, self.config, self.sample_rate_hz, self.n_samples)


def enframe(panel: SignalPanel, cfg: FrameConfig) -> np.ndarray:
    """Frames of shape (M, K, T_M); frame ``m`` starts at sample ``m * hop``."""
    M = cfg.frame_count(panel.n_samples)
    idx = np.arange(M)[:, None] * cfg.hop + np.arange(cfg.frame_len)[None, :]
    return np.transpose(panel.samples[:, idx], (1, 0, 2))


def stft(panel: SignalPanel, cfg: FrameConfig = FrameConfig()) -> STFTTensor:
    frames = enframe(panel, cfg) * cfg.taper()
    coeffs = np.fft.fft(frames, n=cfg.fft_bins, axis=-1)
    return STFTTensor(np.ascontiguousarray(np.transpose(coeffs, (1, 0, 2))), cfg,
                      panel.sample_rate_hz, panel.n_samples)


def _overlap_add(coeffs: np.ndarray, cfg: FrameConfig, n_samples: int) -> np.ndarray:
    if not cfg.is_cola():
        raise InvalidConfigError(f"window {cfg.window!r} with hop {cfg.hop} is not constant-overlap-add")
    K, M, _ = coeffs.shape
    frames = np.fft.ifft(coeffs, axis=-1).real[:, :, :cfg.frame_len]
    out = np.zeros((K, max(n_samples, (M - 1) * cfg.hop + cfg.frame_len)))
    for m in range(M):
        out[:, m * cfg.hop:m * cfg.hop + cfg.frame_len] += frames[:, m]
    return out[:, :n_samples] / cfg.cola_constant()


def istft(t: STFTTensor) -> SignalPanel:
    """Overlap-add inverse; exact only where ``coverage_mask`` is true."""
    return SignalPanel(_overlap_add(t.coeffs, t.config, t.n_samples), t.sample_rate_hz)


def coverage_mask(cfg: FrameConfig, n_samples: int) -> np.ndarray:
    """Samples covered by the same set of frames as in an unbounded signal."""
    M = cfg.frame_count(n_samples)
    n = np.arange(n_samples)
    lo = cfg.frame_len - cfg.hop if M > 1 else n_samples
    hi = M * cfg.hop
    return (n >= lo) & (n < hi)


def _check_dim(spectrum: LaplacianSpectrum, K: int) -> None:
    if spectrum.size != K:
        raise DimensionMismatchError(f"signal has {K} vertices but the graph basis has {spectrum.size}")


def gft(spectrum: LaplacianSpectrum, x: np.ndarray) -> np.ndarray:
    """Graph Fourier coefficients along axis 0."""
    x = np.asarray(x)
    _check_dim(spectrum, x.shape[0])
    return np.tensordot(spectrum.U.T, x, axes=1)


def igft(spectrum: LaplacianSpectrum, x_hat: np.ndarray) -> np.ndarray:
    x_hat = np.asarray(x_hat)
    _check_dim(spectrum, x_hat.shape[0])
    return np.tensordot(spectrum.U, x_hat, axes=1)


def joint_transform(panel: SignalPanel, cfg: FrameConfig, spectrum: LaplacianSpectrum) -> JointSpectrum:
    _check_dim(spectrum, panel.channel_count)
    s = stft(panel, cfg)
    return JointSpectrum(gft(spectrum, s.coeffs), spectrum, cfg, panel.sample_rate_hz, panel.n_samples)


def inverse_joint(j: JointSpectrum) -> SignalPanel:
    return SignalPanel(_overlap_add(igft(j.spectrum, j.coeffs), j.config, j.n_samples), j.sample_rate_hz)
