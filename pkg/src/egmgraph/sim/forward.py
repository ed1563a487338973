"""Point-source volume-conductor model mapping transmembrane currents to electrode potentials."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionMismatchError, InvalidGeometryError
from ..transforms import SignalPanel
from .config import ElectrodeArraySpec, TissueConfig


def lead_field(array: ElectrodeArraySpec, cfg: TissueConfig) -> np.ndarray:
    """Matrix (K, ny*nx) mapping current density (uA/cm^2) to potential (mV).

    Each cell contributes ``I * dA / (4 pi sigma_e r)`` with cell centres at
    ``(j + 1/2, i + 1/2) * dx`` in the tissue plane.
    """
    z = array.positions_mm(cfg) / 10.0
    xs = (np.arange(cfg.nx) + 0.5) * cfg.dx_cm
    ys = (np.arange(cfg.ny) + 0.5) * cfg.dx_cm
    cx, cy = np.meshgrid(xs, ys)
    G = np.empty((z.shape[0], cfg.ny * cfg.nx))
    for e, (ex, ey, ez) in enumerate(z):
        r = np.sqrt((cx - ex) ** 2 + (cy - ey) ** 2 + ez ** 2).ravel()
        if np.any(r <= 1e-12):
            raise InvalidGeometryError(f"electrode {e} coincides with a cell centre")
        G[e] = 1.0 / r
    return G * (cfg.dx_cm ** 2 / (4.0 * np.pi * cfg.sigma_e_ms_cm))


def electrode_potentials(itm: np.ndarray, array: ElectrodeArraySpec, cfg: TissueConfig,
                         sample_rate_hz: float = 1000.0) -> SignalPanel:
    """Potentials for an I_tm trajectory of shape (T, ny, nx)."""
    itm = np.asarray(itm, dtype=float)
    if itm.ndim != 3 or itm.shape[1:] != (cfg.ny, cfg.nx):
        raise DimensionMismatchError(f"trajectory shape {itm.shape} does not match the {cfg.ny}x{cfg.nx} grid")
    G = lead_field(array, cfg)
    return SignalPanel(G @ itm.reshape(itm.shape[0], -1).T, sample_rate_hz)


class StreamingRecorder:
    """Sink for ``run_af_episode`` that keeps only the electrode potentials."""

    def __init__(self, array: ElectrodeArraySpec, cfg: TissueConfig, n_samples: int):
        self.G = lead_field(array, cfg)
        self.samples = np.zeros((self.G.shape[0], n_samples))

    def __call__(self, index: int, itm: np.ndarray) -> None:
        self.samples[:, index] = self.G @ itm.ravel()

    def panel(self, sample_rate_hz: float = 1000.0) -> SignalPanel:
        return SignalPanel(self.samples, sample_rate_hz)
