"""Simulation configuration dataclasses."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidGeometryError, InvalidParameterError

# Intracellular conductivities (mS/cm) calibrated for the default
# Mitchell-Schaeffer parameters at dx = 0.01 cm, dt = 0.05 ms:
# 100 cm/s along x and 50 cm/s along y.
CALIBRATED_SIGMA_L = 1.7956727217831392
CALIBRATED_SIGMA_T = 0.5627570382315944


@dataclass(frozen=True)
class TissueConfig:
    """Monodomain sheet. Longitudinal fibres run along x (columns)."""

    nx: int = 200
    ny: int = 200
    dx_cm: float = 0.01
    dt_ms: float = 0.05
    cv_longitudinal_cm_s: float = 100.0
    anisotropy_ratio: float = 0.5
    capacitance_pf: float = 100.0
    cell_radius_um: float = 5.0
    specific_capacitance_uf_cm2: float = 1.0
    sigma_l_ms_cm: float = CALIBRATED_SIGMA_L
    sigma_t_ms_cm: float = CALIBRATED_SIGMA_T
    sigma_e_ms_cm: float = 2.0

    def __post_init__(self) -> None:
        if self.nx < 3 or self.ny < 3:
            raise InvalidParameterError("the grid needs at least 3x3 cells")
        positive = ("dx_cm", "dt_ms", "cv_longitudinal_cm_s", "anisotropy_ratio", "capacitance_pf",
                    "cell_radius_um", "specific_capacitance_uf_cm2", "sigma_l_ms_cm", "sigma_t_ms_cm",
                    "sigma_e_ms_cm")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")
        if self.dt_ms > self.max_stable_dt_ms:
            raise InvalidParameterError(
                f"dt = {self.dt_ms} ms exceeds the explicit stability limit {self.max_stable_dt_ms:.4g} ms")

    @property
    def surface_to_volume_per_cm(self) -> float:
        """Cylindrical cell: 2 / radius."""
        return 2.0 / (self.cell_radius_um * 1e-4)

    def diffusivity(self, sigma_ms_cm: float) -> float:
        """cm^2/ms for an intracellular conductivity in mS/cm."""
        return sigma_ms_cm / (self.surface_to_volume_per_cm * self.specific_capacitance_uf_cm2)

    def sigma_for(self, diffusivity_cm2_ms: float) -> float:
        return diffusivity_cm2_ms * self.surface_to_volume_per_cm * self.specific_capacitance_uf_cm2

    @property
    def diffusivity_l(self) -> float:
        return self.diffusivity(self.sigma_l_ms_cm)

    @property
    def diffusivity_t(self) -> float:
        return self.diffusivity(self.sigma_t_ms_cm)

    @property
    def max_stable_dt_ms(self) -> float:
        """Forward-Euler bound for the 5-point anisotropic stencil."""
        return self.dx_cm ** 2 / (2.0 * (self.diffusivity_l + self.diffusivity_t))

    @property
    def extent_mm(self) -> tuple[float, float]:
        return self.nx * self.dx_cm * 10.0, self.ny * self.dx_cm * 10.0

    def with_grid(self, nx: int, ny: int) -> "TissueConfig":
        return replace(self, nx=nx, ny=ny)


def default_foci(nx: int = 200, ny: int = 200) -> tuple[tuple[int, int], ...]:
    """Four sites near the corners and one near the centre, as (x, y) cells.

    The sites sit outside or between the electrodes of the default array so
    that no stimulus lands directly under a recording site.
    """
    fx = (0.05, 0.95, 0.06, 0.94, 0.45)
    fy = (0.06, 0.05, 0.95, 0.94, 0.55)
    return tuple((int(round(a * (nx - 1))), int(round(b * (ny - 1)))) for a, b in zip(fx, fy))


@dataclass(frozen=True)
class FociSchedule:
    """Ectopic pacing sites firing rectangular pulses every ``cycle_length_ms``.

    ``phase_offsets_ms`` of ``None`` draws one offset per source from the run
    seed. ``cycle_jitter_ms`` adds a seeded uniform perturbation to every
    firing time.
    """

    sources: tuple[tuple[int, int], ...] = field(default_factory=default_foci)
    stimulus_duration_ms: float = 50.0
    cycle_length_ms: float = 160.0
    stimulus_amplitude: float = 30.0
    phase_offsets_ms: tuple[float, ...] | None = None
    radius_cells: int = 3
    cycle_jitter_ms: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(tuple(int(v) for v in s) for s in self.sources))
        if self.cycle_length_ms <= self.stimulus_duration_ms:
            raise InvalidParameterError("cycle length must exceed the stimulus duration")
        if self.stimulus_duration_ms <= 0 or self.radius_cells < 0 or self.cycle_jitter_ms < 0:
            raise InvalidParameterError("invalid stimulus duration, radius or jitter")
        if self.phase_offsets_ms is not None and len(self.phase_offsets_ms) != len(self.sources):
            raise InvalidParameterError("one phase offset per source is required")

    def validate(self, cfg: TissueConfig) -> None:
        for x, y in self.sources:
            if not (0 <= x < cfg.nx and 0 <= y < cfg.ny):
                raise InvalidParameterError(f"focus ({x}, {y}) lies outside the {cfg.nx}x{cfg.ny} grid")

    def onsets(self, duration_ms: float, seed: int) -> list[np.ndarray]:
        """Firing times of every source in ``[0, duration_ms)``."""
        rng = np.random.default_rng(seed)
        if self.phase_offsets_ms is None:
            phases = rng.uniform(0.0, self.cycle_length_ms, len(self.sources))
        else:
            phases = np.asarray(self.phase_offsets_ms, dtype=float)
        n = int(np.ceil(duration_ms / self.cycle_length_ms)) + 1
        out = []
        for ph in phases:
            t = ph + self.cycle_length_ms * np.arange(n)
            if self.cycle_jitter_ms > 0:
                t = t + rng.uniform(-self.cycle_jitter_ms, self.cycle_jitter_ms, n)
            out.append(t[(t >= 0) & (t < duration_ms)])
        return out


@dataclass(frozen=True)
class ElectrodeArraySpec:
    """Electrode grid above the tissue, centred unless ``center_mm`` is given."""

    rows: int = 8
    cols: int = 8
    pitch_mm: float = 2.0
    height_mm: float = 0.5
    center_mm: tuple[float, float] | None = None

    def positions_mm(self, cfg: TissueConfig) -> np.ndarray:
        """(rows*cols, 3) electrode coordinates, row-major like ``build_grid_graph``."""
        if self.rows < 1 or self.cols < 1 or self.pitch_mm <= 0 or self.height_mm < 0:
            raise InvalidGeometryError("invalid electrode array dimensions")
        w, h = cfg.extent_mm
        cx, cy = self.center_mm if self.center_mm is not None else (w / 2.0, h / 2.0)
        x0 = cx - (self.cols - 1) * self.pitch_mm / 2.0
        y0 = cy - (self.rows - 1) * self.pitch_mm / 2.0
        x1 = x0 + (self.cols - 1) * self.pitch_mm
        y1 = y0 + (self.rows - 1) * self.pitch_mm
        if x0 < 0 or y0 < 0 or x1 > w or y1 > h:
            raise InvalidGeometryError("electrode array footprint exceeds the tissue extent")
        r, c = np.divmod(np.arange(self.rows * self.cols), self.cols)
        return np.column_stack([x0 + c * self.pitch_mm, y0 + r * self.pitch_mm,
                                np.full(r.size, self.height_mm)])
