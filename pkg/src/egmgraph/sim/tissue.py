"""Monodomain reaction-diffusion solver on a regular sheet."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numba
import numpy as np

from ..errors import InvalidParameterError, SimulationBlowUpError
from .config import FociSchedule, TissueConfig
from .ionic import IonicModel, MitchellSchaeffer


@dataclass
class TissueState:
    """Membrane potential (ny, nx), ionic states (n, ny, nx) and the clock."""

    V: np.ndarray
    S: np.ndarray
    t_ms: float = 0.0
    step: int = 0

    def copy(self) -> "TissueState":
        return TissueState(self.V.copy(), self.S.copy(), self.t_ms, self.step)


def resting_tissue(cfg: TissueConfig, ionic: IonicModel) -> TissueState:
    V, S = ionic.initial_fields((cfg.ny, cfg.nx))
    return TissueState(V, S)


@numba.njit(cache=True, fastmath=True)
def _diffuse(V, stim, ax, ay, dt, cm, out, itm):
    """Explicit diffusion step with mirrored (zero-flux) boundaries.

    ``itm`` receives the transmembrane current density ``cm * div(D grad V)``.
    """
    ny, nx = V.shape
    for i in range(ny):
        im = i - 1 if i > 0 else 1
        ip = i + 1 if i < ny - 1 else ny - 2
        for j in range(nx):
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < nx - 1 else nx - 2
            c = V[i, j]
            lap = ax * (V[i, jm] + V[i, jp] - 2.0 * c) + ay * (V[im, j] + V[ip, j] - 2.0 * c)
            itm[i, j] = cm * lap
            out[i, j] = c + dt * (lap + stim[i, j])


@numba.njit(cache=True, fastmath=True)
def _diffuse_react_ms(V, h, stim, ax, ay, dt, cm, out, itm, nsub, v_rest, v_amp,
                      tau_in, tau_out, tau_open, tau_close, v_gate):
    """``_diffuse`` fused with the Mitchell-Schaeffer update, one pass over the grid."""
    ny, nx = V.shape
    ds = dt / nsub
    k_in = 1.0 / tau_in
    k_out = 1.0 / tau_out
    k_open = ds / tau_open
    k_close = ds / tau_close
    inv_amp = 1.0 / v_amp
    for i in range(ny):
        im = i - 1 if i > 0 else 1
        ip = i + 1 if i < ny - 1 else ny - 2
        for j in range(nx):
            jm = j - 1 if j > 0 else 1
            jp = j + 1 if j < nx - 1 else nx - 2
            c = V[i, j]
            lap = ax * (V[i, jm] + V[i, jp] - 2.0 * c) + ay * (V[im, j] + V[ip, j] - 2.0 * c)
            itm[i, j] = cm * lap
            v = (c + dt * (lap + stim[i, j]) - v_rest) * inv_amp
            g = h[i, j]
            for _ in range(nsub):
                dv = g * v * v * (1.0 - v) * k_in - v * k_out
                if v < v_gate:
                    g += k_open * (1.0 - g)
                else:
                    g -= k_close * g
                v += ds * dv
            out[i, j] = v_rest + v_amp * v
            h[i, j] = g


class MonodomainSolver:
    """Operator-split integrator: one diffusion step, then the ionic update."""

    def __init__(self, cfg: TissueConfig, ionic: IonicModel | None = None):
        self.cfg = cfg
        self.ionic = ionic if ionic is not None else MitchellSchaeffer()
        self.ax = cfg.diffusivity_l / cfg.dx_cm ** 2
        self.ay = cfg.diffusivity_t / cfg.dx_cm ** 2
        shape = (cfg.ny, cfg.nx)
        self._buf = np.empty(shape)
        self.itm = np.zeros(shape)

    def advance(self, state: TissueState, stim: np.ndarray) -> None:
        """One time step in place; ``self.itm`` holds the current density (uA/cm^2)."""
        m = self.ionic
        if type(m) is MitchellSchaeffer:
            _diffuse_react_ms(state.V, state.S[0], stim, self.ax, self.ay, self.cfg.dt_ms,
                              self.cfg.specific_capacitance_uf_cm2, self._buf, self.itm, m.substeps,
                              m.v_rest, m.v_amp, m.tau_in, m.tau_out, m.tau_open, m.tau_close, m.v_gate)
            state.V, self._buf = self._buf, state.V
            state.step += 1
            state.t_ms = state.step * self.cfg.dt_ms
            return
        _diffuse(state.V, stim, self.ax, self.ay, self.cfg.dt_ms,
                 self.cfg.specific_capacitance_uf_cm2, self._buf, self.itm)
        state.V, self._buf = self._buf, state.V
        self.ionic.react(state.V, state.S, self.cfg.dt_ms)
        state.step += 1
        state.t_ms = state.step * self.cfg.dt_ms

    def check(self, state: TissueState, limit_mv: float = 1e3) -> None:
        if not np.all(np.isfinite(state.V)) or np.abs(state.V).max() > limit_mv:
            raise SimulationBlowUpError(state.step)


def step_monodomain(state: TissueState, ionic: IonicModel, cfg: TissueConfig,
                    stim: np.ndarray | None = None) -> TissueState:
    """Return the state one ``dt`` later. ``stim`` is in pA/pF per cell."""
    solver = MonodomainSolver(cfg, ionic)
    out = state.copy()
    solver.advance(out, np.zeros((cfg.ny, cfg.nx)) if stim is None else np.asarray(stim, dtype=float))
    solver.check(out)
    return out


def disk_mask(cfg: TissueConfig, x: int, y: int, radius: int) -> np.ndarray:
    yy, xx = np.mgrid[0:cfg.ny, 0:cfg.nx]
    return (xx - x) ** 2 + (yy - y) ** 2 <= radius ** 2


@dataclass
class Episode:
    """Output of ``run_af_episode``; ``itm`` is (n_samples, ny, nx) unless streamed to a sink."""

    state: TissueState
    itm: np.ndarray | None
    onsets_ms: list[np.ndarray]
    sample_rate_hz: float


def run_af_episode(cfg: TissueConfig, foci: FociSchedule, duration_s: float, seed: int,
                   ionic: IonicModel | None = None, output_rate_hz: float = 1000.0,
                   warmup_s: float = 0.0,
                   sink: Callable[[int, np.ndarray], None] | None = None) -> Episode:
    """Pace the tissue from the foci and record the transmembrane current.

    Samples are taken every ``1/output_rate_hz`` after ``warmup_s``. When a
    ``sink`` is given it receives ``(sample_index, itm)`` for every sample and
    nothing is stored.
    """
    foci.validate(cfg)
    solver = MonodomainSolver(cfg, ionic)
    state = resting_tissue(cfg, solver.ionic)
    dt = cfg.dt_ms
    total_ms = (warmup_s + duration_s) * 1e3
    n_steps = int(round(total_ms / dt))
    per_sample = (1e3 / output_rate_hz) / dt
    if abs(per_sample - round(per_sample)) > 1e-9:
        raise InvalidParameterError("the output period must be a whole number of time steps")
    per_sample = int(round(per_sample))
    warm_steps = int(round(warmup_s * 1e3 / dt))
    n_out = (n_steps - warm_steps) // per_sample

    onsets = foci.onsets(total_ms, seed)
    masks = [disk_mask(cfg, x, y, foci.radius_cells) for x, y in foci.sources]
    # step indices at which each source switches on and off
    on_steps = [np.round(t / dt).astype(np.int64) for t in onsets]
    pulse = int(round(foci.stimulus_duration_ms / dt))

    stim = np.zeros((cfg.ny, cfg.nx))
    active_key: tuple[bool, ...] = ()
    itm_out = None if sink is not None else np.zeros((n_out, cfg.ny, cfg.nx), dtype=np.float64)
    cursor = [0] * len(masks)
    for n in range(n_steps):
        key = []
        for s, starts in enumerate(on_steps):
            while cursor[s] < starts.size and starts[cursor[s]] + pulse <= n:
                cursor[s] += 1
            key.append(cursor[s] < starts.size and starts[cursor[s]] <= n)
        key = tuple(key)
        if key != active_key:
            stim[:] = 0.0
            for s, on in enumerate(key):
                if on:
                    stim[masks[s]] = foci.stimulus_amplitude
            active_key = key
        solver.advance(state, stim)
        k = n - warm_steps
        if k >= 0 and k % per_sample == 0 and k // per_sample < n_out:
            solver.check(state)
            if sink is not None:
                sink(k // per_sample, solver.itm)
            else:
                itm_out[k // per_sample] = solver.itm
    return Episode(state, itm_out, onsets, output_rate_hz)


def _activation_times(cfg: TissueConfig, ionic: IonicModel, axis: int, t_max_ms: float) -> np.ndarray:
    """Planar wave from the low edge along ``axis`` (1 = x); first crossing time per line position."""
    solver = MonodomainSolver(cfg, ionic)
    state = resting_tissue(cfg, solver.ionic)
    n_line = cfg.nx if axis == 1 else cfg.ny
    stim = np.zeros((cfg.ny, cfg.nx))
    amp, dur = ionic.test_stimulus
    if axis == 1:
        stim[:, :3] = amp
    else:
        stim[:3, :] = amp
    zero = np.zeros_like(stim)
    thr = ionic.activation_threshold_mv
    t_act = np.full(n_line, np.nan)
    prev = state.V.mean(axis=0 if axis == 1 else 1)
    n_steps = int(round(t_max_ms / cfg.dt_ms))
    stim_steps = int(round(dur / cfg.dt_ms))
    for n in range(n_steps):
        solver.advance(state, stim if n < stim_steps else zero)
        line = state.V.mean(axis=0) if axis == 1 else state.V.mean(axis=1)
        hit = np.isnan(t_act) & (prev < thr) & (line >= thr)
        if hit.any():
            # linear interpolation of the crossing inside the step
            frac = (thr - prev[hit]) / (line[hit] - prev[hit])
            t_act[hit] = (n + frac) * cfg.dt_ms
        prev = line
        if not np.isnan(t_act[int(0.85 * n_line)]):
            break
    solver.check(state)
    return t_act


def measure_conduction_velocity(cfg: TissueConfig, ionic: IonicModel | None = None, axis: str = "x",
                                t_max_ms: float = 200.0) -> float:
    """Planar-wave speed in cm/s between 20 % and 80 % of the sheet along ``axis``.

    Returns 0 when the wave fails to reach the far probe.
    """
    ionic = ionic if ionic is not None else MitchellSchaeffer()
    ax = {"x": 1, "y": 0}[axis]
    t = _activation_times(cfg, ionic, ax, t_max_ms)
    n = t.size
    a, b = int(0.2 * n), int(0.8 * n)
    if np.isnan(t[a]) or np.isnan(t[b]) or t[b] <= t[a]:
        return 0.0
    return (b - a) * cfg.dx_cm / (t[b] - t[a]) * 1e3


def calibrate_conductivities(cfg: TissueConfig, ionic: IonicModel | None = None, grid: int = 100,
                             rel_tol: float = 0.002, max_iter: int = 40) -> TissueConfig:
    """Bisect the intracellular conductivities until the planar-wave speeds match.

    The longitudinal target is ``cv_longitudinal_cm_s`` along x, the
    transversal target ``anisotropy_ratio`` times that along y. Each axis is
    tuned on its own because a planar wave along one axis does not feel the
    other conductivity.
    """
    ionic = ionic if ionic is not None else MitchellSchaeffer()
    test = replace(cfg, nx=grid, ny=grid)
    # stability: D_l + D_t <= dx^2 / (2 dt)
    d_budget = cfg.dx_cm ** 2 / (2.0 * cfg.dt_ms)
    r2 = cfg.anisotropy_ratio ** 2
    d_max_l = d_budget / (1.0 + r2) * 0.999

    def tune(axis: str, target: float, d_hi: float, other: float) -> float:
        def speed(d: float) -> float:
            sig = test.sigma_for(d)
            sig_o = test.sigma_for(other)
            c = replace(test, sigma_l_ms_cm=sig if axis == "x" else sig_o,
                        sigma_t_ms_cm=sig if axis == "y" else sig_o)
            return measure_conduction_velocity(c, ionic, axis)

        lo, hi = d_hi * 1e-3, d_hi
        if speed(hi) < target:
            raise InvalidParameterError(
                f"target speed {target:g} cm/s along {axis} is not reachable within the stability limit "
                f"(at most {speed(hi):.1f} cm/s with dt = {cfg.dt_ms} ms, dx = {cfg.dx_cm} cm)")
        for _ in range(max_iter):
            mid = np.sqrt(lo * hi)
            v = speed(mid)
            if abs(v - target) <= rel_tol * target:
                return mid
            lo, hi = (mid, hi) if v < target else (lo, mid)
        return np.sqrt(lo * hi)

    d_l = tune("x", cfg.cv_longitudinal_cm_s, d_max_l, d_max_l * r2)
    d_t = tune("y", cfg.cv_longitudinal_cm_s * cfg.anisotropy_ratio, min(d_budget * 0.999 - d_l, d_l), d_l)
    return replace(cfg, sigma_l_ms_cm=test.sigma_for(d_l), sigma_t_ms_cm=test.sigma_for(d_t))
