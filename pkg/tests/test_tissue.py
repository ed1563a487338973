from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from egmgraph.errors import (DimensionMismatchError, InvalidGeometryError, InvalidParameterError,
                             SimulationBlowUpError)
from egmgraph.graph import build_grid_graph, graph_spectrum
from egmgraph.sim import (Courtemanche, ElectrodeArraySpec, FociSchedule, MitchellSchaeffer, MonodomainSolver,
                          StreamingRecorder, TissueConfig, default_foci, electrode_potentials, lead_field,
                          make_ionic_model, measure_conduction_velocity, mix, qrs_waveform, resting_tissue,
                          run_af_episode, step_monodomain, synthesize_va)
from egmgraph.sim.tissue import disk_mask
from egmgraph.sim.ventricular import attenuation_map, grid_positions_mm, nominal_peak
from egmgraph.transforms import SignalPanel

# frozen from tests/oracles/derive_frozen.py
POTENTIAL_RATIO_H05_D2 = 4.1231056256176605
UNIFORM_JITTER_STD_10PCT = 0.057735026918962576


def small_tissue(n: int = 40) -> TissueConfig:
    return TissueConfig(nx=n, ny=n)


def test_defaults_and_geometry():
    cfg = TissueConfig()
    assert (cfg.nx, cfg.ny, cfg.dx_cm, cfg.dt_ms) == (200, 200, 0.01, 0.05)
    assert cfg.surface_to_volume_per_cm == pytest.approx(4000.0)
    assert cfg.dt_ms <= cfg.max_stable_dt_ms
    assert cfg.extent_mm == pytest.approx((20.0, 20.0))
    assert cfg.diffusivity_t / cfg.diffusivity_l == pytest.approx(cfg.sigma_t_ms_cm / cfg.sigma_l_ms_cm)


def test_unstable_step_rejected():
    with pytest.raises(InvalidParameterError, match="stability"):
        TissueConfig(dt_ms=1.0)
    with pytest.raises(InvalidParameterError):
        TissueConfig(nx=2)


def test_foci_validation():
    with pytest.raises(InvalidParameterError):
        FociSchedule(cycle_length_ms=40.0)
    with pytest.raises(InvalidParameterError):
        FociSchedule(sources=((1, 1),), phase_offsets_ms=(0.0, 1.0))
    with pytest.raises(InvalidParameterError):
        FociSchedule(sources=((50, 5),)).validate(small_tissue())
    f = default_foci()
    assert len(f) == 5 and all(0 <= x < 200 and 0 <= y < 200 for x, y in f)


def test_onsets_are_periodic_without_jitter():
    on = FociSchedule(sources=((1, 1),), phase_offsets_ms=(10.0,)).onsets(1000.0, 0)
    np.testing.assert_allclose(on[0], 10.0 + 160.0 * np.arange(7))
    jit = FociSchedule(sources=((1, 1),), phase_offsets_ms=(10.0,), cycle_jitter_ms=5.0).onsets(1000.0, 0)
    assert np.abs(jit[0] - (10.0 + 160.0 * np.arange(jit[0].size))).max() <= 5.0


def test_resting_tissue_stays_at_rest():
    cfg = small_tissue()
    solver = MonodomainSolver(cfg)
    state = resting_tissue(cfg, solver.ionic)
    zero = np.zeros((cfg.ny, cfg.nx))
    for _ in range(1000):
        solver.advance(state, zero)
    assert np.abs(state.V - solver.ionic.v_rest).max() < 0.01
    assert np.abs(solver.itm).max() == 0.0


def test_uniform_perturbation_has_no_diffusion_current():
    cfg = small_tissue()
    ms = MitchellSchaeffer()
    state = resting_tissue(cfg, ms)
    state.V[:] = -60.0
    solver = MonodomainSolver(cfg, ms)
    solver.advance(state, np.zeros((cfg.ny, cfg.nx)))
    assert np.abs(solver.itm).max() < 1e-12
    # purely ionic: every cell follows the same trajectory
    assert np.ptp(state.V) < 1e-12


def test_split_and_fused_paths_agree(rng):
    cfg = small_tissue(20)
    ms = MitchellSchaeffer()
    V0 = -80.0 + 100.0 * rng.uniform(0, 1, (20, 20))
    h0 = rng.uniform(0, 1, (1, 20, 20))
    stim = np.zeros((20, 20))
    stim[3:6, 3:6] = 30.0

    class Split(MitchellSchaeffer):
        pass

    a = resting_tissue(cfg, ms)
    b = resting_tissue(cfg, ms)
    a.V[:], a.S[:] = V0, h0
    b.V[:], b.S[:] = V0, h0
    fused, split = MonodomainSolver(cfg, ms), MonodomainSolver(cfg, Split())
    for _ in range(50):
        fused.advance(a, stim)
        split.advance(b, stim)
    np.testing.assert_allclose(a.V, b.V, atol=1e-10)
    np.testing.assert_allclose(fused.itm, split.itm, atol=1e-10)


def test_step_monodomain_is_pure():
    cfg = small_tissue(10)
    ms = MitchellSchaeffer()
    s0 = resting_tissue(cfg, ms)
    stim = np.zeros((10, 10))
    stim[5, 5] = 50.0
    s1 = step_monodomain(s0, ms, cfg, stim)
    assert s1.step == 1 and s0.step == 0
    assert s1.V[5, 5] > s0.V[5, 5]


def test_blow_up_detected():
    cfg = small_tissue(10)
    solver = MonodomainSolver(cfg)
    state = resting_tissue(cfg, solver.ionic)
    state.V[2, 2] = np.nan
    state.step = 17
    with pytest.raises(SimulationBlowUpError) as err:
        solver.check(state)
    assert err.value.step == 17


def test_conduction_velocity_and_anisotropy():
    cfg = TissueConfig(nx=100, ny=100)
    cv_x = measure_conduction_velocity(cfg, axis="x")
    cv_y = measure_conduction_velocity(cfg, axis="y")
    assert cv_x == pytest.approx(100.0, rel=0.02)
    assert cv_y / cv_x == pytest.approx(0.5, rel=0.15)


def test_point_stimulus_wavefront_speeds():
    """Activation isochrones from a central point: the long axis is about twice as fast."""
    cfg = TissueConfig(nx=100, ny=100)
    solver = MonodomainSolver(cfg)
    state = resting_tissue(cfg, solver.ionic)
    stim = np.zeros((100, 100))
    stim[disk_mask(cfg, 50, 50, 3)] = 100.0
    zero = np.zeros_like(stim)
    t_act = np.full((100, 100), np.nan)
    thr = solver.ionic.activation_threshold_mv
    for n in range(1200):
        solver.advance(state, stim if n < 20 else zero)
        hit = np.isnan(t_act) & (state.V >= thr)
        t_act[hit] = n * cfg.dt_ms
    # speed between 10 and 40 cells from the centre along each axis
    cv_x = 30 * cfg.dx_cm / (t_act[50, 90] - t_act[50, 60]) * 1e3
    cv_y = 15 * cfg.dx_cm / (t_act[80, 50] - t_act[65, 50]) * 1e3
    assert cv_x == pytest.approx(100.0, rel=0.15)
    assert cv_y / cv_x == pytest.approx(0.5, rel=0.15)


def _activation_counts(cfg: TissueConfig, foci: FociSchedule, duration_ms: float, seed: int) -> np.ndarray:
    solver = MonodomainSolver(cfg)
    state = resting_tissue(cfg, solver.ionic)
    onsets = foci.onsets(duration_ms, seed)
    masks = [disk_mask(cfg, x, y, foci.radius_cells) for x, y in foci.sources]
    thr = solver.ionic.activation_threshold_mv
    above = np.zeros((cfg.ny, cfg.nx), bool)
    count = np.zeros((cfg.ny, cfg.nx), int)
    stim = np.zeros((cfg.ny, cfg.nx))
    for n in range(int(duration_ms / cfg.dt_ms)):
        t = n * cfg.dt_ms
        stim[:] = 0.0
        for m, on in zip(masks, onsets):
            if np.any((on <= t) & (t < on + foci.stimulus_duration_ms)):
                stim[m] = foci.stimulus_amplitude
        solver.advance(state, stim)
        now = state.V >= thr
        count += now & ~above
        above = now
    return count


def test_single_focus_activation_count():
    cfg = small_tissue(40)
    foci = FociSchedule(sources=((5, 5),), phase_offsets_ms=(0.0,))
    counts = _activation_counts(cfg, foci, 2000.0, 0)
    expected = 2000.0 / foci.cycle_length_ms
    far = counts[30:, 30:]
    assert np.all(np.abs(far - expected) <= 1.0)


def test_quiescent_without_foci():
    cfg = small_tissue(30)
    ep = run_af_episode(cfg, FociSchedule(sources=()), 0.2, seed=3)
    assert not ep.itm.any()
    arr = ElectrodeArraySpec(rows=2, cols=2, pitch_mm=1.0)
    assert not electrode_potentials(ep.itm, arr, cfg).samples.any()


def test_episode_is_deterministic():
    cfg = small_tissue(30)
    foci = FociSchedule(sources=default_foci(30, 30), cycle_jitter_ms=10.0)
    a = run_af_episode(cfg, foci, 0.3, seed=5)
    b = run_af_episode(cfg, foci, 0.3, seed=5)
    assert np.array_equal(a.itm, b.itm)
    assert a.itm.shape == (300, 30, 30) and a.itm.any()
    c = run_af_episode(cfg, foci, 0.3, seed=6)
    assert not np.array_equal(a.itm, c.itm)


def test_streaming_matches_stored_trajectory():
    cfg = small_tissue(30)
    foci = FociSchedule(sources=((3, 3), (26, 20)))
    arr = ElectrodeArraySpec(rows=2, cols=3, pitch_mm=0.8)
    ep = run_af_episode(cfg, foci, 0.2, seed=1, warmup_s=0.05)
    rec = StreamingRecorder(arr, cfg, 200)
    run_af_episode(cfg, foci, 0.2, seed=1, warmup_s=0.05, sink=rec)
    np.testing.assert_allclose(rec.panel().samples, electrode_potentials(ep.itm, arr, cfg).samples, rtol=1e-12,
                               atol=1e-15)


def test_forward_potential_ratio():
    cfg = TissueConfig(nx=200, ny=200)
    # cell (100, 100) has its centre at 10.05 mm; electrode 0 sits right above it
    arr = ElectrodeArraySpec(rows=1, cols=2, pitch_mm=2.0, height_mm=0.5, center_mm=(11.05, 10.05))
    itm = np.zeros((1, 200, 200))
    itm[0, 100, 100] = 1.0
    phi = electrode_potentials(itm, arr, cfg).samples[:, 0]
    assert phi[0] / phi[1] == pytest.approx(POTENTIAL_RATIO_H05_D2, rel=1e-12)
    expected = cfg.dx_cm ** 2 / (4 * np.pi * cfg.sigma_e_ms_cm * 0.05)
    assert phi[0] == pytest.approx(expected, rel=1e-12)


def test_forward_sigma_scaling_and_errors(rng):
    cfg = small_tissue(20)
    arr = ElectrodeArraySpec(rows=2, cols=2, pitch_mm=0.5)
    itm = rng.normal(size=(4, 20, 20))
    a = electrode_potentials(itm, arr, cfg).samples
    b = electrode_potentials(itm, arr, replace(cfg, sigma_e_ms_cm=2 * cfg.sigma_e_ms_cm)).samples
    np.testing.assert_allclose(b, a / 2, rtol=1e-14)
    with pytest.raises(DimensionMismatchError):
        electrode_potentials(itm[:, :10], arr, cfg)
    with pytest.raises(InvalidGeometryError):
        lead_field(ElectrodeArraySpec(rows=1, cols=1, height_mm=0.0, center_mm=(0.05, 0.05)), cfg)
    with pytest.raises(InvalidGeometryError):
        lead_field(ElectrodeArraySpec(rows=8, cols=8, pitch_mm=2.0), cfg)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_forward_linearity(seed, a, b):
    cfg = TissueConfig(nx=12, ny=12)
    arr = ElectrodeArraySpec(rows=2, cols=2, pitch_mm=0.4)
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(2, 3, 12, 12))
    px = electrode_potentials(x, arr, cfg).samples
    py = electrode_potentials(y, arr, cfg).samples
    pz = electrode_potentials(a * x + b * y, arr, cfg).samples
    assert np.abs(pz - a * px - b * py).max() <= 1e-12 * max(1.0, np.abs(pz).max())


def test_ionic_model_factory():
    assert isinstance(make_ionic_model("mitchell-schaeffer"), MitchellSchaeffer)
    with pytest.raises(InvalidParameterError):
        make_ionic_model("luo-rudy")
    with pytest.raises(InvalidParameterError):
        MitchellSchaeffer(substeps=0)


def test_courtemanche_resting_state_is_fixed_point():
    m = Courtemanche()
    v0, s0 = m.resting_state()
    dv, ds = m.derivatives(np.array(v0), s0)
    assert abs(float(dv)) < 1e-6
    assert -90.0 < v0 < -70.0


def test_courtemanche_fires_action_potential():
    m = Courtemanche()
    v0, s0 = m.resting_state()
    V = np.array([v0])
    S = s0.reshape(-1, 1).copy()
    dt = 0.02
    peak = v0
    for n in range(int(300 / dt)):
        if n * dt < 2.0:
            V += dt * 20.0
        m.react(V, S, dt)
        peak = max(peak, float(V[0]))
    assert peak > 0.0
    assert abs(float(V[0]) - v0) < 10.0


def test_va_zero_jitter_beats_identical():
    va = synthesize_va(6, 90.0, 0.0, 0.0, seed=4)
    period = int(round(60e3 / 90.0))
    first = va.r_peaks[0]
    seg = va.train[first - 150:first + 150]
    for r in va.r_peaks[1:-1]:
        np.testing.assert_allclose(va.train[r - 150:r + 150], seg, atol=1e-12)
    assert np.all(np.diff(va.r_peaks) - period <= 1)


def test_va_amplitude_jitter_moments():
    va = synthesize_va(4000, 90.0, 0.1, 0.0, seed=11, amplitude_mv=1.0)
    assert np.all(np.abs(va.amplitudes - 1.0) <= 0.1)
    peaks = va.train[va.r_peaks] / nominal_peak()
    np.testing.assert_allclose(peaks, va.amplitudes, rtol=1e-9)
    assert np.std(va.amplitudes) == pytest.approx(UNIFORM_JITTER_STD_10PCT, rel=0.05)


def test_va_constant_map_is_graph_smooth():
    va = synthesize_va(5, 90.0, seed=2, channel_map=np.full(64, 0.7))
    spec = graph_spectrum(build_grid_graph(8, 8, 2.0))
    coeffs = spec.U.T @ va.panel().samples
    energy = np.sum(coeffs ** 2, axis=1)
    assert energy[1:].sum() < 1e-20 * energy[0]


def test_attenuation_map_is_smooth_and_normalized():
    g = attenuation_map(grid_positions_mm())
    assert g.mean() == pytest.approx(1.0)
    spec = graph_spectrum(build_grid_graph(8, 8, 2.0))
    c = spec.U.T @ g
    assert c[0] ** 2 / np.sum(c ** 2) > 0.99


def test_qrs_waveform_shape():
    t = np.linspace(-150, 150, 3001)
    q = qrs_waveform(t)
    assert np.argmax(q) == 1500
    assert q.min() < 0  # Q and S deflections
    wide = qrs_waveform(t, 1.2)
    assert np.max(wide) == pytest.approx(np.max(q), rel=1e-9)


def test_mix_examples(rng):
    a = SignalPanel(rng.normal(size=(3, 50)))
    v = SignalPanel(rng.normal(size=(3, 50)))
    z = SignalPanel(np.zeros((3, 50)))
    np.testing.assert_array_equal(mix(a, z).samples, a.samples)
    np.testing.assert_array_equal(mix(z, v).samples, v.samples)
    np.testing.assert_allclose(mix(a, v).samples - v.samples, a.samples, atol=1e-15)
    with pytest.raises(DimensionMismatchError):
        mix(a, SignalPanel(np.zeros((2, 50))))
