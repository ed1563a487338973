import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from egmgraph.errors import DimensionMismatchError, InsufficientBeatsError, UndefinedReferenceError
from egmgraph.metrics import (BeatAnnotations, MetricWarning, cc, cc_per_channel, detect_beats, evaluate, nmse,
                              vdr, vr, vr_per_channel)
from egmgraph.sim import synthesize_va
from egmgraph.transforms import SignalPanel

# frozen from tests/oracles/derive_frozen.py
VR_CONSTANT_HALF_HW50 = 5.0249378105604451


def P(x) -> SignalPanel:
    return SignalPanel(np.asarray(x, dtype=float))


def test_nmse_examples(rng):
    a = P(rng.normal(size=(4, 300)))
    assert nmse(a, a) == 0.0
    assert nmse(a, P(np.zeros((4, 300)))) == pytest.approx(1.0, abs=1e-15)
    assert nmse(a, P(2 * a.samples)) == pytest.approx(1.0, abs=1e-15)


def test_nmse_zero_channels(rng):
    x = rng.normal(size=(3, 100))
    x[1] = 0.0
    with pytest.warns(MetricWarning):
        assert nmse(P(x), P(x)) == 0.0
    with pytest.raises(UndefinedReferenceError):
        nmse(P(np.zeros((2, 10))), P(np.ones((2, 10))))
    with pytest.raises(DimensionMismatchError):
        nmse(P(x), P(x[:2]))


def test_cc_examples(rng):
    a = P(rng.normal(size=(3, 200)))
    assert cc(a, a) == pytest.approx(1.0, abs=1e-15)
    assert cc(a, P(-a.samples)) == pytest.approx(-1.0, abs=1e-15)
    assert cc(a, P(a.samples + 7.5)) == pytest.approx(1.0, abs=1e-12)
    x = a.samples.copy()
    x[0] = 3.0
    with pytest.warns(MetricWarning):
        cc(P(x), a)


def test_detect_beats_recovers_schedule():
    va = synthesize_va(12, 90.0, 0.1, 0.1, seed=9, channel_map=np.array([1.0, 0.8, 1.2]))
    ann = detect_beats(va.panel())
    assert ann.channel_count == 3
    for pk in ann.r_peaks:
        assert pk.size == va.r_peaks.size
        assert np.abs(pk - va.r_peaks).max() <= 2
    ref = detect_beats(va.panel(), reference=va.train)
    assert all(np.array_equal(p, ref.r_peaks[0]) for p in ref.r_peaks)


def test_detect_beats_edge_cases():
    ann = detect_beats(P(np.zeros((2, 500))))
    assert list(ann.beat_counts) == [0, 0]
    x = np.zeros(1000)
    x[400] = 1.0
    assert list(detect_beats(P(x)).beat_counts) == [1]


def test_intervals_clip_at_neighbours():
    ann = BeatAnnotations.from_peaks([100, 160], 1, 300, 50)
    np.testing.assert_array_equal(ann.intervals[0], [[50, 130], [131, 210]])
    edge = BeatAnnotations.from_peaks([10, 295], 1, 300, 50)
    np.testing.assert_array_equal(edge.intervals[0], [[0, 60], [245, 299]])
    with pytest.raises(DimensionMismatchError):
        BeatAnnotations.from_peaks([[1], [2]], 3, 100)
    with pytest.raises(ValueError):
        BeatAnnotations((np.array([5]),), (np.array([[6, 9]]),))


def test_vdr_examples(rng):
    y = P(rng.normal(size=(2, 600)) + 5)
    ann = BeatAnnotations.from_peaks([100, 300, 500], 2, 600)
    assert vdr(y, y, ann) == 0.0
    assert vdr(y, P(y.samples / 10), ann) == pytest.approx(10.0, abs=1e-12)
    with pytest.warns(MetricWarning):
        assert vdr(y, P(np.zeros((2, 600))), ann) == pytest.approx(120.0, abs=1e-9)
    with pytest.raises(InsufficientBeatsError):
        vdr(y, y, BeatAnnotations.from_peaks([], 2, 600))


def test_vr_examples(rng):
    ann = BeatAnnotations.from_peaks([200, 500], 1, 800, 50)
    x = rng.normal(size=800)
    for b, e in ann.intervals[0]:
        x[b:e + 1] = 0.0
    assert vr(P(x), ann) == 0.0
    assert vr(P(np.full(800, 0.5)), ann) == pytest.approx(VR_CONSTANT_HALF_HW50, rel=1e-14)
    assert vr(P(np.zeros(800)), ann) == 0.0
    with pytest.raises(InsufficientBeatsError):
        vr(P(x), BeatAnnotations.from_peaks([], 1, 800))


def test_evaluate_report(rng):
    a = P(rng.normal(size=(3, 500)))
    est = P(a.samples + 0.1 * rng.normal(size=(3, 500)))
    ann = BeatAnnotations.from_peaks([100, 350], 3, 500)
    r = evaluate("gae", est, reference=a, mixed=P(a.samples * 3), ann=ann)
    d = r.to_dict()
    assert set(d) == {"method", "nmse", "cc", "vdr", "vr", "per_channel", "warnings"}
    assert len(d["per_channel"]) == 3 and d["warnings"] == []
    json.dumps(d)
    only = evaluate("abs", est, ann=ann, metrics=("vr",))
    assert only.nmse is None and only.vdr is None and only.vr is not None


def test_evaluate_collects_each_warning_once(rng):
    a = rng.normal(size=(3, 200))
    a[0] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        r = evaluate("x", P(a), reference=P(a))
    assert len(r.warnings) == 2  # one for nmse, one for cc
    assert r.per_channel[0]["nmse"] is None


panels = arrays(np.float64, (3, 64), elements=st.floats(-10, 10, allow_nan=False))


def _nonconstant(x: np.ndarray) -> bool:
    return bool(np.all(np.ptp(x, axis=1) > 1e-3))


@settings(max_examples=60, deadline=None)
@given(panels, panels, st.permutations(range(3)))
def test_permutation_invariance(x, y, perm):
    if not (_nonconstant(x) and _nonconstant(y)):
        return
    p = list(perm)
    assert nmse(P(x[p]), P(y[p])) == pytest.approx(nmse(P(x), P(y)), rel=1e-12)
    assert cc(P(x[p]), P(y[p])) == pytest.approx(cc(P(x), P(y)), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(panels, st.floats(0.01, 100), st.floats(-100, 100))
def test_cc_affine_invariance(x, a, b):
    if not _nonconstant(x):
        return
    np.testing.assert_allclose(cc_per_channel(P(x), P(a * x + b)), 1.0, atol=1e-9)


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (2, 400), elements=st.floats(-10, 10, allow_nan=False)), st.floats(0.01, 100))
def test_vr_homogeneous_degree_one(x, a):
    ann = BeatAnnotations.from_peaks([80, 200, 330], 2, 400)
    base = vr_per_channel(P(x), ann)
    scaled = vr_per_channel(P(a * x), ann)
    np.testing.assert_allclose(scaled, a * base, rtol=1e-10, atol=1e-12)
