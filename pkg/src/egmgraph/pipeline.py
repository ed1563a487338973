"""Synthetic experiment orchestration: simulate segments, run the extractors, score them."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidConfigError, InvalidParameterError
from .extraction import GAEParams, abs_baseline, extract_atrial
from .graph import LaplacianSpectrum, build_grid_graph, graph_spectrum
from .metrics import BeatAnnotations, MetricReport, evaluate
from .sim.config import ElectrodeArraySpec, FociSchedule, TissueConfig
from .sim.forward import StreamingRecorder
from .sim.ionic import make_ionic_model
from .sim.tissue import run_af_episode
from .sim.ventricular import attenuation_map, grid_positions_mm, mix, nominal_peak, synthesize_va
from .transforms import FrameConfig, SignalPanel

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
METHODS = ("abs", "gae")


@dataclass(frozen=True)
class SimulationConfig:
    """Everything that determines one synthetic segment.

    The ventricular train is scaled so that its nominal R-peak equals
    ``va_amplitude_ratio`` times the 99.9th percentile of ``|AA|`` over the
    panel.
    """

    tissue: TissueConfig = field(default_factory=TissueConfig)
    foci: FociSchedule = field(default_factory=lambda: FociSchedule(cycle_jitter_ms=15.0))
    array: ElectrodeArraySpec = field(default_factory=ElectrodeArraySpec)
    ionic: str = "mitchell-schaeffer"
    duration_s: float = 10.0
    warmup_s: float = 1.0
    seed: int = 0
    sample_rate_hz: float = 1000.0
    va_rate_bpm: float = 90.0
    va_amplitude_ratio: float = 1.0
    va_amplitude_jitter: float = 0.1
    va_width_jitter: float = 0.1

    def __post_init__(self) -> None:
        if not self.duration_s > 0 or self.warmup_s < 0:
            raise InvalidParameterError("duration must be positive and warm-up non-negative")
        if not self.va_amplitude_ratio >= 0:
            raise InvalidParameterError("va_amplitude_ratio must be non-negative")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * self.sample_rate_hz))

    def with_acl(self, acl_ms: float) -> "SimulationConfig":
        return replace(self, foci=replace(self.foci, cycle_length_ms=float(acl_ms)))

    def digest(self) -> str:
        """Stable hash of the flattened configuration."""
        blob = json.dumps(config_to_flat(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------- flat config

def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ";".join(",".join(_fmt_value(x) for x in item) for item in v)
        return ",".join(_fmt_value(x) for x in v)
    return str(v)


def config_to_flat(cfg: SimulationConfig) -> dict[str, str]:
    """``section.key -> text`` mapping; nested tuples use ``;`` between items and ``,`` inside."""
    out = {"config_version": str(CONFIG_VERSION)}
    for name in ("tissue", "foci", "array"):
        for f in fields(getattr(cfg, name)):
            out[f"{name}.{f.name}"] = _fmt_value(getattr(getattr(cfg, name), f.name))
    for f in fields(cfg):
        if f.name not in ("tissue", "foci", "array"):
            out[f.name] = _fmt_value(getattr(cfg, f.name))
    return out


def _parse_scalar(text: str, kind: type):
    if kind is bool:
        if text.lower() not in ("true", "false"):
            raise ValueError(text)
        return text.lower() == "true"
    return kind(text)


_NESTED = {
    ("foci", "sources"): "pairs",
    ("foci", "phase_offsets_ms"): "floats",
    ("array", "center_mm"): "floats",
}


def config_from_flat(flat: dict[str, str]) -> SimulationConfig:
    """Inverse of ``config_to_flat``; missing keys keep their defaults."""
    version = flat.get("config_version")
    if version is None:
        raise InvalidConfigError("config_version key is missing")
    if version.strip() != str(CONFIG_VERSION):
        raise InvalidConfigError(f"unsupported config_version {version!r}")
    base = SimulationConfig()
    parts: dict[str, dict] = {"tissue": {}, "foci": {}, "array": {}, "": {}}
    types = {
        "tissue": {f.name: type(getattr(base.tissue, f.name)) for f in fields(base.tissue)},
        "foci": {f.name: type(getattr(base.foci, f.name)) for f in fields(base.foci)},
        "array": {f.name: type(getattr(base.array, f.name)) for f in fields(base.array)},
        "": {f.name: type(getattr(base, f.name)) for f in fields(base)
             if f.name not in ("tissue", "foci", "array")},
    }
    for key, text in flat.items():
        if key == "config_version":
            continue
        section, _, name = key.rpartition(".")
        if section not in types or name not in types[section]:
            raise InvalidConfigError(f"unknown config key {key!r}")
        text = text.strip()
        try:
            kind = _NESTED.get((section, name))
            if text.lower() == "none":
                value = None
            elif kind == "pairs":
                value = tuple(tuple(int(v) for v in item.split(",")) for item in text.split(";") if item.strip())
            elif kind == "floats":
                value = tuple(float(v) for v in text.split(","))
            else:
                value = _parse_scalar(text, types[section][name])
        except ValueError as exc:
            raise InvalidConfigError(f"bad value for {key!r}: {text!r}") from exc
        parts[section][name] = value
    try:
        return replace(base, tissue=replace(base.tissue, **parts["tissue"]),
                       foci=replace(base.foci, **parts["foci"]),
                       array=replace(base.array, **parts["array"]), **parts[""])
    except InvalidParameterError as exc:
        raise InvalidConfigError(str(exc)) from exc


# ---------------------------------------------------------------- simulation

@dataclass(frozen=True, eq=False)
class SyntheticSegment:
    atrial: SignalPanel
    ventricular: SignalPanel
    mixed: SignalPanel
    r_peaks: np.ndarray
    config: SimulationConfig

    def annotations(self, half_width_ms: float = 50.0) -> BeatAnnotations:
        hw = int(round(half_width_ms * self.mixed.sample_rate_hz / 1000.0))
        return BeatAnnotations.from_peaks(self.r_peaks, self.mixed.channel_count, self.mixed.n_samples, hw)


def _sub_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def simulate_atrial(cfg: SimulationConfig, seed: int | None = None) -> SignalPanel:
    """Electrode potentials of one paced episode, streamed through the lead field."""
    ionic = make_ionic_model(cfg.ionic)
    rec = StreamingRecorder(cfg.array, cfg.tissue, cfg.n_samples)
    run_af_episode(cfg.tissue, cfg.foci, cfg.duration_s, cfg.seed if seed is None else seed, ionic,
                   output_rate_hz=cfg.sample_rate_hz, warmup_s=cfg.warmup_s, sink=rec)
    return rec.panel(cfg.sample_rate_hz)


def add_ventricular(atrial: SignalPanel, cfg: SimulationConfig, seed: int) -> tuple[SignalPanel, np.ndarray]:
    """Ventricular panel matched to ``atrial`` and its R-peak samples."""
    fs = atrial.sample_rate_hz
    period_ms = 60e3 / cfg.va_rate_bpm
    rng = np.random.default_rng(seed)
    first = rng.uniform(0.25, 0.75) * period_ms
    n_beats = int(np.ceil(atrial.n_samples * 1e3 / fs / period_ms)) + 1
    ref = float(np.percentile(np.abs(atrial.samples), 99.9))
    amp = cfg.va_amplitude_ratio * ref / nominal_peak() if ref > 0 else cfg.va_amplitude_ratio
    gains = attenuation_map(grid_positions_mm(cfg.array.rows, cfg.array.cols, cfg.array.pitch_mm))
    va = synthesize_va(n_beats, cfg.va_rate_bpm, cfg.va_amplitude_jitter, cfg.va_width_jitter,
                       seed=int(rng.integers(2 ** 31)), n_samples=atrial.n_samples, sample_rate_hz=fs,
                       amplitude_mv=amp, channel_map=gains, first_beat_ms=first)
    return va.panel(), va.r_peaks


def simulate_segment(cfg: SimulationConfig) -> SyntheticSegment:
    s_foci, s_va = _sub_seeds(cfg.seed, 2)
    atrial = simulate_atrial(cfg, s_foci)
    ventricular, peaks = add_ventricular(atrial, cfg, s_va)
    return SyntheticSegment(atrial, ventricular, mix(atrial, ventricular), peaks, cfg)


def save_segment(path: str | Path, seg: SyntheticSegment) -> None:
    from .io import atomic_write
    flat = json.dumps(config_to_flat(seg.config), sort_keys=True)
    with atomic_write(path, "wb") as fh:
        np.savez(fh, atrial=seg.atrial.samples, ventricular=seg.ventricular.samples,
                 r_peaks=seg.r_peaks, sample_rate_hz=seg.mixed.sample_rate_hz, config=np.array(flat))


def load_segment(path: str | Path) -> SyntheticSegment:
    with np.load(path) as z:
        fs = float(z["sample_rate_hz"])
        a = SignalPanel(z["atrial"], fs)
        v = SignalPanel(z["ventricular"], fs)
        cfg = config_from_flat(json.loads(str(z["config"])))
        return SyntheticSegment(a, v, mix(a, v), z["r_peaks"].astype(np.int64), cfg)


def cached_segment(cfg: SimulationConfig, cache_dir: str | Path | None) -> SyntheticSegment:
    """``simulate_segment`` memoised on disk by configuration digest."""
    if cache_dir is None:
        return simulate_segment(cfg)
    path = Path(cache_dir) / f"segment-{cfg.digest()}.npz"
    if path.exists():
        return load_segment(path)
    seg = simulate_segment(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_segment(path, seg)
    return seg


# ---------------------------------------------------------------- evaluation

@dataclass(frozen=True)
class ExtractionSettings:
    gae: GAEParams = field(default_factory=GAEParams)
    frame: FrameConfig = field(default_factory=FrameConfig)
    qrs_half_width_ms: float = 50.0


def separate(method: str, panel: SignalPanel, spectrum: LaplacianSpectrum, r_peaks: np.ndarray,
             settings: ExtractionSettings = ExtractionSettings()) -> SignalPanel:
    """Atrial estimate of ``panel`` by ``method``."""
    if method == "gae":
        return extract_atrial(panel, spectrum, settings.frame, settings.gae).atrial
    if method == "abs":
        hw = int(round(settings.qrs_half_width_ms * panel.sample_rate_hz / 1000.0))
        return abs_baseline(panel, r_peaks, hw).atrial
    raise InvalidParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def evaluate_methods(seg: SyntheticSegment, spectrum: LaplacianSpectrum | None = None,
                     settings: ExtractionSettings = ExtractionSettings(),
                     methods: Sequence[str] = METHODS) -> list[MetricReport]:
    if spectrum is None:
        spectrum = graph_spectrum(build_grid_graph(seg.config.array.rows, seg.config.array.cols,
                                                   seg.config.array.pitch_mm))
    ann = seg.annotations(settings.qrs_half_width_ms)
    reports = []
    for m in methods:
        est = separate(m, seg.mixed, spectrum, seg.r_peaks, settings)
        reports.append(evaluate(m, est, reference=seg.atrial, mixed=seg.mixed, ann=ann))
    return reports


def segment_seed(seed: int, acl_ms: float, index: int) -> int:
    return int(np.random.SeedSequence([int(seed), int(round(acl_ms)), int(index)]).generate_state(1)[0])


def repro(base: SimulationConfig = SimulationConfig(), acls: Iterable[float] = (160.0, 180.0),
          segments: int = 6, seed: int = 0, settings: ExtractionSettings = ExtractionSettings(),
          cache_dir: str | Path | None = None) -> list[dict]:
    """Score every method on ``segments`` synthetic segments per cycle length.

    Returns one row per (acl, segment, method) with the four metrics.
    """
    spectrum = graph_spectrum(build_grid_graph(base.array.rows, base.array.cols, base.array.pitch_mm))
    rows = []
    for acl in acls:
        for s in range(segments):
            cfg = replace(base.with_acl(acl), seed=segment_seed(seed, acl, s))
            log.info("segment acl=%g index=%d seed=%d", acl, s, cfg.seed)
            seg = cached_segment(cfg, cache_dir)
            for rep in evaluate_methods(seg, spectrum, settings):
                rows.append({"acl_ms": float(acl), "segment": s, "method": rep.method, "nmse": rep.nmse,
                             "cc": rep.cc, "vdr": rep.vdr, "vr": rep.vr})
    return rows


def summarize(rows: list[dict], metrics: Sequence[str] = ("nmse", "cc", "vdr", "vr")) -> dict[str, dict[str, float]]:
    """Median of every metric per method."""
    out: dict[str, dict[str, float]] = {}
    for m in sorted({r["method"] for r in rows}):
        sel = [r for r in rows if r["method"] == m]
        out[m] = {k: float(np.median([r[k] for r in sel])) for k in metrics}
    return out


def tune(segments: Sequence[SyntheticSegment], c_values: Sequence[float], mu_values: Sequence[float],
         va_threshold_factor: float = 4.0, frame: FrameConfig = FrameConfig()) -> list[dict]:
    """Mean NMSE of the graph extractor over a (c, mu) grid; infeasible pairs are skipped."""
    if not segments:
        raise InvalidParameterError("tuning needs at least one segment")
    a0 = segments[0].config.array
    spectrum = graph_spectrum(build_grid_graph(a0.rows, a0.cols, a0.pitch_mm))
    rows = []
    for c in c_values:
        for mu in mu_values:
            if mu * c >= 1.0:
                continue
            p = GAEParams(float(c), float(mu), va_threshold_factor)
            scores = []
            for seg in segments:
                est = extract_atrial(seg.mixed, spectrum, frame, p).atrial
                scores.append(evaluate("gae", est, reference=seg.atrial, metrics=("nmse",)).nmse)
            rows.append({"c": float(c), "mu": float(mu), "nmse": float(np.mean(scores))})
    rows.sort(key=lambda r: (r["nmse"], r["c"], r["mu"]))
    return rows
