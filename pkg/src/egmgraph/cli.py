"""Command-line entry point: ``egm <subcommand> ...``.

Exit status is 0 on success, 1 for usage errors and 2 for data or
parameter errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as eio
from .analysis import (Level, band_average_variation, boundary_graph_frequency, gft_energy, gft_energy_db,
                       normalized_energy_db, quantize_levels, relevant_band)
from .errors import CorruptFileError, DimensionMismatchError, EGMError, InvalidConfigError
from .extraction import GAEParams, abs_baseline, detect_r_peaks, extract_atrial
from .graph import build_grid_graph, graph_spectrum
from .metrics import BeatAnnotations, detect_beats, evaluate
from .pipeline import (METHODS, ExtractionSettings, SimulationConfig, SyntheticSegment, cached_segment,
                       config_from_flat, config_to_flat, repro, segment_seed, simulate_segment, summarize, tune)
from .transforms import WINDOW_IDS, FrameConfig, SignalPanel, joint_transform, stft

log = logging.getLogger("egmgraph")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


class _JsonFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        doc = {"time": round(record.created, 3), "level": record.levelname, "logger": record.name,
               "message": record.getMessage()}
        if record.exc_info:
            doc["exc"] = self.formatException(record.exc_info)
        return json.dumps(doc)


def _setup_logging(json_logs: bool, verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if json_logs else logging.Formatter("%(levelname)s %(message)s"))
    root = logging.getLogger("egmgraph")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False
    # route library warnings (numba, numpy) through the same handler so --json-logs stays parseable
    logging.captureWarnings(True)
    warn_log = logging.getLogger("py.warnings")
    warn_log.handlers[:] = [handler]
    warn_log.propagate = False


def _apply_thread_cap() -> None:
    raw = os.environ.get("EGM_THREADS")
    if not raw:
        return
    try:
        n = int(raw)
    except ValueError as exc:
        raise InvalidConfigError(f"EGM_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise InvalidConfigError("EGM_THREADS must be at least 1")
    import numba
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _float_list(text: str) -> list[float]:
    """``a,b,c`` or ``start:stop:step`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ValueError
            n = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + i * step, 12) for i in range(max(n, 0))]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list or start:stop:step, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _frame_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frame-len", type=int, default=None, help="frame length in samples (default 0.1 s)")
    p.add_argument("--hop", type=int, default=None, help="hop in samples (default half a frame)")
    p.add_argument("--fft-bins", type=int, default=None)
    p.add_argument("--window", default="hann", choices=sorted(WINDOW_IDS))


def _frame_config(args, fs: float) -> FrameConfig:
    n = args.frame_len if args.frame_len is not None else int(round(0.1 * fs))
    return FrameConfig(n, args.hop, args.window, args.fft_bins)


def _load_graph_for(args, panel: SignalPanel, header: eio.RecordingHeader):
    if getattr(args, "graph", None):
        g = eio.load_graph(args.graph)
    else:
        g = build_grid_graph(header.rows, header.cols, header.pitch_mm, header.inactive)
    if g.vertex_count != panel.channel_count:
        raise DimensionMismatchError(
            f"graph has {g.vertex_count} vertices but the panel has {panel.channel_count} channels")
    return g


def _load_sim_config(args) -> SimulationConfig:
    cfg = config_from_flat(eio.load_flat_config(args.config)) if getattr(args, "config", None) else SimulationConfig()
    return cfg


# ---------------------------------------------------------------- subcommands

def cmd_graph(args) -> int:
    inactive = args.inactive or ()
    g = build_grid_graph(args.rows, args.cols, args.pitch, inactive)
    eio.save_graph(args.out, g)
    log.info("graph: %d vertices, %d edges -> %s", g.vertex_count, g.edge_count, args.out)
    if args.spectrum_out:
        eio.spectrum_to_csv(args.spectrum_out, graph_spectrum(g))
        log.info("spectrum -> %s", args.spectrum_out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    header, panel = eio.load_panel(args.input)
    fs = panel.sample_rate_hz
    mode = args.mode
    needs_graph = mode in ("gft", "joint", "boundary-k", "band-variation")
    spectrum = graph_spectrum(_load_graph_for(args, panel, header)) if needs_graph else None
    needs_frames = mode in ("stft", "joint", "levels", "bands", "band-variation")
    cfg = _frame_config(args, fs) if needs_frames else None

    if mode == "stft":
        t = stft(panel, cfg)
        if args.format == "binary":
            eio.save_tensor(args.out, t)
        else:
            eio.tensor_to_csv(args.out, t)
    elif mode == "joint":
        j = joint_transform(panel, cfg, spectrum)
        if args.format == "binary":
            eio.save_tensor(args.out, j)
        else:
            eio.tensor_to_csv(args.out, j)
    elif mode == "gft":
        e = gft_energy_db(panel, spectrum)
        eio.map_to_csv(args.out, e.values, "k", "t_s", panel.times_s(), "energy_db")
    elif mode in ("levels", "bands"):
        t = stft(panel, cfg)
        e = normalized_energy_db(t, args.channel)
        lm = quantize_levels(e, args.t1, args.t2)
        if mode == "levels":
            half = cfg.fft_bins // 2 + 1
            eio.map_to_csv(args.out, lm.labels[:, :half].astype(int), "tau", "f_hz", e.freqs_hz[:half], "level")
        else:
            doc = {"channel": args.channel, "thresholds_db": [args.t1, args.t2],
                   "L1_hz": list(relevant_band(lm, Level.L1)), "L2_hz": list(relevant_band(lm, Level.L2))}
            eio.write_json(args.out, doc)
    elif mode == "boundary-k":
        k = boundary_graph_frequency(gft_energy(panel, spectrum), args.fraction)
        eio.write_json(args.out, {"fraction": args.fraction, "boundary_k": k,
                                  "lambda": float(spectrum.lambdas[k])})
    elif mode == "band-variation":
        j = joint_transform(panel, cfg, spectrum)
        lo, hi = band_average_variation(j, args.split_hz)
        times = (np.arange(j.frame_count) * cfg.hop + cfg.frame_len / 2) / fs
        rows = [{"tau": m, "t_s": float(times[m]), "low": float(lo.values[m]), "high": float(hi.values[m])}
                for m in range(j.frame_count)]
        eio.rows_to_csv(args.out, rows, ["tau", "t_s", "low", "high"])
    log.info("analyze %s -> %s", mode, args.out)
    return EXIT_OK


def _r_peaks_from(args, panel: SignalPanel) -> np.ndarray:
    if getattr(args, "r_peaks", None):
        return _read_peaks(args.r_peaks)
    return detect_r_peaks(panel, args.peak_threshold, args.refractory_ms)


def _read_peaks(path: str) -> np.ndarray:
    text = Path(path).read_text().split()
    try:
        vals = [int(v) for v in text if not v.lower().startswith(("r_peak", "sample"))]
    except ValueError as exc:
        raise CorruptFileError(f"{path}: R-peak file must hold one integer per line") from exc
    return np.asarray(vals, dtype=np.int64)


def cmd_extract(args) -> int:
    p = GAEParams(args.c, args.mu, args.va_factor)
    header, panel = eio.load_panel(args.input)
    if args.method == "gae":
        g = _load_graph_for(args, panel, header)
        res = extract_atrial(panel, graph_spectrum(g), _frame_config(args, panel.sample_rate_hz), p)
        log.info("gae: %d frames flagged as ventricular", len(res.va_frames))
    else:
        peaks = _r_peaks_from(args, panel)
        hw = int(round(args.qrs_half_width_ms * panel.sample_rate_hz / 1000.0))
        res = abs_baseline(panel, peaks, hw)
        log.info("abs: %d beats", peaks.size)
    prov = dict(header.provenance, method=args.method, c=args.c, mu=args.mu, va_factor=args.va_factor)
    eio.save_panel(args.out_aa, res.atrial, replace(header, provenance=dict(prov, component="atrial")))
    if args.out_va:
        eio.save_panel(args.out_va, res.ventricular, replace(header, provenance=dict(prov, component="ventricular")))
    return EXIT_OK


def _write_segment(out_dir: Path, seg: SyntheticSegment) -> None:
    cfg = seg.config
    prov = {"seed": cfg.seed, "config_hash": cfg.digest()}
    a = cfg.array
    for name, panel in (("aa", seg.atrial), ("va", seg.ventricular), ("mixed", seg.mixed)):
        header = eio.RecordingHeader(panel.channel_count, panel.sample_rate_hz, panel.n_samples, a.rows, a.cols,
                                     a.pitch_mm, (), "synthetic", dict(prov, component=name))
        eio.save_panel(out_dir / f"{name}.bin", panel, header)
    with eio.atomic_write(out_dir / "r_peaks.txt", "w") as fh:
        fh.write("".join(f"{int(r)}\n" for r in seg.r_peaks))
    eio.save_flat_config(out_dir / "config.cfg", config_to_flat(cfg))


def cmd_simulate(args) -> int:
    cfg = _load_sim_config(args)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.duration is not None:
        cfg = replace(cfg, duration_s=args.duration)
    if args.acl is not None:
        cfg = cfg.with_acl(args.acl)
    if args.write_config:
        eio.save_flat_config(args.write_config, config_to_flat(cfg))
        log.info("config -> %s", args.write_config)
        if not args.out_dir:
            return EXIT_OK
    if not args.out_dir:
        raise UsageError("simulate: --out-dir is required unless only --write-config is given")
    t0 = time.perf_counter()
    seg = simulate_segment(cfg)
    _write_segment(Path(args.out_dir), seg)
    log.info("simulated %.1f s in %.1f s -> %s", cfg.duration_s, time.perf_counter() - t0, args.out_dir)
    return EXIT_OK


def cmd_metrics(args) -> int:
    _, est = eio.load_panel(args.estimate)
    reference = eio.load_panel(args.reference)[1] if args.reference else None
    mixed = eio.load_panel(args.mixed)[1] if args.mixed else None
    wanted = tuple(m.strip() for m in args.metrics.split(",") if m.strip())
    unknown = set(wanted) - {"nmse", "cc", "vdr", "vr"}
    if unknown:
        raise UsageError(f"metrics: unknown metric(s) {sorted(unknown)}")
    if {"nmse", "cc"} & set(wanted) and reference is None:
        raise UsageError("metrics: nmse and cc need --reference")
    if "vdr" in wanted and mixed is None:
        raise UsageError("metrics: vdr needs --mixed")
    ann = None
    if {"vdr", "vr"} & set(wanted):
        hw = int(round(args.qrs_half_width_ms * est.sample_rate_hz / 1000.0))
        if args.r_peaks:
            ann = BeatAnnotations.from_peaks(_read_peaks(args.r_peaks), est.channel_count, est.n_samples, hw)
        else:
            src = mixed if mixed is not None else est
            ann = detect_beats(src, args.peak_threshold, args.refractory_ms, args.qrs_half_width_ms)
    report = evaluate(args.method, est, reference=reference, mixed=mixed, ann=ann, metrics=wanted)
    doc = report.to_dict()
    if args.out:
        eio.write_json(args.out, doc)
    else:
        print(json.dumps({k: doc[k] for k in ("method", "nmse", "cc", "vdr", "vr")}))
    for w in report.warnings:
        log.warning(w)
    return EXIT_OK


def cmd_tune(args) -> int:
    frame = FrameConfig(args.frame_len or 100, args.hop)
    if args.input:
        if not args.oracle:
            raise UsageError("tune: --input needs --oracle (ground-truth atrial panel)")
        _, mixed = eio.load_panel(args.input)
        _, oracle = eio.load_panel(args.oracle)
        base = SimulationConfig()
        seg = SyntheticSegment(oracle, SignalPanel(mixed.samples - oracle.samples, mixed.sample_rate_hz), mixed,
                               np.zeros(0, dtype=np.int64), base)
        segments = [seg]
    else:
        base = _load_sim_config(args)
        segments = [cached_segment(replace(base.with_acl(args.acl), seed=segment_seed(args.seed, args.acl, s)),
                                   args.cache_dir) for s in range(args.segments)]
    rows = tune(segments, args.c_range, args.mu_range, args.va_factor, frame)
    if not rows:
        raise InvalidConfigError("every (c, mu) pair is infeasible (mu * c >= 1)")
    eio.rows_to_csv(args.out, rows, ["c", "mu", "nmse"])
    log.info("best c=%g mu=%g nmse=%.4g -> %s", rows[0]["c"], rows[0]["mu"], rows[0]["nmse"], args.out)
    return EXIT_OK


def cmd_repro(args) -> int:
    base = _load_sim_config(args)
    if args.duration is not None:
        base = replace(base, duration_s=args.duration)
    settings = ExtractionSettings(GAEParams(args.c, args.mu, args.va_factor))
    rows = repro(base, args.acl, args.segments, args.seed, settings, args.cache_dir)
    eio.rows_to_csv(args.out, rows, ["acl_ms", "segment", "method", "nmse", "cc", "vdr", "vr"])
    summary = summarize(rows)
    if args.summary:
        eio.write_json(args.summary, summary)
    for m, vals in summary.items():
        log.info("median %s: %s", m, ", ".join(f"{k}={v:.4g}" for k, v in vals.items()))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="egm", description="Graph-time spectral analysis and atrial activity extraction.")
    parser.add_argument("--json-logs", action="store_true", help="emit diagnostics as line-delimited JSON")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("graph", help="build an electrode grid graph")
    p.add_argument("--rows", type=int, default=8)
    p.add_argument("--cols", type=int, default=8)
    p.add_argument("--pitch", type=float, default=2.0, help="inter-electrode spacing in mm")
    p.add_argument("--inactive", type=_int_list, default=(), help="comma-separated grid indices to drop")
    p.add_argument("--out", required=True, help="graph JSON")
    p.add_argument("--spectrum-out", help="also write the eigenbasis as CSV")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("analyze", help="energy maps, levels, bands and graph variation")
    p.add_argument("--mode", required=True,
                   choices=["stft", "gft", "joint", "levels", "bands", "boundary-k", "band-variation"])
    p.add_argument("--input", required=True)
    p.add_argument("--graph", help="graph JSON (default: grid from the panel header)")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "binary"], default="csv", help="for stft and joint modes")
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--t1", type=float, default=-1.0)
    p.add_argument("--t2", type=float, default=-6.0)
    p.add_argument("--fraction", type=float, default=0.9, help="energy fraction for boundary-k")
    p.add_argument("--split-hz", type=float, default=100.0)
    _frame_args(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("extract", help="separate atrial from ventricular activity")
    p.add_argument("--input", required=True)
    p.add_argument("--graph")
    p.add_argument("--method", choices=list(METHODS), default="gae")
    p.add_argument("--c", type=float, default=0.14)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--va-factor", type=float, default=4.0)
    p.add_argument("--r-peaks", help="file with one R-peak sample index per line (abs)")
    p.add_argument("--peak-threshold", type=float, default=0.6)
    p.add_argument("--refractory-ms", type=float, default=200.0)
    p.add_argument("--qrs-half-width-ms", type=float, default=50.0)
    p.add_argument("--out-aa", required=True)
    p.add_argument("--out-va")
    _frame_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("simulate", help="paced tissue episode plus ventricular activity")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--duration", type=float, help="seconds")
    p.add_argument("--acl", type=float, help="atrial cycle length in ms")
    p.add_argument("--out-dir")
    p.add_argument("--write-config", help="write the effective configuration to this file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="score an atrial estimate")
    p.add_argument("--estimate", required=True)
    p.add_argument("--reference", help="ground-truth atrial panel (nmse, cc)")
    p.add_argument("--mixed", help="mixed panel (vdr, beat detection)")
    p.add_argument("--metrics", default="nmse,cc,vdr,vr")
    p.add_argument("--method", default="estimate", help="label stored in the report")
    p.add_argument("--r-peaks")
    p.add_argument("--peak-threshold", type=float, default=0.6)
    p.add_argument("--refractory-ms", type=float, default=200.0)
    p.add_argument("--qrs-half-width-ms", type=float, default=50.0)
    p.add_argument("--out", help="JSON report (default: summary on stdout)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("tune", help="grid search of c and mu by NMSE")
    p.add_argument("--c-range", type=_float_list, default=_float_list("0.02:0.3:0.02"))
    p.add_argument("--mu-range", type=_float_list, default=_float_list("0.5:3:0.5"))
    p.add_argument("--va-factor", type=float, default=4.0)
    p.add_argument("--input", help="mixed panel; requires --oracle")
    p.add_argument("--oracle", help="ground-truth atrial panel")
    p.add_argument("--config")
    p.add_argument("--acl", type=float, default=160.0)
    p.add_argument("--segments", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cache-dir")
    p.add_argument("--frame-len", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("repro", help="synthetic comparison of the extraction methods")
    p.add_argument("--acl", type=float, nargs="+", default=[160.0, 180.0])
    p.add_argument("--segments", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, help="seconds per segment (default 10)")
    p.add_argument("--config")
    p.add_argument("--c", type=float, default=0.14)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--va-factor", type=float, default=4.0)
    p.add_argument("--cache-dir")
    p.add_argument("--out", required=True, help="per-segment metrics CSV")
    p.add_argument("--summary", help="JSON with per-method medians")
    p.set_defaults(func=cmd_repro)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    _setup_logging(args.json_logs, args.verbose)
    try:
        _apply_thread_cap()
        return args.func(args)
    except UsageError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (EGMError, OSError, ValueError) as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
