"""File formats: binary and CSV panels, tensor containers, graph JSON, flat config files."""
from __future__ import annotations

import contextlib
import csv
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import CorruptFileError, DimensionMismatchError, InvalidConfigError, UnsupportedVersionError
from .graph import ElectrodeGraph, LaplacianSpectrum
from .transforms import WINDOW_IDS, FrameConfig, JointSpectrum, SignalPanel, STFTTensor

PANEL_MAGIC = b"EGMP"
PANEL_VERSION = 1
# magic, version, label, K, T, rate, rows, cols, pitch, n_inactive, meta_len, data_offset
_PANEL_HEADER = struct.Struct("<4sHHIQdIIdIIQ")
PANEL_HEADER_SIZE = 64

TENSOR_MAGIC = b"EGMT"
TENSOR_VERSION = 1
# magic, K, M, F, sample rate, hop, window id, version, kind (0 stft, 1 joint)
_TENSOR_HEADER = struct.Struct("<4sIIIdIHBB")
TENSOR_HEADER_SIZE = 32

LABELS = ("synthetic", "sinus-rhythm", "atrial-fibrillation")
_WINDOW_NAMES = {v: k for k, v in WINDOW_IDS.items()}


@contextlib.contextmanager
def atomic_write(path: str | Path, mode: str = "w") -> Iterator:
    """Write to a temporary sibling and rename over ``path`` on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode, **({} if "b" in mode else {"newline": "", "encoding": "utf-8"})) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class RecordingHeader:
    """Layout and provenance stored next to a panel."""

    channel_count: int
    sample_rate_hz: float
    duration_samples: int
    rows: int
    cols: int
    pitch_mm: float = 2.0
    inactive: tuple[int, ...] = ()
    label: str = "synthetic"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise InvalidConfigError(f"label must be one of {LABELS}, got {self.label!r}")
        if self.channel_count != self.rows * self.cols - len(set(self.inactive)):
            raise DimensionMismatchError(
                f"{self.channel_count} channels do not fit a {self.rows}x{self.cols} layout "
                f"with {len(set(self.inactive))} inactive electrodes")

    @classmethod
    def for_panel(cls, panel: SignalPanel, rows: int | None = None, cols: int | None = None,
                  pitch_mm: float = 2.0, inactive: tuple[int, ...] = (), label: str = "synthetic",
                  provenance: dict | None = None) -> "RecordingHeader":
        """Default layout is a single row of electrodes."""
        K = panel.channel_count
        if rows is None and cols is None:
            rows, cols = 1, K + len(inactive)
        elif rows is None:
            rows = (K + len(inactive)) // cols
        elif cols is None:
            cols = (K + len(inactive)) // rows
        return cls(K, panel.sample_rate_hz, panel.n_samples, int(rows), int(cols), float(pitch_mm),
                   tuple(int(i) for i in inactive), label, dict(provenance or {}))

    @classmethod
    def for_graph(cls, panel: SignalPanel, g: ElectrodeGraph, label: str = "synthetic",
                  provenance: dict | None = None) -> "RecordingHeader":
        return cls(panel.channel_count, panel.sample_rate_hz, panel.n_samples, g.rows, g.cols, g.pitch_mm,
                   g.inactive, label, dict(provenance or {}))


# ---------------------------------------------------------------- panels

def _panel_bytes(header: RecordingHeader, panel: SignalPanel) -> bytes:
    inactive = np.asarray(header.inactive, dtype="<u4").tobytes()
    meta = json.dumps(header.provenance, sort_keys=True).encode()
    offset = PANEL_HEADER_SIZE + len(inactive) + len(meta)
    head = _PANEL_HEADER.pack(PANEL_MAGIC, PANEL_VERSION, LABELS.index(header.label), header.channel_count,
                              header.duration_samples, header.sample_rate_hz, header.rows, header.cols,
                              header.pitch_mm, len(header.inactive), len(meta), offset)
    head = head.ljust(PANEL_HEADER_SIZE, b"\0")
    return head + inactive + meta + np.ascontiguousarray(panel.samples, dtype="<f8").tobytes()


def save_panel(path: str | Path, panel: SignalPanel, header: RecordingHeader | None = None) -> None:
    """Binary unless ``path`` ends in ``.csv``."""
    header = header if header is not None else RecordingHeader.for_panel(panel)
    if (header.channel_count, header.duration_samples) != panel.samples.shape:
        raise DimensionMismatchError("header dimensions do not match the panel")
    if header.sample_rate_hz != panel.sample_rate_hz:
        raise DimensionMismatchError("header and panel sample rates differ")
    if str(path).lower().endswith(".csv"):
        with atomic_write(path, "w") as fh:
            _write_panel_csv(fh, header, panel)
    else:
        with atomic_write(path, "wb") as fh:
            fh.write(_panel_bytes(header, panel))


def _parse_panel_bytes(data: bytes) -> tuple[RecordingHeader, SignalPanel]:
    if len(data) < PANEL_HEADER_SIZE:
        raise CorruptFileError("file is shorter than the panel header")
    (magic, version, label, K, T, rate, rows, cols, pitch, n_inactive, meta_len,
     offset) = _PANEL_HEADER.unpack_from(data)
    if magic != PANEL_MAGIC:
        raise CorruptFileError(f"bad magic {magic!r}")
    if version != PANEL_VERSION:
        raise UnsupportedVersionError(f"panel format version {version} is not supported")
    if label >= len(LABELS) or offset != PANEL_HEADER_SIZE + 4 * n_inactive + meta_len:
        raise CorruptFileError("inconsistent panel header")
    if len(data) != offset + 8 * K * T:
        raise CorruptFileError(f"payload holds {len(data) - offset} bytes, expected {8 * K * T}")
    inactive = np.frombuffer(data, dtype="<u4", count=n_inactive, offset=PANEL_HEADER_SIZE)
    try:
        meta = json.loads(data[PANEL_HEADER_SIZE + 4 * n_inactive:offset].decode() or "{}")
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError("unreadable provenance block") from exc
    samples = np.frombuffer(data, dtype="<f8", count=K * T, offset=offset).reshape(K, T).astype(float)
    try:
        header = RecordingHeader(K, rate, T, rows, cols, pitch, tuple(int(i) for i in inactive), LABELS[label], meta)
    except DimensionMismatchError as exc:
        raise CorruptFileError(str(exc)) from exc
    return header, SignalPanel(samples, rate)


def _write_panel_csv(fh, header: RecordingHeader, panel: SignalPanel) -> None:
    fh.write(f"# sample_rate_hz={header.sample_rate_hz!r}\n")
    fh.write(f"# layout={header.rows}x{header.cols}\n")
    fh.write(f"# pitch_mm={header.pitch_mm!r}\n")
    fh.write(f"# inactive={','.join(str(i) for i in header.inactive)}\n")
    fh.write(f"# label={header.label}\n")
    fh.write(f"# provenance={json.dumps(header.provenance, sort_keys=True)}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["sample"] + [f"ch{i}" for i in range(panel.channel_count)])
    for t in range(panel.n_samples):
        w.writerow([t] + [repr(float(v)) for v in panel.samples[:, t]])


def _parse_panel_csv(text: str) -> tuple[RecordingHeader, SignalPanel]:
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise CorruptFileError("CSV panel has no header row")
    rows_ = list(csv.reader(body))
    names = rows_[0]
    has_index = names[0].strip().lower() in ("sample", "t", "time")
    try:
        data = np.array([[float(v) for v in r] for r in rows_[1:]], dtype=float).reshape(len(rows_) - 1, -1)
    except ValueError as exc:
        raise CorruptFileError("non-numeric value in CSV panel") from exc
    if data.shape[1] != len(names):
        raise CorruptFileError("ragged CSV panel")
    samples = (data[:, 1:] if has_index else data).T.copy()
    K, T = samples.shape
    try:
        rate = float(meta.get("sample_rate_hz", "1000"))
        inactive = tuple(int(i) for i in meta.get("inactive", "").split(",") if i.strip())
        if "layout" in meta:
            r, c = (int(v) for v in meta["layout"].lower().split("x"))
        else:
            r, c = 1, K + len(inactive)
        pitch = float(meta.get("pitch_mm", "2.0"))
        prov = json.loads(meta.get("provenance", "{}") or "{}")
    except (ValueError, json.JSONDecodeError) as exc:
        raise CorruptFileError("bad CSV metadata line") from exc
    header = RecordingHeader(K, rate, T, r, c, pitch, inactive, meta.get("label", "synthetic"), prov)
    return header, SignalPanel(samples, rate)


def load_panel(path: str | Path) -> tuple[RecordingHeader, SignalPanel]:
    """Read a binary (magic ``EGMP``) or CSV panel."""
    data = Path(path).read_bytes()
    if data[:4] == PANEL_MAGIC:
        return _parse_panel_bytes(data)
    if str(path).lower().endswith(".csv"):
        try:
            return _parse_panel_csv(data.decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise CorruptFileError("CSV panel is not UTF-8 text") from exc
    raise CorruptFileError(f"{path}: neither a binary panel nor a .csv file")


# ---------------------------------------------------------------- tensors

def save_tensor(path: str | Path, t: STFTTensor | JointSpectrum) -> None:
    """Compact container (header then interleaved little-endian float64 re/im).

    Joint spectra are written with ``kind = 1``; the eigenbasis itself is not
    stored.
    """
    K, M, F = t.coeffs.shape
    kind = 1 if isinstance(t, JointSpectrum) else 0
    head = _TENSOR_HEADER.pack(TENSOR_MAGIC, K, M, F, t.sample_rate_hz, t.config.hop,
                               WINDOW_IDS[t.config.window], TENSOR_VERSION, kind)
    head = head.ljust(TENSOR_HEADER_SIZE, b"\0")
    # frame length and sample count follow the header so that the tensor is invertible
    tail = struct.pack("<IQ", t.config.frame_len, t.n_samples)
    payload = np.ascontiguousarray(t.coeffs, dtype="<c16").tobytes()
    with atomic_write(path, "wb") as fh:
        fh.write(head + tail + payload)


def load_tensor(path: str | Path, spectrum: LaplacianSpectrum | None = None) -> STFTTensor | JointSpectrum:
    data = Path(path).read_bytes()
    if len(data) < TENSOR_HEADER_SIZE + 12:
        raise CorruptFileError("file is shorter than the tensor header")
    magic, K, M, F, rate, hop, win, version, kind = _TENSOR_HEADER.unpack_from(data)
    if magic != TENSOR_MAGIC:
        raise CorruptFileError(f"bad magic {magic!r}")
    if version != TENSOR_VERSION:
        raise UnsupportedVersionError(f"tensor format version {version} is not supported")
    if win not in _WINDOW_NAMES or kind not in (0, 1):
        raise CorruptFileError("unknown window or tensor kind")
    frame_len, n_samples = struct.unpack_from("<IQ", data, TENSOR_HEADER_SIZE)
    start = TENSOR_HEADER_SIZE + 12
    if len(data) != start + 16 * K * M * F:
        raise CorruptFileError("tensor payload size does not match the header")
    coeffs = np.frombuffer(data, dtype="<c16", offset=start).reshape(K, M, F).astype(complex)
    cfg = FrameConfig(frame_len, hop, _WINDOW_NAMES[win], F)
    if kind == 0:
        return STFTTensor(coeffs, cfg, rate, n_samples)
    if spectrum is None:
        raise InvalidConfigError("a joint spectrum file needs the graph spectrum to be supplied")
    if spectrum.size != K:
        raise DimensionMismatchError(f"tensor has {K} graph frequencies, spectrum has {spectrum.size}")
    return JointSpectrum(coeffs, spectrum, cfg, rate, n_samples)


def tensor_to_csv(path: str | Path, t: STFTTensor | JointSpectrum) -> None:
    """Long form with columns (k or channel, tau, f_hz, re, im)."""
    first = "k" if isinstance(t, JointSpectrum) else "channel"
    freqs = t.frequencies_hz()
    K, M, F = t.coeffs.shape
    idx = np.indices((K, M, F)).reshape(3, -1)
    flat = t.coeffs.reshape(-1)
    with atomic_write(path, "w") as fh:
        fh.write(f"{first},tau,f_hz,re,im\n")
        buf = io.StringIO()
        for a, b, c, z in zip(idx[0], idx[1], idx[2], flat):
            buf.write(f"{a},{b},{float(freqs[c])!r},{float(z.real)!r},{float(z.imag)!r}\n")
        fh.write(buf.getvalue())


def map_to_csv(path: str | Path, values: np.ndarray, row_name: str, col_name: str,
               col_values: np.ndarray | None = None, value_name: str = "value") -> None:
    """2-D map in long form; ``-inf`` is written as ``-inf``."""
    values = np.asarray(values)
    cols = np.arange(values.shape[1]) if col_values is None else np.asarray(col_values)
    with atomic_write(path, "w") as fh:
        fh.write(f"{row_name},{col_name},{value_name}\n")
        buf = io.StringIO()
        for i in range(values.shape[0]):
            for j in range(values.shape[1]):
                v = values[i, j]
                cell = int(v) if isinstance(v, (int, np.integer)) else repr(float(v))
                buf.write(f"{i},{float(cols[j])!r},{cell}\n")
        fh.write(buf.getvalue())


def rows_to_csv(path: str | Path, rows: list[dict], columns: list[str] | None = None) -> None:
    columns = columns if columns is not None else (list(rows[0]) if rows else [])
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else (repr(float(r[c])) if isinstance(r[c], float) else r[c])
                        for c in columns])


def write_json(path: str | Path, doc) -> None:
    with atomic_write(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- graphs

def save_graph(path: str | Path, g: ElectrodeGraph) -> None:
    write_json(path, g.to_dict())


def load_graph(path: str | Path) -> ElectrodeGraph:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CorruptFileError(f"{path}: invalid JSON") from exc
    missing = {"rows", "cols", "pitch_mm"} - set(doc)
    if missing:
        raise CorruptFileError(f"graph document lacks {sorted(missing)}")
    return ElectrodeGraph.from_dict(doc)


def spectrum_to_csv(path: str | Path, s: LaplacianSpectrum) -> None:
    """Columns k, lambda, then u_k evaluated at every vertex."""
    with atomic_write(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "lambda"] + [f"v{i}" for i in range(s.size)])
        for k in range(s.size):
            w.writerow([k, repr(float(s.lambdas[k]))] + [repr(float(v)) for v in s.U[:, k]])


def spectrum_from_csv(path: str | Path) -> LaplacianSpectrum:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise CorruptFileError("non-numeric spectrum CSV") from exc
    if body.ndim != 2 or body.shape[1] != body.shape[0] + 2:
        raise CorruptFileError("spectrum CSV must have K rows and K + 2 columns")
    return LaplacianSpectrum(body[:, 2:].T.copy(), body[:, 1].copy())


# ---------------------------------------------------------------- flat configs

def parse_flat_config(text: str) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment, blank lines are ignored."""
    out: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise InvalidConfigError(f"line {n}: expected 'key = value'")
        key = key.strip()
        if key in out:
            raise InvalidConfigError(f"line {n}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def format_flat_config(flat: dict[str, str]) -> str:
    keys = sorted(flat, key=lambda k: (k != "config_version", k))
    return "".join(f"{k} = {flat[k]}\n" for k in keys)


def load_flat_config(path: str | Path) -> dict[str, str]:
    return parse_flat_config(Path(path).read_text())


def save_flat_config(path: str | Path, flat: dict[str, str]) -> None:
    with atomic_write(path, "w") as fh:
        fh.write(format_flat_config(flat))
