"""Joint graph and short-time spectral analysis of multi-electrode electrograms."""
from .analysis import (EnergyMapDB, Level, LevelMap, VariationSeries, band_average_variation,
                       boundary_graph_frequency, gft_energy, gft_energy_db, graph_variation_series,
                       is_bandlimited, normalized_energy_db, normalized_variation, quadratic_variation,
                       quantize_levels, relevant_band)
from .extraction import (GAEParams, SeparationResult, abs_baseline, detect_r_peaks, detect_va_frames,
                         extract_atrial, gae_shrink)
from .graph import ElectrodeGraph, LaplacianSpectrum, build_grid_graph, eigendecompose, graph_spectrum, laplacian
from .metrics import BeatAnnotations, MetricReport, cc, detect_beats, evaluate, nmse, vdr, vr
from .transforms import (FrameConfig, JointSpectrum, SignalPanel, STFTTensor, coverage_mask, enframe, gft,
                         igft, inverse_joint, istft, joint_transform, stft)

__version__ = "0.1.0"

__all__ = [
    "abs_baseline", "band_average_variation", "BeatAnnotations", "boundary_graph_frequency",
    "build_grid_graph", "cc", "coverage_mask", "detect_beats", "detect_r_peaks", "detect_va_frames",
    "eigendecompose", "ElectrodeGraph", "EnergyMapDB", "enframe", "evaluate", "extract_atrial",
    "FrameConfig", "gae_shrink", "GAEParams", "gft", "gft_energy", "gft_energy_db", "graph_spectrum",
    "graph_variation_series", "igft", "inverse_joint", "is_bandlimited", "istft", "joint_transform",
    "JointSpectrum", "laplacian", "LaplacianSpectrum", "Level", "LevelMap", "MetricReport", "nmse",
    "normalized_energy_db", "normalized_variation", "quadratic_variation", "quantize_levels",
    "relevant_band", "SeparationResult", "SignalPanel", "stft", "STFTTensor", "VariationSeries", "vdr",
    "vr",
]
