"""Synthetic ground-truth generator: monodomain tissue, electrode forward model, ventricular template."""
from .config import ElectrodeArraySpec, FociSchedule, TissueConfig, default_foci
from .forward import StreamingRecorder, electrode_potentials, lead_field
from .ionic import Courtemanche, IonicModel, MitchellSchaeffer, make_ionic_model
from .tissue import (Episode, MonodomainSolver, TissueState, calibrate_conductivities,
                     measure_conduction_velocity, resting_tissue, run_af_episode, step_monodomain)
from .ventricular import VentricularActivity, attenuation_map, mix, qrs_waveform, synthesize_va

__all__ = [
    "Courtemanche", "ElectrodeArraySpec", "Episode", "FociSchedule", "IonicModel", "MitchellSchaeffer",
    "MonodomainSolver", "StreamingRecorder", "TissueConfig", "TissueState", "VentricularActivity",
    "attenuation_map", "calibrate_conductivities", "default_foci", "electrode_potentials", "lead_field",
    "make_ionic_model", "measure_conduction_velocity", "mix", "qrs_waveform", "resting_tissue",
    "run_af_episode", "step_monodomain", "synthesize_va",
]
