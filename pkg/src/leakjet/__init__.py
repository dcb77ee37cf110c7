"""Pipeline leak detection from leak jet noise recorded by vibroacoustic stations."""
from .detect import (
    DetectionDomain, NoCoherentSource, OperatingCondition, classify_condition, classify_hole,
    detect_leak, localize, train_domain,
)
from .dsp import BatchingPolicy, band_energy, batch, estimate_delay
from .hydraulics import (
    SplSample, discharge_coefficient, fit_spl_model, jet_velocity, leak_flow, spl_forward,
    spl_invert_area,
)
from .kernels import backend_name
from .model import (
    FeatureBatch, FluidSpec, LeakClass, NozzleSpec, SignalRecord, SplModel, Station,
    StationLayout, table1_layout, validate_layout,
)
from .synth import Leak, Scenario, synthesize

__version__ = "0.1.0"

__all__ = [
    "DetectionDomain", "NoCoherentSource", "OperatingCondition", "classify_condition", "classify_hole",
    "detect_leak", "localize", "train_domain",
    "BatchingPolicy", "band_energy", "batch", "estimate_delay",
    "SplSample", "discharge_coefficient", "fit_spl_model", "jet_velocity", "leak_flow", "spl_forward",
    "spl_invert_area",
    "backend_name",
    "FeatureBatch", "FluidSpec", "LeakClass", "NozzleSpec", "SignalRecord", "SplModel", "Station",
    "StationLayout", "table1_layout", "validate_layout",
    "Leak", "Scenario", "synthesize",
]
