"""
Core utilities for mean-field-sde-lab.

Shared building blocks: particle clouds and Wasserstein distances, time
functions, model interface, grids, reports and output writing.
"""

from .base_model import ModelSpec
from .measures import MeasureFlow, ParticleCloud, Sample, wasserstein
from .output_writer import OutputWriter
from .schemas import BoundReport, SimConfig, TimeGrid
from .time_functions import SampledCurve

__all__ = [
    "BoundReport",
    "MeasureFlow",
    "ModelSpec",
    "OutputWriter",
    "ParticleCloud",
    "Sample",
    "SampledCurve",
    "SimConfig",
    "TimeGrid",
    "wasserstein",
]
