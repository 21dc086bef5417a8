"""Certified numerics for bifurcation from infinity in resonant reaction-diffusion problems."""

from .config import ExperimentConfig, load_config
from .errors import ResonanceLabError
from .pipeline import PipelineAbort, Report, emit_report, run_experiment

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "load_config", "ResonanceLabError", "PipelineAbort", "Report", "emit_report", "run_experiment", "__version__"]
