"""Planar two-finger in-hand rolling: planning, tactile estimation, control and simulation."""
from .config import ExperimentConfig, load_config
from .scene import Scene

__version__ = "0.1.0"

__all__ = ["ExperimentConfig", "Scene", "load_config", "__version__"]
