"""
moral-sim

Seed-reproducible multi-agent simulator of hunter-gatherer societies whose agents
carry one of four moral types, with scripted and LLM-backed decision policies, run
archives that resume exactly, and an analysis pipeline over the event log.
"""

from moral_sim.config import SimulationConfig, apply_variant, baseline_config, load_config
from moral_sim.engine import resume_simulation, run_simulation
from moral_sim.models import MoralType

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "MoralType",
    "SimulationConfig",
    "apply_variant",
    "baseline_config",
    "load_config",
    "resume_simulation",
    "run_simulation",
]
