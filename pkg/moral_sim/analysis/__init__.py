"""
Run analysis: metrics, moral-type judging, query helpers and the report bundle.
"""

from moral_sim.analysis.judge import JudgeBackend, SoftConfusionMatrix, judge_moral_types
from moral_sim.analysis.metrics import (
    build_networks,
    compute_action_distributions,
    compute_hp_attribution,
    compute_hunt_traces,
    compute_lifespans,
    compute_mortality,
    compute_population_series,
)
from moral_sim.analysis.report import emit_report
from moral_sim.analysis.tools import (
    get_agent_profile,
    get_collaboration_trace,
    get_global_observations,
    get_population_data,
)

__all__ = [
    "JudgeBackend",
    "SoftConfusionMatrix",
    "build_networks",
    "compute_action_distributions",
    "compute_hp_attribution",
    "compute_hunt_traces",
    "compute_lifespans",
    "compute_mortality",
    "compute_population_series",
    "emit_report",
    "get_agent_profile",
    "get_collaboration_trace",
    "get_global_observations",
    "get_population_data",
    "judge_moral_types",
]
