"""
Simulation engine.

Drives the per-step cycle: environment update, queue reshuffle, the social rounds,
then the production round. Agents act strictly in queue order, so each agent
perceives everything resolved earlier in the same step. The loop is single-threaded
by construction.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

from moral_sim.actions import resolve_action, resolve_do_nothing
from moral_sim.archive import RunArchive
from moral_sim.cognition import assemble_observation, policy_decide
from moral_sim.config import SimulationConfig, config_hash
from moral_sim.errors import CheckpointError, DecisionFailure
from moral_sim.models import (
    PRODUCTION_ACTIONS,
    SOCIAL_ACTIONS,
    ActionKind,
    MoralType,
    PolicyBackend,
    RoundKind,
    RoundPhase,
    SystemEventKind,
)
from moral_sim.world import (
    WorldState,
    environment_update,
    initialize_world,
    restore,
    snapshot,
)

logger = logging.getLogger(__name__)

POPULATION_COLLAPSE = "population_collapse"
MAX_TIME_STEPS = "max_time_steps"


@dataclass(frozen=True)
class TerminationCheck:
    stop: bool
    reason: Optional[str] = None


@dataclass
class StepSummary:
    step: int
    population: Dict[MoralType, int]
    births: int
    deaths: int
    decision_failures: int = 0

    def progress_line(self) -> str:
        counts = " ".join(f"{t.value}={n}" for t, n in self.population.items())
        total = sum(self.population.values())
        line = (
            f"step {self.step}: alive={total} [{counts}] "
            f"births={self.births} deaths={self.deaths}"
        )
        if self.decision_failures:
            line += f" decision_failures={self.decision_failures}"
        return line


def round_phases(config: SimulationConfig, step: int) -> List[RoundPhase]:
    """Social rounds 0..n-1 followed by one production round n."""
    phases = [
        RoundPhase(step, i, RoundKind.SOCIAL, SOCIAL_ACTIONS)
        for i in range(config.social_rounds_per_step)
    ]
    phases.append(
        RoundPhase(step, config.social_rounds_per_step, RoundKind.PRODUCTION, PRODUCTION_ACTIONS)
    )
    return phases


def check_termination(
    state: WorldState, config: Optional[SimulationConfig] = None
) -> TerminationCheck:
    """Decide, after a completed step, whether another step runs.

    Step numbers start at 1, so with max_time_steps=80 step 80 runs and step 81
    does not.
    """
    config = config or state.config
    if not state.living_ids():
        return TerminationCheck(True, POPULATION_COLLAPSE)
    if state.step >= config.max_time_steps:
        return TerminationCheck(True, MAX_TIME_STEPS)
    return TerminationCheck(False)


def execute_round(
    state: WorldState,
    phase: RoundPhase,
    queue: List[str],
    policy_backend: PolicyBackend,
) -> int:
    """Offer every living queued agent one decision. Returns the decision-failure count."""
    state.round_index = phase.round_index
    state.round_kind = phase.kind
    failures = 0
    for agent_id in queue:
        if not state.is_alive(agent_id):
            continue
        bundle = assemble_observation(state, agent_id, phase)
        try:
            response = policy_decide(policy_backend, bundle)
        except DecisionFailure as e:
            failures += 1
            logger.warning(
                "Decision failure for %s at step %d round %d, substituting do_nothing: %s",
                agent_id,
                state.step,
                phase.round_index,
                e,
            )
            resolve_do_nothing(state, agent_id, parameters={"decision_failure": str(e)})
            continue

        agent = state.agents[agent_id]
        agent.memory_doc = response.memory_document()
        agent.short_term_plan = response.plan_document()
        resolve_action(state, response.action, phase)
    return failures


def summarize_step(state: WorldState, first_event: int, failures: int = 0) -> StepSummary:
    births = 0
    deaths = 0
    for event in state.events[first_event:]:
        if event.kind == ActionKind.REPRODUCE.value and not event.nullified:
            births += 1
        elif event.kind == SystemEventKind.DEATH.value:
            deaths += 1
    return StepSummary(
        step=state.step,
        population=state.population_by_type(),
        births=births,
        deaths=deaths,
        decision_failures=failures,
    )


def run_step(state: WorldState, policy_backend: PolicyBackend) -> StepSummary:
    """Advance one full time step."""
    state.step += 1
    state.round_index = 0
    state.round_kind = RoundKind.ENVIRONMENT
    first_event = len(state.events)

    environment_update(state)
    queue = state.reshuffle_queue()
    failures = 0
    for phase in round_phases(state.config, state.step):
        failures += execute_round(state, phase, list(queue), policy_backend)

    state.round_index = 0
    state.round_kind = RoundKind.ENVIRONMENT
    return summarize_step(state, first_event, failures)


def _drive(state: WorldState, policy_backend: PolicyBackend, archive: RunArchive) -> RunArchive:
    config = state.config
    written = len(state.events)
    archive.update_meta(status="running")
    with archive.logging_handlers():
        try:
            while True:
                decision = check_termination(state, config)
                if decision.stop:
                    state.termination_reason = decision.reason
                    break
                summary = run_step(state, policy_backend)
                archive.append_events(state.events[written:])
                written = len(state.events)
                if state.step % config.checkpoint_interval == 0:
                    archive.write_checkpoint(snapshot(state))
                logger.info(summary.progress_line())
        except Exception:
            archive.append_events(state.events[written:])
            archive.update_meta(status="failed", final_step=state.step)
            logger.exception("Run %s failed at step %d", archive.run_id, state.step)
            raise

        archive.write_checkpoint(snapshot(state))
        archive.update_meta(
            status="completed",
            termination_reason=state.termination_reason,
            final_step=state.step,
        )
        logger.info(
            "Run %s finished at step %d (%s)",
            archive.run_id,
            state.step,
            state.termination_reason,
        )
    return archive


def run_simulation(
    config: SimulationConfig,
    policy_backend: PolicyBackend,
    archive: Optional[RunArchive] = None,
    *,
    variant: str = "baseline",
    runs_dir: Optional[Union[str, Path]] = None,
) -> RunArchive:
    """Run a simulation from step 0 until termination.

    Args:
        config: Validated config, variant already applied.
        policy_backend: Scripted or LLM backend.
        archive: Pre-created archive; one is created under runs_dir otherwise.
        variant: Recorded in run_meta.json.
        runs_dir: Parent directory for a newly created archive.

    Returns:
        The archive holding events, checkpoints and metadata.
    """
    if archive is None:
        archive = RunArchive.create(
            config, parent=runs_dir, variant=variant, backend=policy_backend.kind
        )
    state = initialize_world(config)
    archive.append_events(state.events)
    archive.write_checkpoint(snapshot(state))
    return _drive(state, policy_backend, archive)


def resume_simulation(
    run_dir: Union[str, Path],
    policy_backend: PolicyBackend,
    checkpoint_step: Optional[int] = None,
    out_dir: Optional[Union[str, Path]] = None,
) -> RunArchive:
    """Continue a run from one of its checkpoints.

    With out_dir the run forks into a new directory holding the events up to the
    checkpoint; otherwise the original directory is rewound in place and later
    checkpoints are discarded.

    Raises:
        CheckpointError: If the checkpoint is missing or does not match the run.
        ArchiveError: If the run directory or its event log is unreadable.
    """
    source = RunArchive.open(run_dir)
    config = source.config
    if source.meta.get("config_hash") not in (None, config_hash(config)):
        raise CheckpointError(f"run_meta.json in {run_dir} has an inconsistent config hash")
    checkpoint = source.load_checkpoint(checkpoint_step)
    events = source.load_events()
    state = restore(checkpoint, config, events)

    if out_dir is not None:
        archive = RunArchive.create(
            config,
            run_dir=out_dir,
            variant=source.meta.get("variant", "baseline"),
            backend=policy_backend.kind,
            config_path=source.meta.get("config_path"),
        )
        archive.update_meta(resumed_from={"run_dir": str(source.run_dir), "step": checkpoint.step})
        archive.append_events(state.events)
        archive.write_checkpoint(checkpoint)
    else:
        archive = source
        archive.truncate_events(checkpoint.event_count)
        archive.discard_checkpoints_after(checkpoint.step)
        archive.update_meta(termination_reason=None, final_step=None)

    logger.info("Resuming %s from step %d", source.run_id, checkpoint.step)
    return _drive(state, policy_backend, archive)
