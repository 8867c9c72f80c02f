"""
Query helpers over a finished run.

Each function answers one question about a run from its event log and returns a
plain JSON-ready dict, for the report's agent pages and the CLI.
"""

import logging
from collections import Counter
from typing import Any, Dict, List

from moral_sim.analysis.metrics import (
    HUNT_SHARE_WINDOW,
    EventSource,
    build_roster,
    collaboration_trace,
    compute_hp_attribution,
    final_step,
    load_events,
)
from moral_sim.cognition.observation import render_event
from moral_sim.models import ENVIRONMENT_ID, ActionKind, SystemEventKind

logger = logging.getLogger(__name__)


def get_agent_profile(source: EventSource, agent_id: str) -> Dict[str, Any]:
    """Identity, lineage, lifespan, action counts and HP trajectory of one agent.

    Raises:
        ValueError: If no such agent appears in the run.
    """
    events = load_events(source)
    roster = build_roster(events)
    record = roster.get(agent_id)
    if record is None:
        raise ValueError(f"No agent named '{agent_id}' in this run")
    last = final_step(events)

    children = [r.agent_id for r in roster.values() if r.parent_id == agent_id]
    grandchildren = [r.agent_id for r in roster.values() if r.parent_id in children]
    initiated: Counter = Counter()
    nullified: Counter = Counter()
    received: Counter = Counter()
    for event in events:
        if event.actor_id == agent_id:
            (nullified if event.nullified else initiated)[event.kind] += 1
        elif event.actor_id != ENVIRONMENT_ID and agent_id in event.targets:
            if not event.nullified:
                received[event.kind] += 1

    end = record.death_step if record.death_step is not None else last
    return {
        "agent_id": agent_id,
        "moral_type": record.moral_type,
        "physical_ability": record.physical_ability,
        "founder": record.founder,
        "lineage": {
            "parent": record.parent_id,
            "children": children,
            "grandchildren": grandchildren,
        },
        "lifespan": {
            "birth_step": record.birth_step,
            "death_step": record.death_step,
            "death_cause": record.death_cause,
            "age_at_death": record.death_age,
            "steps_lived": end - record.birth_step,
            "censored": record.death_step is None,
        },
        "actions_initiated": dict(sorted(initiated.items())),
        "actions_nullified": dict(sorted(nullified.items())),
        "actions_received": dict(sorted(received.items())),
        "hp_trajectory": compute_hp_attribution(events).trajectories[agent_id],
    }


def get_population_data(source: EventSource, step: int) -> Dict[str, Any]:
    """Who was alive at the end of a step, with that step's births and deaths."""
    events = load_events(source)
    last = final_step(events)
    if not 0 <= step <= last:
        raise ValueError(f"Step {step} is outside this run (0..{last})")
    roster = build_roster(events)
    living = [r for r in roster.values() if r.alive_at(step)]
    by_type = Counter(r.moral_type for r in living)
    return {
        "step": step,
        "total": len(living),
        "by_type": dict(sorted(by_type.items())),
        "living": [r.agent_id for r in living],
        "births": [r.agent_id for r in roster.values() if r.birth_step == step and not r.founder],
        "deaths": {
            r.agent_id: r.death_cause for r in roster.values() if r.death_step == step
        },
    }


def get_global_observations(
    source: EventSource, first_step: int, last_step: int
) -> Dict[str, Any]:
    """Aggregate activity over a step range: decisions by kind, kills, births, deaths."""
    if first_step > last_step:
        raise ValueError("first_step must not exceed last_step")
    events = [e for e in load_events(source) if first_step <= e.step <= last_step]
    decisions: Counter = Counter()
    failed: Counter = Counter()
    deaths: Counter = Counter()
    kills: List[Dict[str, Any]] = []
    messages = 0
    births = 0
    for event in events:
        if event.actor_id == ENVIRONMENT_ID:
            if event.kind == SystemEventKind.DEATH.value:
                deaths[event.parameters.get("cause", "unknown")] += 1
            continue
        if event.nullified:
            failed[event.kind] += 1
            continue
        decisions[event.kind] += 1
        if event.kind == ActionKind.COMMUNICATE.value:
            messages += 1
        elif event.kind == ActionKind.REPRODUCE.value:
            births += 1
        elif event.kind == ActionKind.HUNT.value and event.parameters.get("killed"):
            kills.append(render_event(event))
    return {
        "first_step": first_step,
        "last_step": last_step,
        "decisions": dict(sorted(decisions.items())),
        "nullified": dict(sorted(failed.items())),
        "messages": messages,
        "births": births,
        "deaths_by_cause": dict(sorted(deaths.items())),
        "prey_killed": kills,
    }


def get_collaboration_trace(
    source: EventSource, prey_id: str, window: int = HUNT_SHARE_WINDOW
) -> Dict[str, Any]:
    """Hunts on one prey, the messages that mention it, and the sharing that followed."""
    events = load_events(source)
    trace = collaboration_trace(events, prey_id, window)
    if trace is None:
        raise ValueError(f"No prey named '{prey_id}' in this run")
    last = trace.kill_step if trace.kill_step is not None else final_step(events)
    hunts = [
        render_event(e)
        for e in events
        if e.kind == ActionKind.HUNT.value and prey_id in e.targets
    ]
    messages = [
        render_event(e)
        for e in events
        if e.kind == ActionKind.COMMUNICATE.value
        and e.message
        and prey_id in e.message
        and trace.spawn_step <= e.step <= last + window
    ]
    return {**trace.to_dict(), "hunts": hunts, "messages": messages}
