"""
Mini-game harness.

A mini-game places agents in a small controlled scenario, offers one of them a
single decision, and records what it did. Every trial runs on a freshly built
WorldState with its own RNG stream seeded from (seed, cell, trial), so trials are
independent and may run on a thread pool without changing the aggregate.

Games:
    invitation         12 x 12 profile pairs: does the sender invite the receiver to hunt?
    hp_sharing         parent/child dyads over an HP grid: how much does the parent give?
    allocation_target  what a sender gives to targets differing on one axis
    custom             an explicit roster, decider and decision subject
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from moral_sim import settings
from moral_sim.actions import resolve_action
from moral_sim.analysis.metrics import Column, MetricTable
from moral_sim.cognition import assemble_observation, policy_decide
from moral_sim.config import SimulationConfig, baseline_config, config_to_dict, validate_config
from moral_sim.errors import ArchiveError, ScenarioError
from moral_sim.models import (
    PRODUCTION_ACTIONS,
    SOCIAL_ACTIONS,
    ActionKind,
    MoralType,
    PolicyBackend,
    RoundKind,
    RoundPhase,
)
from moral_sim.responses import SimJSONEncoder
from moral_sim.world import WorldState, populate_resources

logger = logging.getLogger(__name__)

PA_CLASSES: Dict[str, float] = {"strong": 8.0, "mid": 6.0, "weak": 4.0}
INVITE_INTENT = "invite"

PAClass = Literal["strong", "mid", "weak"]


# ---------------------------------------------------------------------------
# Scenario documents
# ---------------------------------------------------------------------------


class AgentProfile(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    agent_id: str
    moral_type: MoralType
    pa_class: PAClass = "mid"
    hp: int = Field(default=20, ge=1)
    age: int = Field(default=10, ge=0)
    parent_id: Optional[str] = None
    children: List[str] = Field(default_factory=list)

    @property
    def physical_ability(self) -> float:
        return PA_CLASSES[self.pa_class]


class LifeStage(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    parent_age: int = Field(ge=0)
    child_age: int = Field(ge=0)


DEFAULT_LIFE_STAGES = [
    LifeStage(name="young", parent_age=6, child_age=0),
    LifeStage(name="elderly", parent_age=18, child_age=8),
]


class ScenarioSpec(BaseModel):
    """A mini-game scenario document."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str
    game: Literal["invitation", "hp_sharing", "allocation_target", "custom"]
    seed: int = Field(default=0, ge=0)
    trials: int = Field(default=10, ge=1)
    config_overrides: Dict[str, Any] = Field(default_factory=dict)
    phase: Literal["social", "production"] = "social"

    # invitation
    agent_hp: int = Field(default=20, ge=1)
    agent_age: int = Field(default=10, ge=0)

    # hp_sharing
    parent_hp: List[int] = Field(default_factory=lambda: [10, 20, 30, 40])
    child_hp: List[int] = Field(default_factory=lambda: [1, 5, 10, 15])
    life_stages: List[LifeStage] = Field(default_factory=lambda: list(DEFAULT_LIFE_STAGES))

    # allocation_target
    axis: Literal["kin_vs_nonkin", "target_moral_type"] = "kin_vs_nonkin"
    sender_hp: int = Field(default=30, ge=1)
    target_hp: int = Field(default=5, ge=1)

    # custom
    roster: List[AgentProfile] = Field(default_factory=list)
    decider: Optional[str] = None
    decision_subject: Optional[Dict[str, Any]] = None

    @model_validator(mode="after")
    def _check(self) -> "ScenarioSpec":
        check_roster(self.roster)
        if self.game == "custom":
            if self.decider is None:
                raise ValueError("custom scenarios need a decider")
            if self.decider not in {p.agent_id for p in self.roster}:
                raise ValueError(f"decider {self.decider} is not in the roster")
        if not self.parent_hp or not self.child_hp or not self.life_stages:
            raise ValueError("hp_sharing grids and life stages must not be empty")
        return self

    def config(self) -> SimulationConfig:
        return validate_config(
            {**config_to_dict(baseline_config()), **self.config_overrides, "rng_seed": self.seed}
        )


def check_roster(roster: Sequence[AgentProfile]) -> None:
    """Unique ids, known relatives, symmetric family links, parents listed first."""
    seen: Dict[str, AgentProfile] = {}
    for profile in roster:
        if profile.agent_id in seen:
            raise ValueError(f"duplicate agent id {profile.agent_id}")
        if profile.parent_id is not None:
            parent = seen.get(profile.parent_id)
            if parent is None:
                raise ValueError(f"{profile.agent_id}: parent {profile.parent_id} must come first")
            if profile.agent_id not in parent.children:
                raise ValueError(
                    f"{profile.parent_id} does not list {profile.agent_id} among its children"
                )
        seen[profile.agent_id] = profile
    for profile in roster:
        for child_id in profile.children:
            child = seen.get(child_id)
            if child is None or child.parent_id != profile.agent_id:
                raise ValueError(f"{child_id} does not name {profile.agent_id} as its parent")


def load_scenario(document: Union[str, bytes]) -> ScenarioSpec:
    """Parse and validate a scenario document.

    Raises:
        ScenarioError: If the document is not JSON or not a valid scenario.
    """
    try:
        data = json.loads(document)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ScenarioError(f"Scenario document is not valid JSON: {e}") from None
    try:
        return ScenarioSpec.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first.get("loc", ())) or "scenario"
        raise ScenarioError(f"Invalid scenario field '{loc}': {first.get('msg')}") from None


def load_scenario_file(path: Union[str, Path]) -> ScenarioSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"Cannot read scenario file {path}: {e}") from None
    return load_scenario(text)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class TrialRecord:
    row: str
    column: str
    trial: int
    ok: bool
    value: Optional[float] = None
    action: Optional[Dict[str, Any]] = None
    error: Optional[str] = None


@dataclass
class SweepResult:
    """Per-trial records for one table; cell aggregates are always recomputed from them."""

    name: str
    statistic: str
    aggregate: Literal["sum", "mean"]
    rows: List[str]
    columns: List[str]
    records: List[TrialRecord] = field(default_factory=list)

    def cell_records(self, row: str, column: str) -> List[TrialRecord]:
        return [r for r in self.records if r.row == row and r.column == column]

    def cell(self, row: str, column: str) -> Dict[str, Any]:
        records = self.cell_records(row, column)
        values = [r.value for r in records if r.ok and r.value is not None]
        if self.aggregate == "sum":
            value: Optional[float] = float(sum(values))
        else:
            value = float(np.mean(values)) if values else None
        return {
            "trials": len(records),
            "failed": sum(1 for r in records if not r.ok),
            "value": value,
        }

    def matrix(self) -> np.ndarray:
        out = np.full((len(self.rows), len(self.columns)), np.nan)
        for i, row in enumerate(self.rows):
            for j, column in enumerate(self.columns):
                value = self.cell(row, column)["value"]
                if value is not None:
                    out[i, j] = value
        return out

    def failures(self) -> List[TrialRecord]:
        return [r for r in self.records if not r.ok]

    def to_table(self) -> MetricTable:
        columns = [
            Column("row", "str"),
            Column("column", "str"),
            Column("trial", "int"),
            Column("ok", "bool", "false when the backend failed; excluded from aggregates"),
            Column("value", "float", self.statistic),
            Column("action", "object", "the decided action"),
            Column("error", "str"),
        ]
        cells = {
            f"{row}|{column}": self.cell(row, column)
            for row in self.rows
            for column in self.columns
        }
        return MetricTable(
            self.name,
            f"{self.statistic} per cell ({self.aggregate} over trials)",
            columns,
            [vars(r).copy() for r in self.records],
            meta={
                "statistic": self.statistic,
                "aggregate": self.aggregate,
                "rows": self.rows,
                "columns": self.columns,
                "cells": cells,
            },
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "SweepResult":
        meta = table.meta
        return cls(
            name=table.name,
            statistic=meta["statistic"],
            aggregate=meta["aggregate"],
            rows=list(meta["rows"]),
            columns=list(meta["columns"]),
            records=[TrialRecord(**r) for r in table.rows],
        )


def write_sweep_results(results: Sequence[SweepResult], out_dir: Union[str, Path]) -> List[Path]:
    out = Path(out_dir)
    paths = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for result in results:
            path = out / f"{result.name}.json"
            table = result.to_table().to_dict()
            text = json.dumps(table, indent=2, sort_keys=True, cls=SimJSONEncoder)
            path.write_text(text + "\n", encoding="utf-8")
            paths.append(path)
    except OSError as e:
        raise ArchiveError(f"Cannot write mini-game results to {out}: {e}") from None
    return paths


# ---------------------------------------------------------------------------
# Trial machinery
# ---------------------------------------------------------------------------


def scenario_world(
    config: SimulationConfig, roster: Sequence[AgentProfile], rng: np.random.Generator
) -> WorldState:
    """A fresh world holding exactly the roster, plus the usual plants and prey."""
    check_roster(roster)
    state = WorldState(config=config, rng=rng, step=1)
    for profile in roster:
        state.add_agent(
            profile.moral_type,
            hp=min(profile.hp, config.max_hp),
            age=profile.age,
            physical_ability=profile.physical_ability,
            parent_id=profile.parent_id,
            agent_id=profile.agent_id,
        )
    state.next_agent_index = len(roster) + 1
    populate_resources(state)
    state.queue = [p.agent_id for p in roster]
    return state


def _phase(kind: str) -> RoundPhase:
    if kind == "production":
        return RoundPhase(1, 1, RoundKind.PRODUCTION, PRODUCTION_ACTIONS)
    return RoundPhase(1, 0, RoundKind.SOCIAL, SOCIAL_ACTIONS)


Measure = Callable[[Dict[str, Any], Dict[str, Any]], float]


@dataclass(frozen=True)
class _Trial:
    row: str
    column: str
    cell_index: int
    trial: int
    roster: Tuple[AgentProfile, ...]
    decider: str
    subject: Optional[Dict[str, Any]]


def _run_trial(
    trial: _Trial,
    backend: PolicyBackend,
    config: SimulationConfig,
    phase: str,
    seed: int,
    measure: Measure,
) -> TrialRecord:
    rng = np.random.default_rng(np.random.SeedSequence([seed, trial.cell_index, trial.trial]))
    try:
        state = scenario_world(config, trial.roster, rng)
        round_phase = _phase(phase)
        state.round_index = round_phase.round_index
        state.round_kind = round_phase.kind
        bundle = assemble_observation(state, trial.decider, round_phase, trial.subject)
        response = policy_decide(backend, bundle)
        outcome = resolve_action(state, response.action, round_phase)
    except Exception as e:
        logger.warning("Trial %s/%s #%d failed: %s", trial.row, trial.column, trial.trial, e)
        return TrialRecord(trial.row, trial.column, trial.trial, ok=False, error=str(e))
    action = response.action.model_dump(mode="json", exclude_none=True)
    event = outcome.event.to_dict()
    return TrialRecord(
        trial.row, trial.column, trial.trial, ok=True, value=measure(action, event), action=action
    )


def _run_trials(
    name: str,
    statistic: str,
    aggregate: Literal["sum", "mean"],
    rows: List[str],
    columns: List[str],
    trials: List[_Trial],
    backend: PolicyBackend,
    config: SimulationConfig,
    phase: str,
    seed: int,
    measure: Measure,
    max_workers: Optional[int] = None,
) -> SweepResult:
    workers = max_workers or settings.parallel_workers()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(
            pool.map(lambda t: _run_trial(t, backend, config, phase, seed, measure), trials)
        )
    result = SweepResult(name, statistic, aggregate, rows, columns, records)
    if result.failures():
        logger.warning("%s: %d of %d trials failed", name, len(result.failures()), len(records))
    return result


def _invited(action: Dict[str, Any], event: Dict[str, Any]) -> float:
    if action.get("kind") != ActionKind.COMMUNICATE.value:
        return 0.0
    return 1.0 if action.get("intent") == INVITE_INTENT and event.get("success") else 0.0


def _transferred_to(target_id: str) -> Measure:
    def measure(action: Dict[str, Any], event: Dict[str, Any]) -> float:
        if action.get("kind") != ActionKind.ALLOCATE.value or event.get("failure_reason"):
            return 0.0
        return float(action.get("allocation_plan", {}).get(target_id, 0))

    return measure


def profile_label(moral_type: MoralType, pa_class: str) -> str:
    return f"{moral_type.value}/{pa_class}"


def profile_grid() -> List[Tuple[MoralType, str]]:
    """The 12 profiles: 4 moral types x 3 PA classes."""
    return [(t, c) for t in MoralType.ordered() for c in PA_CLASSES]


# ---------------------------------------------------------------------------
# Games
# ---------------------------------------------------------------------------


def run_invitation_game(
    policy_backend: PolicyBackend,
    trials: int = 10,
    spec: Optional[ScenarioSpec] = None,
    max_workers: Optional[int] = None,
) -> SweepResult:
    """Every ordered pair of the 12 profiles, two unrelated agents each time.

    Cell value: number of trials in which the sender invited the receiver.
    """
    spec = spec or ScenarioSpec(name="invitation", game="invitation", trials=trials)
    config = spec.config()
    labels = [profile_label(t, c) for t, c in profile_grid()]
    jobs = []
    for i, (sender_type, sender_class) in enumerate(profile_grid()):
        for j, (receiver_type, receiver_class) in enumerate(profile_grid()):
            roster = (
                AgentProfile(
                    agent_id="agent_1",
                    moral_type=sender_type,
                    pa_class=sender_class,
                    hp=spec.agent_hp,
                    age=spec.agent_age,
                ),
                AgentProfile(
                    agent_id="agent_2",
                    moral_type=receiver_type,
                    pa_class=receiver_class,
                    hp=spec.agent_hp,
                    age=spec.agent_age,
                ),
            )
            subject = {
                "kind": "invitation",
                "receiver": "agent_2",
                "question": "Do you invite agent_2 to hunt prey together with you this step?",
            }
            for trial in range(trials):
                cell = i * len(labels) + j
                jobs.append(_Trial(labels[i], labels[j], cell, trial, roster, "agent_1", subject))
    return _run_trials(
        spec.name,
        "invitations",
        "sum",
        labels,
        labels,
        jobs,
        policy_backend,
        config,
        "social",
        spec.seed,
        _invited,
        max_workers,
    )


def run_hp_sharing_game(
    policy_backend: PolicyBackend,
    hp_grid: Optional[Tuple[Sequence[int], Sequence[int]]] = None,
    life_stages: Optional[Sequence[LifeStage]] = None,
    spec: Optional[ScenarioSpec] = None,
    max_workers: Optional[int] = None,
) -> List[SweepResult]:
    """Parent/child dyads per moral type and life stage over a (parent_hp, child_hp) grid.

    One table per (moral type, life stage); cell value is the mean HP the parent
    allocated to the child.

    Raises:
        ScenarioError: If a grid value lies outside [1, max_hp].
    """
    spec = spec or ScenarioSpec(name="hp_sharing", game="hp_sharing")
    config = spec.config()
    parent_grid, child_grid = hp_grid or (spec.parent_hp, spec.child_hp)
    stages = list(life_stages or spec.life_stages)
    for hp in [*parent_grid, *child_grid]:
        if not 1 <= hp <= config.max_hp:
            raise ScenarioError(f"HP grid value {hp} is outside [1, {config.max_hp}]")

    rows = [str(hp) for hp in parent_grid]
    columns = [str(hp) for hp in child_grid]
    subject = {
        "kind": "allocation",
        "target": "agent_2",
        "question": "How much of your HP, if any, do you allocate to your child agent_2 now?",
    }
    results = []
    for t_index, moral_type in enumerate(MoralType.ordered()):
        for s_index, stage in enumerate(stages):
            jobs = []
            for i, parent_hp in enumerate(parent_grid):
                for j, child_hp in enumerate(child_grid):
                    roster = (
                        AgentProfile(
                            agent_id="agent_1",
                            moral_type=moral_type,
                            hp=parent_hp,
                            age=stage.parent_age,
                            children=["agent_2"],
                        ),
                        AgentProfile(
                            agent_id="agent_2",
                            moral_type=moral_type,
                            hp=child_hp,
                            age=stage.child_age,
                            parent_id="agent_1",
                        ),
                    )
                    cell = ((t_index * len(stages) + s_index) * len(rows) + i) * len(columns) + j
                    for trial in range(spec.trials):
                        jobs.append(
                            _Trial(rows[i], columns[j], cell, trial, roster, "agent_1", subject)
                        )
            results.append(
                _run_trials(
                    f"{spec.name}_{moral_type.value}_{stage.name}",
                    "hp_transferred",
                    "mean",
                    rows,
                    columns,
                    jobs,
                    policy_backend,
                    config,
                    "social",
                    spec.seed,
                    _transferred_to("agent_2"),
                    max_workers,
                )
            )
    return results


def run_allocation_target_game(
    policy_backend: PolicyBackend,
    target_axis: Literal["kin_vs_nonkin", "target_moral_type"] = "kin_vs_nonkin",
    spec: Optional[ScenarioSpec] = None,
    max_workers: Optional[int] = None,
) -> SweepResult:
    """A well-fed sender faces one low-HP target; targets differ only on the swept axis.

    Rows are sender moral types. With kin_vs_nonkin the target is the sender's own
    child or an unrelated agent of the same type; with target_moral_type it is an
    unrelated agent of each type.
    """
    spec = spec or ScenarioSpec(
        name="allocation_target", game="allocation_target", axis=target_axis
    )
    config = spec.config()
    rows = [t.value for t in MoralType.ordered()]
    if target_axis == "kin_vs_nonkin":
        columns = ["kin", "non_kin"]
    else:
        columns = [t.value for t in MoralType.ordered()]
    subject = {
        "kind": "allocation",
        "target": "agent_2",
        "question": "How much of your HP, if any, do you allocate to agent_2 now?",
    }

    jobs = []
    for i, sender_type in enumerate(MoralType.ordered()):
        for j, column in enumerate(columns):
            is_kin = column == "kin"
            target_type = sender_type if target_axis == "kin_vs_nonkin" else MoralType(column)
            roster = (
                AgentProfile(
                    agent_id="agent_1",
                    moral_type=sender_type,
                    hp=spec.sender_hp,
                    age=spec.agent_age,
                    children=["agent_2"] if is_kin else [],
                ),
                AgentProfile(
                    agent_id="agent_2",
                    moral_type=target_type,
                    hp=spec.target_hp,
                    age=0 if is_kin else spec.agent_age,
                    parent_id="agent_1" if is_kin else None,
                ),
            )
            for trial in range(spec.trials):
                jobs.append(
                    _Trial(rows[i], column, i * len(columns) + j, trial, roster, "agent_1", subject)
                )
    return _run_trials(
        f"{spec.name}_{target_axis}",
        "hp_transferred",
        "mean",
        rows,
        columns,
        jobs,
        policy_backend,
        config,
        "social",
        spec.seed,
        _transferred_to("agent_2"),
        max_workers,
    )


def run_custom_game(
    policy_backend: PolicyBackend, spec: ScenarioSpec, max_workers: Optional[int] = None
) -> SweepResult:
    """Repeat one decision for an explicit roster. The value is 1 when the decider acts."""
    config = spec.config()
    decider = spec.decider or ""
    roster = tuple(spec.roster)
    jobs = [
        _Trial("decider", decider, 0, trial, roster, decider, spec.decision_subject)
        for trial in range(spec.trials)
    ]

    def acted(action: Dict[str, Any], event: Dict[str, Any]) -> float:
        return 0.0 if action.get("kind") == ActionKind.DO_NOTHING.value else 1.0

    return _run_trials(
        spec.name,
        "acted",
        "sum",
        ["decider"],
        [decider],
        jobs,
        policy_backend,
        config,
        spec.phase,
        spec.seed,
        acted,
        max_workers,
    )


def run_scenario(
    spec: ScenarioSpec, policy_backend: PolicyBackend, max_workers: Optional[int] = None
) -> List[SweepResult]:
    """Dispatch a scenario document to its game."""
    if spec.game == "invitation":
        return [run_invitation_game(policy_backend, spec.trials, spec, max_workers)]
    if spec.game == "hp_sharing":
        return run_hp_sharing_game(policy_backend, spec=spec, max_workers=max_workers)
    if spec.game == "allocation_target":
        return [run_allocation_target_game(policy_backend, spec.axis, spec, max_workers)]
    return [run_custom_game(policy_backend, spec, max_workers)]
