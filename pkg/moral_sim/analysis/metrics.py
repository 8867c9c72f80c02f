"""
Run metrics derived from the event log.

Every function here is a pure function of the EventRecord list. Nothing reads engine
state or checkpoints, so a metric can be recomputed from any archive at any time.
Each metric type converts to and from a MetricTable, the column-annotated JSON form
written under a report's metrics/ directory.
"""

import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from moral_sim.archive import RunArchive
from moral_sim.errors import ArchiveError
from moral_sim.models import ENVIRONMENT_ID, ActionKind, EventRecord, MoralType, SystemEventKind

logger = logging.getLogger(__name__)

EventSource = Union[RunArchive, Sequence[EventRecord]]

# Steps after a kill during which a hunter's allocations count as sharing that kill
HUNT_SHARE_WINDOW = 3

TYPE_NAMES = [t.value for t in MoralType.ordered()]
ACTION_NAMES = [k.value for k in ActionKind]


def load_events(source: EventSource) -> List[EventRecord]:
    if isinstance(source, RunArchive):
        return source.load_events()
    return list(source)


# ---------------------------------------------------------------------------
# Metric tables
# ---------------------------------------------------------------------------


@dataclass
class Column:
    name: str
    type: str
    description: str = ""


@dataclass
class MetricTable:
    """A named table with explicit column metadata; rows are plain dicts."""

    name: str
    description: str
    columns: List[Column]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    meta: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "columns": [vars(c) for c in self.columns],
            "rows": self.rows,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricTable":
        try:
            return cls(
                name=data["name"],
                description=data.get("description", ""),
                columns=[Column(**c) for c in data["columns"]],
                rows=list(data["rows"]),
                meta=dict(data.get("meta", {})),
            )
        except (KeyError, TypeError) as e:
            raise ArchiveError(f"Malformed metric table: {e}") from None

    def expect(self, name: str) -> "MetricTable":
        if self.name != name:
            raise ArchiveError(f"Expected metric table '{name}', got '{self.name}'")
        return self


# ---------------------------------------------------------------------------
# Roster: who lived when, rebuilt from spawn/reproduce/death records
# ---------------------------------------------------------------------------


@dataclass
class AgentRecord:
    agent_id: str
    moral_type: str
    birth_step: int
    physical_ability: float
    parent_id: Optional[str] = None
    death_step: Optional[int] = None
    death_cause: Optional[str] = None
    death_age: Optional[int] = None

    @property
    def founder(self) -> bool:
        return self.parent_id is None

    @property
    def alive_at_end(self) -> bool:
        return self.death_step is None

    def alive_at(self, step: int) -> bool:
        """Alive at the end of step."""
        return self.birth_step <= step and (self.death_step is None or self.death_step > step)


def build_roster(events: Iterable[EventRecord]) -> Dict[str, AgentRecord]:
    """Every agent that ever existed, in order of appearance."""
    roster: Dict[str, AgentRecord] = {}
    for event in events:
        if event.kind == SystemEventKind.SPAWN.value:
            agent_id = event.targets[0]
            roster[agent_id] = AgentRecord(
                agent_id=agent_id,
                moral_type=event.parameters["moral_type"],
                birth_step=event.step,
                physical_ability=float(event.parameters.get("physical_ability", 0.0)),
            )
        elif event.kind == ActionKind.REPRODUCE.value and not event.nullified:
            child_id = event.parameters["child_id"]
            parent = roster.get(event.actor_id)
            if parent is None:
                raise ArchiveError(f"Reproduce event {event.seq} has an unknown parent")
            roster[child_id] = AgentRecord(
                agent_id=child_id,
                moral_type=parent.moral_type,
                birth_step=event.step,
                physical_ability=float(event.parameters.get("child_physical_ability", 0.0)),
                parent_id=event.actor_id,
            )
        elif event.kind == SystemEventKind.DEATH.value:
            record = roster.get(event.targets[0])
            if record is None:
                raise ArchiveError(f"Death event {event.seq} names an unknown agent")
            record.death_step = event.step
            record.death_cause = event.parameters.get("cause")
            record.death_age = event.parameters.get("age")
    return roster


def final_step(events: Sequence[EventRecord]) -> int:
    return max((e.step for e in events), default=0)


def _decisions(events: Iterable[EventRecord]) -> Iterable[EventRecord]:
    return (e for e in events if e.actor_id != ENVIRONMENT_ID)


# ---------------------------------------------------------------------------
# Population
# ---------------------------------------------------------------------------


@dataclass
class PopulationSeries:
    """Living agents per moral type at the end of each step, plus births and deaths."""

    steps: List[int]
    counts: Dict[str, List[int]]
    births: List[int]
    deaths: List[int]

    def totals(self) -> List[int]:
        return [sum(self.counts[t][i] for t in TYPE_NAMES) for i in range(len(self.steps))]

    def at(self, step: int) -> Dict[str, int]:
        i = self.steps.index(step)
        return {t: self.counts[t][i] for t in TYPE_NAMES}

    def ratios(self, step: int) -> Dict[str, float]:
        counts = self.at(step)
        total = sum(counts.values())
        if total == 0:
            return {t: 0.0 for t in TYPE_NAMES}
        return {t: n / total for t, n in counts.items()}

    def to_table(self) -> MetricTable:
        columns = [Column("step", "int")]
        columns += [Column(f"count_{t}", "int", f"living {t} agents") for t in TYPE_NAMES]
        columns += [Column(f"ratio_{t}", "float", f"share of {t} agents") for t in TYPE_NAMES]
        columns += [Column("births", "int"), Column("deaths", "int")]
        rows = []
        for i, step in enumerate(self.steps):
            row: Dict[str, Any] = {"step": step}
            ratios = self.ratios(step)
            for t in TYPE_NAMES:
                row[f"count_{t}"] = self.counts[t][i]
                row[f"ratio_{t}"] = round(ratios[t], 6)
            row["births"] = self.births[i]
            row["deaths"] = self.deaths[i]
            rows.append(row)
        return MetricTable("population_series", "Population by moral type per step", columns, rows)

    @classmethod
    def from_table(cls, table: MetricTable) -> "PopulationSeries":
        rows = table.expect("population_series").rows
        return cls(
            steps=[r["step"] for r in rows],
            counts={t: [r[f"count_{t}"] for r in rows] for t in TYPE_NAMES},
            births=[r["births"] for r in rows],
            deaths=[r["deaths"] for r in rows],
        )


def compute_population_series(source: EventSource) -> PopulationSeries:
    events = load_events(source)
    if not events:
        raise ArchiveError("Event log is empty; nothing to analyze")
    roster = build_roster(events)
    last = final_step(events)
    steps = list(range(last + 1))

    # Per-step deltas then a running sum, per type
    delta = {t: np.zeros(last + 2, dtype=np.int64) for t in TYPE_NAMES}
    births = np.zeros(last + 1, dtype=np.int64)
    deaths = np.zeros(last + 1, dtype=np.int64)
    for record in roster.values():
        delta[record.moral_type][record.birth_step] += 1
        if not record.founder:
            births[record.birth_step] += 1
        if record.death_step is not None:
            delta[record.moral_type][record.death_step] -= 1
            deaths[record.death_step] += 1
    counts = {t: np.cumsum(delta[t])[: last + 1].tolist() for t in TYPE_NAMES}
    return PopulationSeries(steps, counts, births.tolist(), deaths.tolist())


# ---------------------------------------------------------------------------
# Lifespans and mortality
# ---------------------------------------------------------------------------


@dataclass
class LifespanRecord:
    agent_id: str
    moral_type: str
    birth_step: int
    end_step: int
    lifespan: int
    censored: bool


@dataclass
class Lifespans:
    """One entry per agent; survivors are censored at the final step."""

    records: List[LifespanRecord]
    final_step: int

    def histograms(self) -> Dict[str, Dict[int, int]]:
        out: Dict[str, Dict[int, int]] = {}
        for t in TYPE_NAMES:
            spans = np.array(
                [r.lifespan for r in self.records if r.moral_type == t], dtype=np.int64
            )
            if spans.size == 0:
                out[t] = {}
                continue
            counts = np.bincount(spans)
            out[t] = {int(span): int(n) for span, n in enumerate(counts) if n}
        return out

    def deaths(self) -> int:
        return sum(1 for r in self.records if not r.censored)

    def to_table(self) -> MetricTable:
        columns = [
            Column("agent_id", "str"),
            Column("moral_type", "str"),
            Column("birth_step", "int"),
            Column("end_step", "int", "death step, or the final step for survivors"),
            Column("lifespan", "int", "end_step - birth_step"),
            Column("censored", "bool", "true when the agent was still alive at the end"),
        ]
        rows = [vars(r).copy() for r in self.records]
        return MetricTable(
            "lifespans",
            "Lifespan per agent",
            columns,
            rows,
            meta={"final_step": self.final_step, "histograms": self.histograms()},
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "Lifespans":
        table.expect("lifespans")
        return cls([LifespanRecord(**r) for r in table.rows], table.meta["final_step"])


def compute_lifespans(source: EventSource) -> Lifespans:
    events = load_events(source)
    last = final_step(events)
    records = []
    for record in build_roster(events).values():
        end = record.death_step if record.death_step is not None else last
        records.append(
            LifespanRecord(
                agent_id=record.agent_id,
                moral_type=record.moral_type,
                birth_step=record.birth_step,
                end_step=end,
                lifespan=end - record.birth_step,
                censored=record.death_step is None,
            )
        )
    return Lifespans(records, last)


@dataclass
class Mortality:
    """Death counts by cause and ages at death, per moral type."""

    by_cause: Dict[str, Dict[str, int]]
    ages: Dict[str, List[int]]

    def to_table(self) -> MetricTable:
        causes = sorted({c for per in self.by_cause.values() for c in per})
        columns = [Column("moral_type", "str")]
        columns += [Column(c, "int", f"deaths from {c}") for c in causes]
        columns += [Column("ages_at_death", "list[int]")]
        rows = []
        for t in TYPE_NAMES:
            row: Dict[str, Any] = {"moral_type": t}
            row.update({c: self.by_cause[t].get(c, 0) for c in causes})
            row["ages_at_death"] = self.ages[t]
            rows.append(row)
        return MetricTable("mortality", "Deaths by cause and age per moral type", columns, rows)

    @classmethod
    def from_table(cls, table: MetricTable) -> "Mortality":
        table.expect("mortality")
        causes = [c.name for c in table.columns[1:-1]]
        by_cause = {
            r["moral_type"]: {c: r[c] for c in causes if r[c]} for r in table.rows
        }
        ages = {r["moral_type"]: list(r["ages_at_death"]) for r in table.rows}
        return cls(by_cause, ages)


def compute_mortality(source: EventSource) -> Mortality:
    events = load_events(source)
    by_cause: Dict[str, Counter] = {t: Counter() for t in TYPE_NAMES}
    ages: Dict[str, List[int]] = {t: [] for t in TYPE_NAMES}
    for record in build_roster(events).values():
        if record.death_step is None:
            continue
        by_cause[record.moral_type][record.death_cause or "unknown"] += 1
        if record.death_age is not None:
            ages[record.moral_type].append(int(record.death_age))
    return Mortality(
        {t: dict(sorted(c.items())) for t, c in by_cause.items()},
        {t: sorted(a) for t, a in ages.items()},
    )


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------


def _agent_receivers(event: EventRecord, roster: Dict[str, AgentRecord]) -> List[str]:
    return [t for t in dict.fromkeys(event.targets) if t in roster and t != event.actor_id]


@dataclass
class ActionDistribution:
    """Per moral type: action counts as initiator and as receiver.

    Only decisions that were not nullified are counted.
    """

    agents_per_type: Dict[str, int]
    initiated: Dict[str, Dict[str, int]]
    received: Dict[str, Dict[str, int]]

    def _means(self, counts: Dict[str, Dict[str, int]]) -> Dict[str, Dict[str, float]]:
        out = {}
        for t in TYPE_NAMES:
            n = self.agents_per_type.get(t, 0)
            out[t] = {k: (counts[t][k] / n if n else 0.0) for k in ACTION_NAMES}
        return out

    def mean_initiated(self) -> Dict[str, Dict[str, float]]:
        return self._means(self.initiated)

    def mean_received(self) -> Dict[str, Dict[str, float]]:
        return self._means(self.received)

    def total_initiated(self) -> int:
        return sum(sum(per.values()) for per in self.initiated.values())

    def proportions(self) -> Dict[str, float]:
        """Share of each action kind among all counted decisions of the run."""
        total = self.total_initiated()
        return {
            k: (sum(self.initiated[t][k] for t in TYPE_NAMES) / total if total else 0.0)
            for k in ACTION_NAMES
        }

    def to_table(self) -> MetricTable:
        columns = [
            Column("moral_type", "str"),
            Column("role", "str", "initiated or received"),
            Column("agents", "int", "agents of this type that ever lived"),
        ]
        columns += [Column(k, "int", f"{k} count") for k in ACTION_NAMES]
        rows = []
        for t in TYPE_NAMES:
            for role, counts in (("initiated", self.initiated), ("received", self.received)):
                row: Dict[str, Any] = {
                    "moral_type": t,
                    "role": role,
                    "agents": self.agents_per_type.get(t, 0),
                }
                row.update(counts[t])
                rows.append(row)
        meta = {
            "proportions": {k: round(v, 6) for k, v in self.proportions().items()},
            "mean_initiated": self.mean_initiated(),
            "mean_received": self.mean_received(),
        }
        return MetricTable(
            "action_distribution", "Action counts per moral type", columns, rows, meta=meta
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "ActionDistribution":
        table.expect("action_distribution")
        agents: Dict[str, int] = {}
        initiated: Dict[str, Dict[str, int]] = {}
        received: Dict[str, Dict[str, int]] = {}
        for row in table.rows:
            agents[row["moral_type"]] = row["agents"]
            target = initiated if row["role"] == "initiated" else received
            target[row["moral_type"]] = {k: row[k] for k in ACTION_NAMES}
        return cls(agents, initiated, received)


def compute_action_distributions(source: EventSource) -> ActionDistribution:
    events = load_events(source)
    roster = build_roster(events)
    agents = Counter(r.moral_type for r in roster.values())
    initiated = {t: {k: 0 for k in ACTION_NAMES} for t in TYPE_NAMES}
    received = {t: {k: 0 for k in ACTION_NAMES} for t in TYPE_NAMES}
    for event in _decisions(events):
        if event.nullified:
            continue
        initiated[roster[event.actor_id].moral_type][event.kind] += 1
        for receiver in _agent_receivers(event, roster):
            received[roster[receiver].moral_type][event.kind] += 1
    return ActionDistribution({t: agents.get(t, 0) for t in TYPE_NAMES}, initiated, received)


# ---------------------------------------------------------------------------
# HP attribution
# ---------------------------------------------------------------------------


def hp_cause(event: EventRecord) -> str:
    """Label for the HP changes an event carries: the action kind, or the
    environment event kind (death carries its cause)."""
    if event.kind == SystemEventKind.DEATH.value:
        return f"death:{event.parameters.get('cause', 'unknown')}"
    return event.kind


@dataclass
class HPAttribution:
    """Total HP gained and lost by agents per cause, and each agent's HP by step."""

    gains: Dict[str, int]
    losses: Dict[str, int]
    trajectories: Dict[str, List[Dict[str, Any]]]

    def final_hp(self, agent_id: str) -> int:
        points = self.trajectories[agent_id]
        return points[-1]["hp"] if points else 0

    def to_table(self) -> MetricTable:
        causes = sorted(set(self.gains) | set(self.losses))
        columns = [
            Column("cause", "str", "action kind or environment event"),
            Column("gain", "int", "total HP gained by agents"),
            Column("loss", "int", "total HP lost by agents (negative)"),
        ]
        rows = [
            {"cause": c, "gain": self.gains.get(c, 0), "loss": self.losses.get(c, 0)}
            for c in causes
        ]
        return MetricTable(
            "hp_attribution",
            "HP gain and loss by cause; per-agent trajectories in meta",
            columns,
            rows,
            meta={"trajectories": self.trajectories},
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "HPAttribution":
        table.expect("hp_attribution")
        gains = {r["cause"]: r["gain"] for r in table.rows if r["gain"]}
        losses = {r["cause"]: r["loss"] for r in table.rows if r["loss"]}
        return cls(gains, losses, dict(table.meta["trajectories"]))


def compute_hp_attribution(source: EventSource) -> HPAttribution:
    events = load_events(source)
    roster = build_roster(events)
    gains: Counter = Counter()
    losses: Counter = Counter()
    hp: Dict[str, int] = defaultdict(int)
    trajectories: Dict[str, List[Dict[str, Any]]] = {agent_id: [] for agent_id in roster}
    open_points: Dict[str, Dict[str, Any]] = {}

    for event in events:
        cause = hp_cause(event)
        for entity, delta in event.hp_deltas.items():
            if entity not in roster:
                continue
            if delta > 0:
                gains[cause] += delta
            else:
                losses[cause] += delta
            hp[entity] += delta
            point = open_points.get(entity)
            if point is None or point["step"] != event.step:
                point = {"step": event.step, "hp": 0, "causes": {}}
                trajectories[entity].append(point)
                open_points[entity] = point
            point["hp"] = hp[entity]
            point["causes"][cause] = point["causes"].get(cause, 0) + delta
    return HPAttribution(dict(sorted(gains.items())), dict(sorted(losses.items())), trajectories)


# ---------------------------------------------------------------------------
# Hunts
# ---------------------------------------------------------------------------


@dataclass
class HuntTrace:
    """Damage shares for one prey and the allocations its hunters made afterwards."""

    prey_id: str
    max_hp: int
    spawn_step: int
    damage: Dict[str, int] = field(default_factory=dict)
    attempts: int = 0
    killer: Optional[str] = None
    kill_step: Optional[int] = None
    kill_seq: Optional[int] = None
    reward: int = 0
    transfers: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def total_damage(self) -> int:
        return sum(self.damage.values())

    @property
    def killed(self) -> bool:
        return self.killer is not None

    def to_dict(self) -> Dict[str, Any]:
        data = vars(self).copy()
        data["total_damage"] = self.total_damage
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HuntTrace":
        data = {k: v for k, v in data.items() if k != "total_damage"}
        return cls(**data)


def _trace_hunts(events: Sequence[EventRecord], window: int) -> Dict[str, HuntTrace]:
    traces: Dict[str, HuntTrace] = {}
    # hunter -> kills they took part in, newest last
    kills_by_hunter: Dict[str, List[HuntTrace]] = defaultdict(list)

    for event in events:
        if event.kind == SystemEventKind.PREY_SPAWN.value:
            prey_id = event.targets[0]
            traces[prey_id] = HuntTrace(prey_id, int(event.parameters["max_hp"]), event.step)
        elif event.kind == ActionKind.HUNT.value and not event.nullified:
            trace = traces.get(event.targets[0]) if event.targets else None
            if trace is None:
                continue
            trace.attempts += 1
            damage = int(event.parameters.get("damage", 0))
            if damage:
                trace.damage[event.actor_id] = trace.damage.get(event.actor_id, 0) + damage
            if event.parameters.get("killed"):
                trace.killer = event.actor_id
                trace.kill_step = event.step
                trace.kill_seq = event.seq
                trace.reward = int(event.parameters.get("reward", 0))
                for hunter in trace.damage:
                    kills_by_hunter[hunter].append(trace)
        elif event.kind == ActionKind.ALLOCATE.value and not event.nullified:
            for trace in reversed(kills_by_hunter.get(event.actor_id, [])):
                if event.step - trace.kill_step <= window:
                    for recipient, amount in event.parameters.get("received", {}).items():
                        trace.transfers.append(
                            {
                                "step": event.step,
                                "seq": event.seq,
                                "donor": event.actor_id,
                                "recipient": recipient,
                                "amount": amount,
                            }
                        )
                    break
    return traces


@dataclass
class HuntTraces:
    window: int
    traces: List[HuntTrace]

    def to_table(self) -> MetricTable:
        columns = [
            Column("prey_id", "str"),
            Column("max_hp", "int"),
            Column("spawn_step", "int"),
            Column("damage", "dict[str,int]", "damage dealt per hunter"),
            Column("attempts", "int"),
            Column("killer", "str"),
            Column("kill_step", "int"),
            Column("kill_seq", "int"),
            Column("reward", "int", "HP the killer actually gained"),
            Column("transfers", "list[object]", "hunter allocations within the window"),
            Column("total_damage", "int"),
        ]
        return MetricTable(
            "hunt_traces",
            "Damage shares and post-kill sharing per killed prey",
            columns,
            [t.to_dict() for t in self.traces],
            meta={"window": self.window},
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "HuntTraces":
        table.expect("hunt_traces")
        return cls(table.meta["window"], [HuntTrace.from_dict(r) for r in table.rows])


def compute_hunt_traces(source: EventSource, window: int = HUNT_SHARE_WINDOW) -> HuntTraces:
    events = load_events(source)
    traces = _trace_hunts(events, window)
    return HuntTraces(window, [t for t in traces.values() if t.killed])


def collaboration_trace(
    source: EventSource, prey_id: str, window: int = HUNT_SHARE_WINDOW
) -> Optional[HuntTrace]:
    """The trace for one prey, killed or not."""
    return _trace_hunts(load_events(source), window).get(prey_id)


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------


def _node(record: AgentRecord, last: int) -> Dict[str, Any]:
    end = record.death_step if record.death_step is not None else last
    return {
        "agent_id": record.agent_id,
        "moral_type": record.moral_type,
        "birth_step": record.birth_step,
        "death_step": record.death_step,
        "lifespan": end - record.birth_step,
    }


@dataclass
class LineageGraph:
    """Parent to child edges over every agent."""

    nodes: List[Dict[str, Any]]
    edges: List[Tuple[str, str]]

    def roots(self) -> List[str]:
        children = {child for _, child in self.edges}
        return [n["agent_id"] for n in self.nodes if n["agent_id"] not in children]

    def is_forest(self) -> bool:
        parents: Dict[str, str] = {}
        for parent, child in self.edges:
            if child in parents:
                return False
            parents[child] = parent
        for node in parents:
            seen = set()
            while node in parents:
                if node in seen:
                    return False
                seen.add(node)
                node = parents[node]
        return True

    def to_table(self) -> MetricTable:
        columns = [Column("parent", "str"), Column("child", "str")]
        rows = [{"parent": p, "child": c} for p, c in self.edges]
        return MetricTable(
            "lineage_graph", "Parent to child edges", columns, rows, meta={"nodes": self.nodes}
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "LineageGraph":
        table.expect("lineage_graph")
        return cls(list(table.meta["nodes"]), [(r["parent"], r["child"]) for r in table.rows])


@dataclass
class CommunicationGraph:
    """Sender to receiver edges weighted by delivered message count."""

    nodes: List[Dict[str, Any]]
    weights: Dict[Tuple[str, str], int]

    def out_degree(self) -> Dict[str, int]:
        totals: Counter = Counter()
        for (sender, _), weight in self.weights.items():
            totals[sender] += weight
        return dict(totals)

    def to_table(self) -> MetricTable:
        columns = [
            Column("sender", "str"),
            Column("receiver", "str"),
            Column("weight", "int", "communicate records delivered from sender to receiver"),
        ]
        rows = [
            {"sender": s, "receiver": r, "weight": w} for (s, r), w in sorted(self.weights.items())
        ]
        return MetricTable(
            "communication_graph",
            "Message edges between agents",
            columns,
            rows,
            meta={"nodes": self.nodes},
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "CommunicationGraph":
        table.expect("communication_graph")
        weights = {(r["sender"], r["receiver"]): r["weight"] for r in table.rows}
        return cls(list(table.meta["nodes"]), weights)


def build_networks(source: EventSource) -> Tuple[LineageGraph, CommunicationGraph]:
    events = load_events(source)
    roster = build_roster(events)
    last = final_step(events)
    nodes = [_node(r, last) for r in roster.values()]
    lineage = [(r.parent_id, r.agent_id) for r in roster.values() if r.parent_id is not None]

    weights: Counter = Counter()
    for event in _decisions(events):
        if event.kind != ActionKind.COMMUNICATE.value or event.nullified:
            continue
        for receiver in event.parameters.get("deliveries", event.targets):
            weights[(event.actor_id, receiver)] += 1
    return LineageGraph(nodes, lineage), CommunicationGraph(nodes, dict(weights))
