"""
Moral-type judging: does an agent's behavior reveal its moral type?

A judge backend reads one agent's chronological action record with its moral type
hidden and returns a probability per type. Averaged by true type, these form the
soft confusion matrix.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Protocol, Tuple, runtime_checkable

import numpy as np

from moral_sim import settings
from moral_sim.analysis.metrics import (
    TYPE_NAMES,
    Column,
    EventSource,
    MetricTable,
    build_roster,
    load_events,
)
from moral_sim.cognition.observation import render_event
from moral_sim.models import ENVIRONMENT_ID, EventRecord
from moral_sim.responses import dumps_canonical

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 3
DIGEST_BUDGET_BYTES = 12000
_ROW_TOLERANCE = 1e-6


@runtime_checkable
class JudgeBackend(Protocol):
    kind: str

    def judge(self, agent_id: str, digest: str) -> Mapping[str, float]: ...


def behavior_digest(
    events: List[EventRecord], agent_id: str, budget_bytes: int = DIGEST_BUDGET_BYTES
) -> str:
    """Chronological record of the agent's own decisions and the decisions aimed at it.

    Environment records are left out so the moral type never leaks. When the record
    exceeds the byte budget the oldest lines are dropped.
    """
    lines = [
        dumps_canonical(render_event(e))
        for e in events
        if e.actor_id != ENVIRONMENT_ID and (e.actor_id == agent_id or agent_id in e.targets)
    ]
    kept: List[str] = []
    used = 0
    for line in reversed(lines):
        size = len(line.encode("utf-8")) + 1
        if used + size > budget_bytes:
            break
        kept.append(line)
        used += size
    kept.reverse()
    header = f"Action record of {agent_id} ({len(kept)} of {len(lines)} events, oldest first):"
    return "\n".join([header, *kept])


def _normalized(agent_id: str, probs: Mapping[str, float]) -> np.ndarray:
    vector = np.array([float(probs.get(t, 0.0)) for t in TYPE_NAMES], dtype=float)
    if np.any(vector < 0) or vector.sum() <= 0:
        raise ValueError(f"judge returned an unusable vector for {agent_id}: {dict(probs)}")
    return vector / vector.sum()


@dataclass
class SoftConfusionMatrix:
    """Mean judged probability per (true type, judged type).

    Rows exist only for true types with at least one judged agent.
    """

    rows: Dict[str, Dict[str, float]]
    agents: Dict[str, int]
    trials: int
    excluded: Dict[str, str] = field(default_factory=dict)

    def as_array(self) -> np.ndarray:
        """4x4 array in canonical type order; missing rows are NaN."""
        matrix = np.full((len(TYPE_NAMES), len(TYPE_NAMES)), np.nan)
        for i, true_type in enumerate(TYPE_NAMES):
            if true_type in self.rows:
                matrix[i] = [self.rows[true_type][t] for t in TYPE_NAMES]
        return matrix

    def accuracy(self) -> float:
        """Mean probability mass on the true type, over judged agents."""
        total = sum(self.agents.get(t, 0) for t in self.rows)
        if total == 0:
            return 0.0
        return sum(self.rows[t][t] * self.agents[t] for t in self.rows) / total

    def to_table(self) -> MetricTable:
        columns = [Column("true_type", "str"), Column("agents", "int")]
        columns += [Column(t, "float", f"mean probability judged {t}") for t in TYPE_NAMES]
        rows = []
        for true_type in TYPE_NAMES:
            if true_type not in self.rows:
                continue
            row: Dict[str, Any] = {"true_type": true_type, "agents": self.agents[true_type]}
            row.update({t: round(self.rows[true_type][t], 9) for t in TYPE_NAMES})
            rows.append(row)
        return MetricTable(
            "soft_confusion",
            "Judged moral type probabilities by true type",
            columns,
            rows,
            meta={"trials": self.trials, "excluded": self.excluded},
        )

    @classmethod
    def from_table(cls, table: MetricTable) -> "SoftConfusionMatrix":
        table.expect("soft_confusion")
        rows = {r["true_type"]: {t: r[t] for t in TYPE_NAMES} for r in table.rows}
        agents = {r["true_type"]: r["agents"] for r in table.rows}
        return cls(rows, agents, table.meta["trials"], dict(table.meta.get("excluded", {})))


def judge_moral_types(
    source: EventSource,
    judge_backend: JudgeBackend,
    trials: int = DEFAULT_TRIALS,
    budget_bytes: int = DIGEST_BUDGET_BYTES,
    max_workers: Optional[int] = None,
) -> SoftConfusionMatrix:
    """Judge every agent `trials` times and average by true moral type.

    Per-agent calls run on a thread pool. An agent whose judge call fails on any
    trial is excluded and listed with the reason.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    events = load_events(source)
    roster = build_roster(events)
    digests = {agent_id: behavior_digest(events, agent_id, budget_bytes) for agent_id in roster}

    def judge_one(agent_id: str) -> Tuple[str, np.ndarray]:
        samples = [
            _normalized(agent_id, judge_backend.judge(agent_id, digests[agent_id]))
            for _ in range(trials)
        ]
        return agent_id, np.mean(samples, axis=0)

    vectors: Dict[str, np.ndarray] = {}
    excluded: Dict[str, str] = {}
    workers = max_workers or settings.parallel_workers()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(judge_one, agent_id): agent_id for agent_id in roster}
        for future in as_completed(futures):
            agent_id = futures[future]
            try:
                _, vector = future.result()
                vectors[agent_id] = vector
            except Exception as e:
                excluded[agent_id] = str(e)
                logger.warning("Judge failed for %s, excluding it: %s", agent_id, e)

    rows: Dict[str, Dict[str, float]] = {}
    agents: Dict[str, int] = {}
    for true_type in TYPE_NAMES:
        # Fixed agent order keeps the floating-point sums reproducible
        members = [a for a in roster if roster[a].moral_type == true_type and a in vectors]
        if not members:
            continue
        mean = np.mean([vectors[a] for a in members], axis=0)
        if abs(mean.sum() - 1.0) > _ROW_TOLERANCE:
            mean = mean / mean.sum()
        rows[true_type] = {t: float(p) for t, p in zip(TYPE_NAMES, mean)}
        agents[true_type] = len(members)
    return SoftConfusionMatrix(rows, agents, trials, dict(sorted(excluded.items())))
