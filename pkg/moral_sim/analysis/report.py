"""
Report bundle for a finished run.

Layout under the output directory:

    main_report.md          summary, population, social dynamics, key metrics, agent index
    metrics/<name>.json     one MetricTable per metric
    agents/<agent_id>.json  profiles of founders and notable descendants

The bundle holds no timestamps, so re-running on the same archive rewrites
identical bytes.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

from moral_sim.analysis.judge import DEFAULT_TRIALS, JudgeBackend, judge_moral_types
from moral_sim.analysis.metrics import (
    ACTION_NAMES,
    HUNT_SHARE_WINDOW,
    TYPE_NAMES,
    MetricTable,
    build_networks,
    build_roster,
    compute_action_distributions,
    compute_hp_attribution,
    compute_hunt_traces,
    compute_lifespans,
    compute_mortality,
    compute_population_series,
)
from moral_sim.analysis.tools import get_agent_profile
from moral_sim.archive import RunArchive
from moral_sim.errors import ArchiveError
from moral_sim.responses import SimJSONEncoder

logger = logging.getLogger(__name__)

MAIN_REPORT = "main_report.md"
METRICS_DIR = "metrics"
AGENTS_DIR = "agents"
NOTABLE_DESCENDANTS = 5
TOP_COMMUNICATORS = 5


@dataclass
class ReportBundle:
    out_dir: Path
    main_report: Path
    metric_files: Dict[str, Path] = field(default_factory=dict)
    agent_files: List[Path] = field(default_factory=list)


def _dump(data: object) -> str:
    return json.dumps(data, indent=2, sort_keys=True, cls=SimJSONEncoder) + "\n"


def load_metric_table(path: Union[str, Path]) -> MetricTable:
    try:
        return MetricTable.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError) as e:
        raise ArchiveError(f"Cannot read metric table {path}: {e}") from None


def notable_agents(archive: RunArchive) -> List[str]:
    """Founders plus the longest-lived non-founders."""
    events = archive.load_events()
    roster = build_roster(events)
    last = max((e.step for e in events), default=0)
    founders = [r.agent_id for r in roster.values() if r.founder]

    def span(agent_id: str) -> int:
        record = roster[agent_id]
        end = record.death_step if record.death_step is not None else last
        return end - record.birth_step

    descendants = [r.agent_id for r in roster.values() if not r.founder]
    # Stable sort keeps birth order among equal lifespans
    descendants.sort(key=span, reverse=True)
    return founders + descendants[:NOTABLE_DESCENDANTS]


def _pct(value: float) -> str:
    return f"{value * 100:.1f}%"


def _markdown_table(headers: List[str], rows: List[List[object]]) -> List[str]:
    lines = ["| " + " | ".join(headers) + " |", "|" + "---|" * len(headers)]
    lines += ["| " + " | ".join(str(v) for v in row) + " |" for row in rows]
    return lines


def emit_report(
    archive: RunArchive,
    out_dir: Optional[Union[str, Path]] = None,
    judge_backend: Optional[JudgeBackend] = None,
    judge_trials: int = DEFAULT_TRIALS,
    hunt_window: int = HUNT_SHARE_WINDOW,
) -> ReportBundle:
    """Compute every metric for a run and write the report bundle.

    Args:
        archive: The run to analyze.
        out_dir: Target directory; defaults to <run_dir>/report.
        judge_backend: When given, the soft confusion matrix is added.
        judge_trials: Judge calls per agent, averaged.
        hunt_window: Steps after a kill in which allocations count as sharing it.

    Raises:
        ArchiveError: If the event log is unreadable or the directory is not writable.
    """
    out = Path(out_dir) if out_dir is not None else archive.run_dir / "report"
    events = archive.load_events()
    population = compute_population_series(events)
    lifespans = compute_lifespans(events)
    actions = compute_action_distributions(events)
    hp = compute_hp_attribution(events)
    mortality = compute_mortality(events)
    hunts = compute_hunt_traces(events, hunt_window)
    lineage, communication = build_networks(events)
    tables = [
        population.to_table(),
        lifespans.to_table(),
        actions.to_table(),
        hp.to_table(),
        mortality.to_table(),
        hunts.to_table(),
        lineage.to_table(),
        communication.to_table(),
    ]
    confusion = None
    if judge_backend is not None:
        confusion = judge_moral_types(events, judge_backend, trials=judge_trials)
        tables.append(confusion.to_table())

    bundle = ReportBundle(out_dir=out, main_report=out / MAIN_REPORT)
    try:
        (out / METRICS_DIR).mkdir(parents=True, exist_ok=True)
        (out / AGENTS_DIR).mkdir(parents=True, exist_ok=True)
        for table in tables:
            path = out / METRICS_DIR / f"{table.name}.json"
            path.write_text(_dump(table.to_dict()), encoding="utf-8")
            bundle.metric_files[table.name] = path

        agent_ids = notable_agents(archive)
        for agent_id in agent_ids:
            path = out / AGENTS_DIR / f"{agent_id}.json"
            path.write_text(_dump(get_agent_profile(events, agent_id)), encoding="utf-8")
            bundle.agent_files.append(path)

        meta = archive.meta
        lines = [f"# Run report: {archive.run_id}", "", "## Summary", ""]
        lines += [
            f"- Seed: {meta.get('seed')}",
            f"- Variant: {meta.get('variant')}",
            f"- Backend: {meta.get('backend')}",
            f"- Status: {meta.get('status')}",
            f"- Termination: {meta.get('termination_reason')} at step {meta.get('final_step')}",
            f"- Events: {len(events)}",
            "",
            "## Population",
            "",
        ]
        first, last = population.steps[0], population.steps[-1]
        start, end = population.at(first), population.at(last)
        born = sum(population.births)
        died = sum(population.deaths)
        lines += _markdown_table(
            ["moral type", f"step {first}", f"step {last}", "share at end", "mean lifespan"],
            [
                [
                    t,
                    start[t],
                    end[t],
                    _pct(population.ratios(last)[t]),
                    _mean_lifespan(lifespans.records, t),
                ]
                for t in TYPE_NAMES
            ],
        )
        lines += ["", f"Births: {born}. Deaths: {died}.", "", "## Social dynamics", ""]
        top = sorted(communication.out_degree().items(), key=lambda kv: (-kv[1], kv[0]))
        lines += [
            f"- Lineage network: {len(lineage.nodes)} agents, {len(lineage.edges)} parent links, "
            f"{len(lineage.roots())} roots",
            f"- Communication network: {len(communication.weights)} directed pairs, "
            f"{sum(communication.weights.values())} deliveries",
            "- Top communicators: "
            + (", ".join(f"{a} ({n})" for a, n in top[:TOP_COMMUNICATORS]) or "none"),
            f"- Prey killed: {len(hunts.traces)}; "
            f"shared within {hunt_window} steps: {sum(1 for t in hunts.traces if t.transfers)}",
            "",
            "## Key metrics",
            "",
            "### Action proportions",
            "",
        ]
        proportions = actions.proportions()
        lines += _markdown_table(
            ["action", "share", *[f"mean per {t}" for t in TYPE_NAMES]],
            [
                [k, _pct(proportions[k])]
                + [f"{actions.mean_initiated()[t][k]:.2f}" for t in TYPE_NAMES]
                for k in ACTION_NAMES
            ],
        )
        lines += ["", "### HP by cause", ""]
        causes = sorted(set(hp.gains) | set(hp.losses))
        lines += _markdown_table(
            ["cause", "gain", "loss"],
            [[c, hp.gains.get(c, 0), hp.losses.get(c, 0)] for c in causes],
        )
        lines += ["", "### Mortality", ""]
        all_causes = sorted({c for per in mortality.by_cause.values() for c in per})
        lines += _markdown_table(
            ["moral type", *all_causes],
            [[t, *[mortality.by_cause[t].get(c, 0) for c in all_causes]] for t in TYPE_NAMES],
        )
        if confusion is not None:
            lines += ["", "### Moral type judgement", ""]
            lines += _markdown_table(
                ["true type", "agents", *TYPE_NAMES],
                [
                    [t, confusion.agents[t], *[f"{confusion.rows[t][j]:.3f}" for j in TYPE_NAMES]]
                    for t in TYPE_NAMES
                    if t in confusion.rows
                ],
            )
            if confusion.excluded:
                lines += ["", f"Excluded agents: {', '.join(sorted(confusion.excluded))}"]
        lines += ["", "## Agent index", ""]
        lines += [f"- [{a}]({AGENTS_DIR}/{a}.json)" for a in agent_ids]
        bundle.main_report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArchiveError(f"Cannot write report to {out}: {e}") from None

    logger.info("Report for %s written to %s", archive.run_id, out)
    return bundle


def _mean_lifespan(records: list, moral_type: str) -> str:
    spans = [r.lifespan for r in records if r.moral_type == moral_type]
    return f"{sum(spans) / len(spans):.1f}" if spans else "-"
