#!/usr/bin/env python3
"""
CLI entry point for moral-sim.

Usage:
    # Run a simulation with the scripted policies
    moral-sim run --config configs/baseline.json --backend scripted --seed 42

    # Continue a run from its latest checkpoint
    moral-sim resume --run-dir runs/run_20260101-120000_seed42

    # Build the report bundle
    moral-sim analyze --run-dir runs/run_20260101-120000_seed42

    # Run a mini-game
    moral-sim minigame --scenario scenarios/invitation.json --backend scripted

Exit codes: 0 success, 1 failure during a run (the archive is kept), 2 usage or
configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from moral_sim import __version__, settings
from moral_sim._style import box, error, field, grid, header, success, type_counts, warning
from moral_sim.archive import RunArchive
from moral_sim.cognition import ScriptedBackend
from moral_sim.cognition.schema import policy_response_json_schema
from moral_sim.config import (
    SimulationConfig,
    apply_variant,
    config_to_dict,
    load_config_file,
    validate_config,
    variant_names,
)
from moral_sim.errors import (
    ArchiveError,
    CheckpointError,
    ConfigError,
    ScenarioError,
    SimulationError,
)
from moral_sim.models import PolicyBackend
from moral_sim.responses import make_error, make_response

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

BACKENDS = ("scripted", "llm", "replay")


class UsageError(SimulationError):
    """Bad flag combination or a missing prerequisite, reported with exit status 2."""


def _report_error(
    args: argparse.Namespace, error_type: str, message: str, suggestion: str
) -> None:
    if getattr(args, "json", False):
        print(make_error(error_type, message, suggestion))
    else:
        print(error(message), file=sys.stderr)
        print(f"  {suggestion}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------


def build_backend(
    kind: str,
    config: SimulationConfig,
    transcript_dir: Optional[Path] = None,
    replay_from: Optional[str] = None,
) -> PolicyBackend:
    """Create the policy backend for a run.

    Raises:
        UsageError: For a missing API key or a replay without a source run.
    """
    if kind == "scripted":
        return ScriptedBackend()

    from moral_sim.llm import ChatClient, LLMPolicy, replay_policy

    if kind == "replay":
        if not replay_from:
            raise UsageError("--backend replay needs --replay-from RUN_DIR")
        return replay_policy(RunArchive.open(replay_from), config)

    key = settings.api_key(config.llm.api_key_env)
    if not key:
        raise UsageError(
            f"No API key for the llm backend. Set {config.llm.api_key_env} "
            "(or OPENAI_API_KEY) and run again."
        )
    client = ChatClient.from_params(config.llm, api_key=key)
    archive = RunArchive(transcript_dir) if transcript_dir is not None else None
    return LLMPolicy(client, config, archive=archive)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _final_summary(archive: RunArchive) -> List[str]:
    from moral_sim.analysis import compute_population_series

    meta = archive.meta
    manifest = archive.manifest()
    series = compute_population_series(archive)
    last = series.steps[-1]
    return [
        f"run id:      {manifest.run_id}",
        f"variant:     {manifest.variant} ({manifest.backend})",
        f"seed:        {meta.get('seed')}",
        f"termination: {meta.get('termination_reason')} at step {meta.get('final_step')}",
        f"alive:       {type_counts(series.at(last))}",
        f"births:      {sum(series.births)}  deaths: {sum(series.deaths)}",
        f"directory:   {manifest.output_dir}",
    ]


def _print_outcome(archive: RunArchive) -> None:
    from moral_sim.engine import POPULATION_COLLAPSE

    print(box("Run complete", _final_summary(archive)))
    if archive.meta.get("termination_reason") == POPULATION_COLLAPSE:
        print(warning(f"No agent survived past step {archive.meta.get('final_step')}"))


def cmd_run(args: argparse.Namespace) -> int:
    from moral_sim.engine import run_simulation

    config = load_config_file(args.config)
    config = apply_variant(config, args.variant)
    if args.seed is not None:
        config = validate_config({**config_to_dict(config), "rng_seed": args.seed})

    # Backend setup fails before anything is written
    backend = build_backend(args.backend, config, replay_from=args.replay_from)
    archive = RunArchive.create(
        config,
        parent=args.runs_dir,
        run_dir=args.out_dir,
        variant=args.variant,
        backend="llm" if args.backend == "replay" else args.backend,
        config_path=str(args.config),
    )
    if args.backend == "llm":
        backend.archive = archive  # type: ignore[attr-defined]
    if not args.json:
        print(header(__version__, "run"))
        print(field("run dir", archive.run_dir))
        print(field("variant", args.variant))
        print(field("seed", config.rng_seed))
    try:
        run_simulation(config, backend, archive, variant=args.variant)
    except Exception as e:
        _report_error(args, "run_failed", f"Run failed: {e}", f"See {archive.run_dir}/errors.log")
        return EXIT_RUNTIME

    if args.json:
        hint = f"Analyze with: moral-sim analyze --run-dir {archive.run_dir}"
        print(make_response(dict(archive.meta), hint))
    else:
        _print_outcome(archive)
    return EXIT_OK


def cmd_resume(args: argparse.Namespace) -> int:
    from moral_sim.engine import resume_simulation

    source = RunArchive.open(args.run_dir)
    config = source.config
    steps = source.checkpoint_steps()
    if args.checkpoint_step is not None and args.checkpoint_step not in steps:
        raise CheckpointError(
            f"No checkpoint for step {args.checkpoint_step} in {args.run_dir}. "
            f"Available: {', '.join(str(s) for s in steps) or 'none'}"
        )
    kind = args.backend or source.meta.get("backend", "scripted")
    target = Path(args.out_dir) if args.out_dir else source.run_dir
    backend = build_backend(kind, config, target, args.replay_from)
    try:
        archive = resume_simulation(source.run_dir, backend, args.checkpoint_step, args.out_dir)
    except (CheckpointError, ArchiveError):
        raise
    except Exception as e:
        _report_error(args, "run_failed", f"Resumed run failed: {e}", f"See {target}/errors.log")
        return EXIT_RUNTIME

    if args.json:
        print(make_response(dict(archive.meta), "The run continued to termination"))
    else:
        print(header(__version__, "resume"))
        _print_outcome(archive)
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    from moral_sim.analysis import emit_report, get_agent_profile

    archive = RunArchive.open(args.run_dir)
    if args.agent:
        try:
            profile = get_agent_profile(archive, args.agent)
        except ValueError as e:
            raise UsageError(str(e)) from None
        print(make_response(profile, "HP trajectory entries list the HP at the end of each step"))
        return EXIT_OK

    judge = None
    if args.with_judge:
        from moral_sim.llm import ChatClient, LLMJudge

        params = archive.config.llm
        key = settings.api_key(params.api_key_env)
        if not key:
            raise UsageError(
                f"--with-judge needs an API key in {params.api_key_env} (or OPENAI_API_KEY)"
            )
        judge = LLMJudge(ChatClient.from_params(params, api_key=key), archive=archive)

    bundle = emit_report(
        archive, args.out_dir, judge_backend=judge, judge_trials=args.judge_trials
    )
    if args.json:
        data = {
            "report_dir": str(bundle.out_dir),
            "main_report": str(bundle.main_report),
            "metrics": {name: str(path) for name, path in bundle.metric_files.items()},
            "agents": [str(p) for p in bundle.agent_files],
        }
        print(make_response(data, "Metric files are JSON tables with column metadata"))
    else:
        print(header(__version__, "analyze"))
        print(success(f"Report written to {bundle.out_dir}"))
        print(field("metrics", len(bundle.metric_files)))
        print(field("agent pages", len(bundle.agent_files)))
    return EXIT_OK


def cmd_minigame(args: argparse.Namespace) -> int:
    from moral_sim.minigames import load_scenario_file, run_scenario, write_sweep_results

    spec = load_scenario_file(args.scenario)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.trials is not None:
        updates["trials"] = args.trials
    if updates:
        spec = spec.model_validate({**spec.model_dump(mode="json"), **updates})
    config = spec.config()
    backend = build_backend(args.backend, config, replay_from=args.replay_from)

    results = run_scenario(spec, backend)
    out_dir = Path(args.out_dir) if args.out_dir else settings.runs_dir() / f"minigame_{spec.name}"
    paths = write_sweep_results(results, out_dir)

    if args.json:
        data = {
            "tables": [str(p) for p in paths],
            "failed_trials": sum(len(r.failures()) for r in results),
        }
        print(make_response(data, "Cell aggregates are under meta.cells in each table"))
        return EXIT_OK
    print(header(__version__, "minigame"))
    for result in results:
        cells = {
            row: {
                col: _cell_text(result.cell(row, col)["value"]) for col in result.columns
            }
            for row in result.rows
        }
        print()
        print(f"  {result.name} ({result.statistic})")
        for line in grid(result.rows, result.columns, cells):
            print(f"  {line}")
    print()
    print(success(f"{len(paths)} table(s) written to {out_dir}"))
    return EXIT_OK


def _cell_text(value: Optional[float]) -> str:
    if value is None:
        return "-"
    return f"{value:g}" if float(value).is_integer() else f"{value:.2f}"


def cmd_schema(args: argparse.Namespace) -> int:
    hint = "Policy responses must validate against this schema"
    print(make_response(policy_response_json_schema(), hint, compact=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moral-sim",
        description="Hunter-gatherer moral evolution simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Scripted run of the baseline experiment
  moral-sim run --config configs/baseline.json --backend scripted --seed 42

  # Same experiment with moral types hidden, using the LLM backend
  MORALSIM_API_KEY="sk-..." moral-sim run --config configs/baseline.json \\
      --variant moral_invisible --backend llm

  # Fork a run from its step-5 checkpoint into a new directory
  moral-sim resume --run-dir runs/run_x --checkpoint-step 5 --out-dir runs/run_x_fork

  # Report bundle, then one agent's profile
  moral-sim analyze --run-dir runs/run_x
  moral-sim analyze --run-dir runs/run_x --agent agent_3

  # Invitation mini-game with the scripted policies
  moral-sim minigame --scenario scenarios/invitation.json --backend scripted
""",
    )
    parser.add_argument("--version", action="version", version=f"moral-sim {__version__}")
    parser.add_argument(
        "--log-level",
        default=None,
        help="Logging level (default: MORALSIM_LOG_LEVEL or INFO)",
    )
    parser.add_argument("--json", action="store_true", help="Print machine-readable JSON output")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    run = sub.add_parser("run", help="Run a simulation to termination")
    run.add_argument("--config", required=True, help="Path to a config JSON document")
    run.add_argument(
        "--variant",
        default="baseline",
        help=f"Experiment variant ({', '.join(variant_names())})",
    )
    run.add_argument("--backend", choices=BACKENDS, default="scripted", help="Policy backend")
    run.add_argument("--seed", type=int, default=None, help="Override the config's rng_seed")
    run.add_argument("--out-dir", default=None, help="Exact run directory (must be empty)")
    run.add_argument(
        "--runs-dir",
        default=None,
        help="Parent of new run directories (default: MORALSIM_RUNS_DIR)",
    )
    run.add_argument("--replay-from", default=None, help="With --backend replay: recorded run")
    run.set_defaults(handler=cmd_run)

    resume = sub.add_parser("resume", help="Continue a run from a checkpoint")
    resume.add_argument("--run-dir", required=True, help="Run directory to resume")
    resume.add_argument(
        "--checkpoint-step", type=int, default=None, help="Checkpoint step (default: latest)"
    )
    resume.add_argument("--backend", choices=BACKENDS, default=None, help="Default: the run's")
    resume.add_argument("--out-dir", default=None, help="Fork into this directory instead")
    resume.add_argument("--replay-from", default=None, help="With --backend replay: recorded run")
    resume.set_defaults(handler=cmd_resume)

    analyze = sub.add_parser("analyze", help="Write the report bundle for a run")
    analyze.add_argument("--run-dir", required=True, help="Run directory to analyze")
    analyze.add_argument("--out-dir", default=None, help="Report directory (default: RUN/report)")
    analyze.add_argument("--with-judge", action="store_true", help="Add the LLM moral-type judge")
    analyze.add_argument("--judge-trials", type=int, default=3, help="Judge calls per agent")
    analyze.add_argument("--agent", default=None, help="Print one agent's profile instead")
    analyze.set_defaults(handler=cmd_analyze)

    minigame = sub.add_parser("minigame", help="Run a mini-game scenario")
    minigame.add_argument("--scenario", required=True, help="Path to a scenario JSON document")
    minigame.add_argument("--backend", choices=BACKENDS, default="scripted", help="Policy backend")
    minigame.add_argument("--seed", type=int, default=None, help="Override the scenario seed")
    minigame.add_argument("--trials", type=int, default=None, help="Override trials per cell")
    minigame.add_argument("--out-dir", default=None, help="Directory for the result tables")
    minigame.add_argument("--replay-from", default=None, help="With --backend replay: recorded run")
    minigame.set_defaults(handler=cmd_minigame)

    schema = sub.add_parser("schema", help="Print the policy response JSON schema")
    schema.set_defaults(handler=cmd_schema)
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """Parse arguments, run the command and exit with its status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level()).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        code = args.handler(args)
    except ConfigError as e:
        _report_error(args, "config_error", str(e), "Fix the config document and run again.")
        code = EXIT_USAGE
    except ScenarioError as e:
        _report_error(args, "scenario_error", str(e), "Fix the scenario document and run again.")
        code = EXIT_USAGE
    except CheckpointError as e:
        _report_error(args, "checkpoint_error", str(e), "List checkpoints in the run directory.")
        code = EXIT_USAGE
    except ArchiveError as e:
        _report_error(args, "archive_error", str(e), "Check the run and output directory paths.")
        code = EXIT_USAGE
    except UsageError as e:
        _report_error(args, "usage_error", str(e), "Run 'moral-sim --help' for usage.")
        code = EXIT_USAGE
    except SimulationError as e:
        _report_error(args, "runtime_error", str(e), "See errors.log in the run directory.")
        code = EXIT_RUNTIME
    sys.exit(code)


if __name__ == "__main__":
    main()
