"""
Run archive.

A run directory holds everything analysis and resume need:

    run_meta.json             seed, variant, backend, config, status
    events.jsonl              one EventRecord per line, append-only
    checkpoint_<step>.json    world snapshots
    transcripts/<agent>.jsonl chat exchanges, one file per agent
    progress.log              per-step summaries (INFO and up)
    errors.log                diagnostics (WARNING and up)
"""

import json
import logging
import os
import re
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Union

from moral_sim import settings
from moral_sim.config import SimulationConfig, config_hash, config_to_dict, validate_config
from moral_sim.errors import ArchiveError, CheckpointError, ConfigError
from moral_sim.models import EventRecord
from moral_sim.responses import SimJSONEncoder, dumps_canonical
from moral_sim.world import Checkpoint

logger = logging.getLogger(__name__)

META_FILE = "run_meta.json"
EVENTS_FILE = "events.jsonl"
PROGRESS_LOG = "progress.log"
ERRORS_LOG = "errors.log"
TRANSCRIPTS_DIR = "transcripts"

_CHECKPOINT_RE = re.compile(r"^checkpoint_(\d+)\.json$")
_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class RunManifest:
    """Identity of one CLI invocation's run."""

    run_id: str
    config_path: Optional[str]
    variant: str
    backend: str
    output_dir: str


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _make_run_dir(parent: Path, seed: int) -> Path:
    """Create a fresh run_<timestamp>_seed<seed> directory, suffixing on collision."""
    parent.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = f"run_{stamp}_seed{seed}"
    candidate = parent / base
    n = 1
    while True:
        try:
            candidate.mkdir()
            return candidate
        except FileExistsError:
            candidate = parent / f"{base}-{n}"
            n += 1


class RunArchive:
    """Handle on a run directory; appends while running, reads for analysis."""

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        self._meta: Optional[Dict[str, Any]] = None
        self._events: Optional[List[EventRecord]] = None
        self._transcript_lock = threading.Lock()

    # -- creation -----------------------------------------------------------

    @classmethod
    def create(
        cls,
        config: SimulationConfig,
        *,
        parent: Optional[Union[str, Path]] = None,
        run_dir: Optional[Union[str, Path]] = None,
        variant: str = "baseline",
        backend: str = "scripted",
        config_path: Optional[str] = None,
    ) -> "RunArchive":
        """Create a new run directory and write its run_meta.json.

        Args:
            config: The run's final (variant-applied) config.
            parent: Directory that receives run_<timestamp>_seed<seed>. Defaults to
                MORALSIM_RUNS_DIR.
            run_dir: Exact directory to use instead; must be empty or absent.

        Raises:
            ArchiveError: If the directory is not empty or cannot be created.
        """
        try:
            if run_dir is not None:
                path = Path(run_dir)
                if path.exists() and any(path.iterdir()):
                    raise ArchiveError(f"Run directory {path} is not empty")
                path.mkdir(parents=True, exist_ok=True)
            else:
                parent_dir = Path(parent) if parent else settings.runs_dir()
                path = _make_run_dir(parent_dir, config.rng_seed)
        except OSError as e:
            raise ArchiveError(f"Cannot create run directory: {e}") from None

        archive = cls(path)
        archive._meta = {
            "run_id": path.name,
            "seed": config.rng_seed,
            "variant": variant,
            "backend": backend,
            "config_path": config_path,
            "config": config_to_dict(config),
            "config_hash": config_hash(config),
            "status": "created",
            "termination_reason": None,
            "final_step": None,
            "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }
        archive._write_meta()
        archive.events_path.touch()
        archive._events = []
        logger.info("Created run directory %s", path)
        return archive

    @classmethod
    def open(cls, run_dir: Union[str, Path]) -> "RunArchive":
        archive = cls(run_dir)
        if not archive.meta_path.exists():
            raise ArchiveError(
                f"{run_dir} is not a run directory (no {META_FILE}). "
                "Pass the directory created by 'moral-sim run'."
            )
        if "config" not in archive.meta:
            raise ArchiveError(f"{archive.meta_path} has no config")
        return archive

    # -- paths and metadata -------------------------------------------------

    @property
    def meta_path(self) -> Path:
        return self.run_dir / META_FILE

    @property
    def events_path(self) -> Path:
        return self.run_dir / EVENTS_FILE

    @property
    def transcripts_dir(self) -> Path:
        return self.run_dir / TRANSCRIPTS_DIR

    @property
    def meta(self) -> Dict[str, Any]:
        if self._meta is None:
            try:
                self._meta = json.loads(self.meta_path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as e:
                raise ArchiveError(f"Cannot read {self.meta_path}: {e}") from None
        return self._meta

    @property
    def config(self) -> SimulationConfig:
        try:
            return validate_config(self.meta["config"])
        except (KeyError, ConfigError) as e:
            raise ArchiveError(f"run_meta.json holds no valid config: {e}") from None

    @property
    def run_id(self) -> str:
        return self.meta["run_id"]

    def manifest(self) -> RunManifest:
        meta = self.meta
        return RunManifest(
            run_id=meta["run_id"],
            config_path=meta.get("config_path"),
            variant=meta.get("variant", "baseline"),
            backend=meta.get("backend", "scripted"),
            output_dir=str(self.run_dir),
        )

    def update_meta(self, **fields: Any) -> None:
        self.meta.update(fields)
        self._write_meta()

    def _write_meta(self) -> None:
        _write_atomic(
            self.meta_path, json.dumps(self._meta, indent=2, sort_keys=True, cls=SimJSONEncoder)
        )

    # -- event log ----------------------------------------------------------

    def append_events(self, events: Iterable[EventRecord]) -> int:
        """Append records to events.jsonl. Returns the number written."""
        batch = list(events)
        if not batch:
            return 0
        lines = [dumps_canonical(e.to_dict()) for e in batch]
        with open(self.events_path, "a", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        if self._events is not None:
            self._events.extend(batch)
        return len(lines)

    def load_events(self) -> List[EventRecord]:
        """Read the full event log (cached until the next append or truncate).

        Raises:
            ArchiveError: If the log is missing or a line is not a valid record.
        """
        if self._events is not None:
            return self._events
        if not self.events_path.exists():
            raise ArchiveError(f"No {EVENTS_FILE} in {self.run_dir}")
        events: List[EventRecord] = []
        with open(self.events_path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    events.append(EventRecord.from_dict(json.loads(line)))
                except (json.JSONDecodeError, TypeError) as e:
                    raise ArchiveError(
                        f"Corrupt event log {self.events_path} at line {lineno}: {e}"
                    ) from None
        self._events = events
        return events

    def events(self) -> List[EventRecord]:
        return self.load_events()

    def truncate_events(self, count: int) -> None:
        """Keep only the first count records of the log."""
        events = self.load_events()[:count]
        text = "".join(dumps_canonical(e.to_dict()) + "\n" for e in events)
        _write_atomic(self.events_path, text)
        self._events = list(events)

    # -- checkpoints --------------------------------------------------------

    def checkpoint_path(self, step: int) -> Path:
        return self.run_dir / f"checkpoint_{step}.json"

    def write_checkpoint(self, checkpoint: Checkpoint) -> Path:
        path = self.checkpoint_path(checkpoint.step)
        _write_atomic(path, checkpoint.to_json())
        return path

    def checkpoint_steps(self) -> List[int]:
        steps = []
        for entry in self.run_dir.iterdir():
            match = _CHECKPOINT_RE.match(entry.name)
            if match:
                steps.append(int(match.group(1)))
        return sorted(steps)

    def load_checkpoint(self, step: Optional[int] = None) -> Checkpoint:
        """Load the checkpoint for a step, or the latest one.

        Raises:
            CheckpointError: If no such checkpoint exists or it is corrupt.
        """
        steps = self.checkpoint_steps()
        if not steps:
            raise CheckpointError(f"No checkpoints in {self.run_dir}")
        if step is None:
            step = steps[-1]
        elif step not in steps:
            raise CheckpointError(
                f"No checkpoint for step {step} in {self.run_dir}. "
                f"Available: {', '.join(str(s) for s in steps)}"
            )
        try:
            text = self.checkpoint_path(step).read_text(encoding="utf-8")
        except OSError as e:
            raise CheckpointError(f"Cannot read checkpoint for step {step}: {e}") from None
        return Checkpoint.from_json(text)

    def discard_checkpoints_after(self, step: int) -> List[int]:
        dropped = [s for s in self.checkpoint_steps() if s > step]
        for s in dropped:
            self.checkpoint_path(s).unlink()
        if dropped:
            logger.warning(
                "Discarded %d checkpoint(s) after step %d: %s",
                len(dropped),
                step,
                ", ".join(str(s) for s in dropped),
            )
        return dropped

    # -- transcripts --------------------------------------------------------

    def append_transcript(self, agent_id: str, record: Dict[str, Any]) -> None:
        with self._transcript_lock:
            self.transcripts_dir.mkdir(exist_ok=True)
            path = self.transcripts_dir / f"{agent_id}.jsonl"
            with open(path, "a", encoding="utf-8") as f:
                f.write(dumps_canonical(record) + "\n")

    def load_transcript(self, agent_id: str) -> List[Dict[str, Any]]:
        path = self.transcripts_dir / f"{agent_id}.jsonl"
        if not path.exists():
            return []
        with open(path, encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]

    # -- run logging --------------------------------------------------------

    @contextmanager
    def logging_handlers(self) -> Iterator[None]:
        """Attach progress.log and errors.log to the moral_sim logger for a run."""
        package_logger = logging.getLogger("moral_sim")
        formatter = logging.Formatter(_LOG_FORMAT)
        progress = logging.FileHandler(self.run_dir / PROGRESS_LOG, encoding="utf-8")
        progress.setLevel(logging.INFO)
        progress.setFormatter(formatter)
        errors = logging.FileHandler(self.run_dir / ERRORS_LOG, encoding="utf-8")
        errors.setLevel(logging.WARNING)
        errors.setFormatter(formatter)

        previous_level = package_logger.level
        if package_logger.getEffectiveLevel() > logging.INFO:
            package_logger.setLevel(logging.INFO)
        package_logger.addHandler(progress)
        package_logger.addHandler(errors)
        try:
            yield
        finally:
            package_logger.removeHandler(progress)
            package_logger.removeHandler(errors)
            progress.close()
            errors.close()
            package_logger.setLevel(previous_level)
