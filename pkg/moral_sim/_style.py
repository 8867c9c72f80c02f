"""Terminal output helpers for the CLI; plain text when stdout is not a TTY."""

import sys
from typing import Dict, List, Mapping

_USE_COLOR = hasattr(sys.stdout, "isatty") and sys.stdout.isatty()

BOLD = "\033[1m" if _USE_COLOR else ""
DIM = "\033[2m" if _USE_COLOR else ""
GREEN = "\033[32m" if _USE_COLOR else ""
YELLOW = "\033[33m" if _USE_COLOR else ""
RED = "\033[31m" if _USE_COLOR else ""
RESET = "\033[0m" if _USE_COLOR else ""


def header(version: str, command: str) -> str:
    return f"{BOLD}moral-sim{RESET} {DIM}v{version} {command}{RESET}"


def success(text: str) -> str:
    return f"  {GREEN}ok{RESET} {text}"


def warning(text: str) -> str:
    return f"  {YELLOW}warn{RESET} {text}"


def error(text: str) -> str:
    return f"  {RED}error{RESET} {text}"


def field(label: str, value: object) -> str:
    return f"  {DIM}{label:<14}{RESET}{value}"


def type_counts(counts: Mapping[str, int]) -> str:
    """'universal=2 reciprocal=2 ...' in the given order."""
    return " ".join(f"{name}={n}" for name, n in counts.items())


def box(title: str, lines: List[str]) -> str:
    """Content in a bordered box with a title."""
    width = max([len(line) for line in lines] + [len(title) + 2]) + 4
    top = f"  +- {title} " + "-" * (width - len(title) - 5) + "+"
    bottom = "  +" + "-" * (width - 2) + "+"
    body = "\n".join(f"  | {line.ljust(width - 4)} |" for line in lines)
    return f"{top}\n{body}\n{bottom}"


def grid(rows: List[str], columns: List[str], cells: Dict[str, Dict[str, str]]) -> List[str]:
    """Aligned text table: one line per row label, cells[row][column] as values."""
    label_width = max(len(r) for r in rows) if rows else 0
    widths = [max([len(c)] + [len(cells[r][c]) for r in rows]) for c in columns]
    head = " " * label_width + "  " + "  ".join(c.rjust(w) for c, w in zip(columns, widths))
    lines = [head]
    for r in rows:
        values = "  ".join(cells[r][c].rjust(w) for c, w in zip(columns, widths))
        lines.append(f"{r.ljust(label_width)}  {values}")
    return lines
