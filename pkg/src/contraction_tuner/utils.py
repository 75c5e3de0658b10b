"""Utility functions for contraction-tuner."""

import csv
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def setup_logging(level: str = "INFO", format_str: Optional[str] = None, file_path: Optional[str] = None) -> None:
    """Set up logging configuration."""
    if format_str is None:
        format_str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    handlers: List[logging.Handler] = [logging.StreamHandler()]
    if file_path:
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(file_path))

    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=format_str,
        handlers=handlers,
        force=True,
    )


def sanitize_name(name: str) -> str:
    """Make a benchmark or method name safe for use in a file name."""
    sanitized = re.sub(r"[^a-zA-Z0-9_.-]", "-", name)
    sanitized = re.sub(r"^-+|-+$", "", sanitized)
    sanitized = re.sub(r"-+", "-", sanitized)
    return sanitized or "unnamed"


def format_duration(seconds: float) -> str:
    """Format duration in seconds to human-readable string."""
    if seconds < 1:
        return f"{seconds * 1000:.1f}ms"
    elif seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = seconds / 60
        return f"{minutes:.1f}m"
    else:
        hours = seconds / 3600
        return f"{hours:.1f}h"


def write_json(path: PathLike, payload: str) -> Path:
    """Write an already serialised JSON document, creating parent directories."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(payload + "\n", encoding="utf-8")
    return target


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    """Write rows under a header line."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return target


def read_csv(path: PathLike) -> List[Dict[str, str]]:
    """Read a CSV file into dictionaries keyed by the header."""
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def write_jsonl(path: PathLike, lines: Iterable[str]) -> int:
    """Write JSON lines; returns the number written."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(target, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line)
            f.write("\n")
            count += 1
    return count


def read_jsonl(path: PathLike) -> List[str]:
    """Read the non-empty lines of a JSON-lines file."""
    with open(path, encoding="utf-8") as f:
        return [line for line in (raw.strip() for raw in f) if line]
