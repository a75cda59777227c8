"""Write and read run artifacts: JSON manifests, JSON-lines traces and CSV tables."""

import csv
import io
import json
import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__

logger = logging.getLogger("mcf_nav")

TOOL_NAME = "mcf-nav"
PROVENANCE_FILE = "provenance.json"


def artifact_header(cfg_hash: str) -> dict[str, str]:
    """Provenance block embedded in every artifact."""
    return {"tool": TOOL_NAME, "version": __version__, "config_hash": cfg_hash}


def write_json(path: Path, obj: Any) -> None:
    """Write ``obj`` as canonical JSON (sorted keys, trailing newline)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n")


def write_provenance(directory: Path, cfg_hash: str, files: Iterable[str], **extra: Any) -> Path:
    """Sidecar carrying the provenance block for CSV tables that cannot embed it."""
    path = directory / PROVENANCE_FILE
    write_json(path, {**artifact_header(cfg_hash), "files": sorted(files), **extra})
    return path


def read_json(path: Path) -> Any:
    with path.open(encoding="utf-8") as f:
        return json.load(f)


def write_jsonl(path: Path, entries: Iterable[dict[str, Any]]) -> int:
    """Write entries as JSON lines, replacing any existing file. Returns the line count."""
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for entry in entries:
            f.write(json.dumps(entry, sort_keys=True, ensure_ascii=False) + "\n")
            count += 1
    return count


def load_jsonl(path: Path) -> list[dict[str, Any]]:
    """Load all entries from a JSON-lines file.

    Returns an empty list if the file does not exist; invalid lines are skipped.
    """
    if not path.exists():
        return []
    entries: list[dict[str, Any]] = []
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError:
                    logger.warning("Skipping invalid JSON line in %s: %s", path.name, line[:80])
    return entries


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> int:
    """Write a CSV table with byte-stable float formatting. Returns the row count."""
    path.parent.mkdir(parents=True, exist_ok=True)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([_cell(value) for value in row])
        count += 1
    path.write_text(buffer.getvalue(), encoding="utf-8")
    return count


def read_csv(path: Path) -> list[dict[str, str]]:
    """Read a CSV table into a list of row dicts."""
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))
