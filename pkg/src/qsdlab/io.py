"""CSV writers with a self-describing comment header.

Each file starts with ``# key=value`` lines (tool version, config hash,
seed, then table metadata) followed by a CSV header row.  Nothing time-
or host-dependent is written, so equal inputs give byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import __version__


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def header_lines(config_hash: str, seed: int, meta: Mapping[str, object] | None = None) -> list[str]:
    lines = [f"# tool=qsdlab {__version__}", f"# config_hash={config_hash}", f"# seed={seed}"]
    for k, v in (meta or {}).items():
        lines.append(f"# {k}={v}")
    return lines


def write_csv(path: str | Path, columns: Sequence[str], rows: Iterable[Sequence], *, config_hash: str,
              seed: int, meta: Mapping[str, object] | None = None) -> Path:
    """Write a headed CSV file and return its path."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with p.open("w", newline="") as fh:
        for line in header_lines(config_hash, seed, meta):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return p


def write_text(path: str | Path, text: str, *, config_hash: str, seed: int,
               meta: Mapping[str, object] | None = None) -> Path:
    """Write a headed plain-text artifact."""
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    body = "\n".join(header_lines(config_hash, seed, meta)) + "\n" + text.rstrip("\n") + "\n"
    p.write_text(body)
    return p


def read_csv(path: str | Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    """Read a headed CSV: ``(meta, columns, rows)``."""
    meta, data = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v
            else:
                data.append(line)
    rows = list(csv.reader(data))
    return meta, rows[0] if rows else [], rows[1:]
