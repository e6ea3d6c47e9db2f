"""Atomic file writes and the CSV dialect shared by all exporters.

Every artifact is written to a temporary file in the destination directory
and moved into place, so readers never observe partial output.  CSV uses
'.' decimals, ',' separators, a header row, and LF line endings.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

__all__ = ["atomic_write_text", "write_csv", "format_float"]


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return path


def format_float(value) -> str:
    """repr-roundtrip float formatting; integers stay integral."""
    v = float(value)
    if not math.isfinite(v):
        return repr(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=",", lineterminator="\n")
    writer.writerow(list(header))
    for row in rows:
        writer.writerow([format_float(v) if isinstance(v, (int, float)) else v for v in row])
    return atomic_write_text(path, buf.getvalue())
