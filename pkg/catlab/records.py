"""
CSV result files.

Every float is written with 17 significant digits so values round-trip exactly.
Files are UTF-8 with LF line endings and an optional leading
``# generated <timestamp>`` comment line.
"""

import csv
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def format_value(value: Any) -> str:
    """Format one CSV cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if value is None:
        return ""
    return str(value)


def _open(path: Path, deterministic: bool):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    f = open(path, "w", encoding="utf-8", newline="")
    if not deterministic:
        f.write(f"# generated {datetime.now().isoformat(timespec='seconds')}\n")
    return f


def write_csv(
    path: Path,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    deterministic: bool = True,
) -> Path:
    """Write a header row and value rows."""
    with _open(path, deterministic) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return Path(path)


def write_dicts(path: Path, rows: Sequence[dict], deterministic: bool = True) -> Path:
    """Write rows sharing the keys of the first row."""
    if not rows:
        raise ValueError("no rows to write")
    header = list(rows[0].keys())
    return write_csv(path, header, ([row[k] for k in header] for row in rows), deterministic)


def write_blocks(
    path: Path,
    blocks: Sequence[tuple[str, np.ndarray]],
    deterministic: bool = True,
) -> Path:
    """Write named matrices as ``block,<name>,<rows>,<cols>`` followed by value lines."""
    with _open(path, deterministic) as f:
        writer = csv.writer(f, lineterminator="\n")
        for name, value in blocks:
            arr = np.atleast_2d(np.asarray(value, dtype=float))
            if np.ndim(value) == 1:
                arr = arr.T
            writer.writerow(["block", name, arr.shape[0], arr.shape[1]])
            for row in arr:
                writer.writerow([format_value(v) for v in row])
    return Path(path)


def read_blocks(path: Path) -> dict[str, np.ndarray]:
    """Read a block file written by :func:`write_blocks` into 2-D arrays."""
    blocks: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8", newline="") as f:
        lines = [line for line in csv.reader(f) if line and not line[0].startswith("#")]

    i = 0
    while i < len(lines):
        head = lines[i]
        if head[0] != "block" or len(head) != 4:
            raise ValueError(f"{path}: expected block header, got {','.join(head)!r}")
        name, rows, cols = head[1], int(head[2]), int(head[3])
        values = lines[i + 1 : i + 1 + rows]
        if len(values) != rows or any(len(r) != cols for r in values):
            raise ValueError(f"{path}: block {name!r} is truncated")
        blocks[name] = np.array([[float(v) for v in r] for r in values]).reshape(rows, cols)
        i += 1 + rows
    return blocks
