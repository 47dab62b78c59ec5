"""CSV helpers shared by every artifact writer.

Format: '#'-prefixed ``key = value`` metadata lines, one comma-separated column
header line, then data rows. Floats are written with 17 significant digits so
they parse back to the identical double. LF line endings.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def fmt_float(v: float) -> str:
    return "%.17g" % v


def fmt_meta_value(v) -> str:
    if isinstance(v, float):
        return fmt_float(v)
    if isinstance(v, (list, tuple)):
        return ",".join(fmt_meta_value(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def write_csv(path, meta: dict, columns, rows) -> None:
    lines = [f"# {k} = {fmt_meta_value(v)}" for k, v in meta.items()]
    lines.append(",".join(columns))
    for row in np.asarray(rows, dtype=np.float64).reshape(len(rows), -1):
        lines.append(",".join(fmt_float(v) for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Returns (metadata strings, column names, float data)."""
    meta: dict[str, str] = {}
    columns: list[str] | None = None
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = v.strip()
            continue
        if columns is None:
            columns = [c.strip() for c in line.split(",")]
            continue
        rows.append([float(v) for v in line.split(",")])
    if columns is None:
        raise ValueError(f"{path}: no column header line")
    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(columns))
    return meta, columns, data


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=False) + "\n")
