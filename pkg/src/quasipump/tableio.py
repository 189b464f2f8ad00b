"""CSV and JSON file handling.

CSV files carry a mandatory header row, optional '#'-prefixed comment lines
(parameter echo) above it, and typed columns: floats are written with
`repr`, the shortest representation that round-trips bit-exactly; ints and
strings pass through unchanged.  The reader infers column types and rejects
malformed files with line numbers.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        raise ValidationError(f"boolean cells are not supported: {value!r}")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
        return repr(v)
    s = str(value)
    if any(ch in s for ch in (",", "\n", "\r", '"')):
        raise ValidationError(f"string cell contains a delimiter or newline: {s!r}")
    return s


def write_csv(path, columns, comments=()):
    """Write named columns to CSV.

    `columns` is a dict name -> sequence (all the same length) or a list of
    (name, sequence) pairs; `comments` become '#'-prefixed lines above the
    header.
    """
    if isinstance(columns, dict):
        columns = list(columns.items())
    if not columns:
        raise ValidationError("cannot write a CSV with no columns")
    names = [str(n) for n, _ in columns]
    for n in names:
        if "," in n or "#" in n:
            raise ValidationError(f"bad column name {n!r}")
    series = [list(vals) for _, vals in columns]
    length = len(series[0])
    for n, vals in zip(names, series):
        if len(vals) != length:
            raise ValidationError(
                f"column {n!r} has {len(vals)} rows, expected {length}")
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            for line in comments:
                fh.write(f"# {line}\n")
            fh.write(",".join(names) + "\n")
            for i in range(length):
                fh.write(",".join(_format_cell(col[i]) for col in series) + "\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"writing CSV {path!r} failed: {exc}") from exc


@dataclass
class CsvTable:
    names: list
    columns: dict
    comments: list

    def __getitem__(self, name):
        return self.columns[name]


def _parse_column(raw: list) -> list:
    try:
        return [int(v) for v in raw]
    except ValueError:
        pass
    try:
        return [float(v) for v in raw]
    except ValueError:
        pass
    return raw


def read_csv(path) -> CsvTable:
    """Read a CSV written by write_csv; returns typed columns."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"reading CSV {path!r} failed: {exc}") from exc
    comments = []
    header = None
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.lstrip().startswith("#"):
            if header is not None:
                raise ValidationError(
                    f"{path}:{lineno}: comment lines must precede the header")
            comments.append(line.lstrip()[1:].strip())
            continue
        cells = line.split(",")
        if header is None:
            header = [c.strip() for c in cells]
            if any(not c for c in header):
                raise ValidationError(f"{path}:{lineno}: empty column name in header")
            continue
        if len(cells) != len(header):
            raise ValidationError(
                f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        rows.append(cells)
    if header is None:
        raise ValidationError(f"{path}: missing header row")
    # a header of numeric-looking names means the real header is absent
    if all(_looks_numeric(c) for c in header):
        raise ValidationError(f"{path}: first row looks like data; missing header")
    columns = {}
    for j, name in enumerate(header):
        columns[name] = _parse_column([r[j] for r in rows])
    return CsvTable(names=header, columns=columns, comments=comments)


def _looks_numeric(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def write_json(path, payload: dict):
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"writing JSON {path!r} failed: {exc}") from exc
    except TypeError as exc:
        raise ValidationError(f"payload for {path!r} is not JSON-serializable: {exc}") from exc


def read_json(path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise OSError(f"reading JSON {path!r} failed: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON: {exc}") from exc
