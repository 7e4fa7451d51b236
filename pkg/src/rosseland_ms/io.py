"""Locale-independent, byte-reproducible writers for CSV, JSON and field files."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .grid import Grid, ScalarField


def fmt(x) -> str:
    """17 significant digits in exponent form; ``nan``/``inf`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.16e}"


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_csv(path):
    text = Path(path).read_text(encoding="utf-8").strip().splitlines()
    header = text[0].split(",")
    return header, np.array([[float(v) for v in line.split(",")] for line in text[1:]])


def _dump(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _dump(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return json.dumps(fmt(x)) if not math.isfinite(x) else fmt(x)
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float printed to 17 significant digits."""
    return _dump(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8", newline="\n")


def write_field(path, field: ScalarField) -> None:
    """First line ``dim n1 [n2]`` (node counts), then one value per line in C order."""
    shape = field.grid.nodes_shape
    head = " ".join(str(v) for v in (len(shape),) + shape)
    body = "\n".join(fmt(v) for v in field.values)
    Path(path).write_text(head + "\n" + body + "\n", encoding="utf-8", newline="\n")


def read_field(path):
    """Return ``(node_shape, values)`` from a field file."""
    lines = Path(path).read_text(encoding="utf-8").split()
    dim = int(lines[0])
    shape = tuple(int(v) for v in lines[1 : 1 + dim])
    values = np.array([float(v) for v in lines[1 + dim :]])
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} values, found {values.size}")
    return shape, values


def field_from_file(path, grid: Grid) -> ScalarField:
    shape, values = read_field(path)
    if shape != grid.nodes_shape:
        raise ValueError(f"{path}: node shape {shape} does not match grid {grid.nodes_shape}")
    return ScalarField(grid, values)


def write_xy(path, x, y) -> None:
    """Two whitespace-separated columns, one point per line."""
    lines = [f"{fmt(a)} {fmt(b)}" for a, b in zip(np.ravel(x), np.ravel(y))]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
