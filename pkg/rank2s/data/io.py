from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from rank2s.data.schema import PointSample, Sample
from rank2s.errors import DimensionMismatch, EmptySample, ParseError


def _data_lines(path: Path) -> Iterable[tuple[int, str]]:
    if not path.exists() or not path.is_file():
        raise ParseError(str(path), None, "file not found")
    with path.open("r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _parse_float(path: Path, lineno: int, token: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(str(path), lineno, f"not a number: {token!r}") from None
    if not np.isfinite(value):
        raise ParseError(str(path), lineno, f"non-finite value: {token!r}")
    return value


def read_column(path: str | Path) -> Sample:
    """Headerless text file with one number per line."""
    file_path = Path(path)
    values: list[float] = []
    for lineno, line in _data_lines(file_path):
        tokens = line.replace(",", " ").split()
        if len(tokens) != 1:
            raise ParseError(str(file_path), lineno, f"expected one value per line, got {len(tokens)}")
        values.append(_parse_float(file_path, lineno, tokens[0]))
    if not values:
        raise ParseError(str(file_path), None, "no observations")
    return Sample(np.asarray(values))


def read_points(path: str | Path) -> PointSample:
    """Headerless CSV, one observation per row, one column per coordinate."""
    file_path = Path(path)
    rows: list[list[float]] = []
    width: int | None = None
    for lineno, line in _data_lines(file_path):
        tokens = next(csv.reader([line]))
        row = [_parse_float(file_path, lineno, tok.strip()) for tok in tokens if tok.strip()]
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(str(file_path), lineno, f"expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise ParseError(str(file_path), None, "no observations")
    try:
        return PointSample(np.asarray(rows))
    except (EmptySample, DimensionMismatch) as exc:
        raise ParseError(str(file_path), None, str(exc)) from None


def write_json(path: str | Path, payload: Any) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow(list(row))
