"""CSV tables with fixed float formatting, and atomic JSON writes."""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Sequence

FLOAT_FORMAT = "{:.16e}"  # 17 significant digits, round-trips every double


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return FLOAT_FORMAT.format(v)
    return str(v)


def parse_value(s: str):
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    if s in ("true", "false"):
        return s == "true"
    return s


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(format_value(r.get(c, float("nan"))) for c in columns))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: parse_value(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_json(path, obj) -> None:
    _atomic_write(Path(path), json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
