"""Reading of thermalizer harness CSV/meta pairs.

The CSV carries a `# thermalizer-csv schema=N kind=...` comment line, then a
column header, then string rows. The sibling `<name>.meta.json` declares the
schema version and column list this package validates against.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

SUPPORTED_SCHEMA = "1"


class FiggenError(RuntimeError):
    """Input data unusable for rendering (missing columns, empty rows, ...)."""


@dataclass
class Table:
    path: Path
    kind: str
    columns: list[str]
    rows: list[dict]

    def floats(self, column: str, rows: list[dict] | None = None) -> list[float]:
        out = []
        for row in rows if rows is not None else self.rows:
            raw = row.get(column, "")
            out.append(float(raw) if raw not in ("", None) else math.nan)
        return out

    def reached_rows(self) -> list[dict]:
        if "reached" not in self.columns:
            return self.rows
        return [r for r in self.rows if r.get("reached") == "true"]


def meta_path_for(csv_path: Path) -> Path:
    return csv_path.with_suffix("").with_suffix(".meta.json") \
        if csv_path.suffix == ".csv" else csv_path.with_suffix(".meta.json")


def load_table(path: str | Path, required: tuple[str, ...] = ()) -> Table:
    path = Path(path)
    if not path.exists():
        raise FiggenError(f"{path}: no such CSV")
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# thermalizer-csv"):
            raise FiggenError(f"{path}: missing thermalizer-csv header line")
        header = dict(part.split("=", 1) for part in first.split()[2:])
        reader = csv.reader(fh)
        columns = next(reader, None)
        if columns is None:
            raise FiggenError(f"{path}: no column header")
        rows = [dict(zip(columns, row)) for row in reader]
    if header.get("schema") != SUPPORTED_SCHEMA:
        raise FiggenError(
            f"{path}: schema {header.get('schema')!r} unsupported "
            f"(expected {SUPPORTED_SCHEMA})")

    meta_file = path.parent / (path.stem + ".meta.json")
    if meta_file.exists():
        meta = json.loads(meta_file.read_text())
        if str(meta.get("schema")) != SUPPORTED_SCHEMA:
            raise FiggenError(f"{meta_file}: schema mismatch")
        declared = meta.get("columns", columns)
        if declared != columns:
            raise FiggenError(
                f"{path}: columns differ from the meta declaration")
    missing = [c for c in required if c not in columns]
    if missing:
        raise FiggenError(f"{path}: missing columns {missing}")
    if not rows:
        raise FiggenError(f"{path}: no data rows")
    return Table(path=path, kind=header.get("kind", ""), columns=columns,
                 rows=rows)
