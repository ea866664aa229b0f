"""Domain types and tabular ingest for spatial single-cell proteomics tables.

The on-disk format is delimiter-separated text with a header row. Required
columns: cell_id, sample_id, x, y. Optional columns: cell_type, status.
Protein intensity columns are named by a sidecar panel file (one protein name
per line) whose order fixes the panel order; a ColumnSchema can remap any of
the fixed column names.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import IntegrityError, ParseError, SchemaError
from .util import sha256_bytes

REQUIRED_COLUMNS = ("cell_id", "sample_id", "x", "y")
OPTIONAL_LABEL_COLUMNS = ("cell_type", "status")


@dataclass(frozen=True)
class ProteinPanel:
    """Ordered, unique protein/marker names. Panel order is load-bearing:
    it is the tie-break order for equal expression and the column order of
    every expression vector."""

    names: tuple[str, ...]

    def __post_init__(self) -> None:
        cleaned = tuple(n.strip() for n in self.names)
        if len(cleaned) < 1:
            raise SchemaError("panel must contain at least one protein name")
        if any(not n for n in cleaned):
            raise SchemaError("panel contains an empty protein name")
        if len(set(cleaned)) != len(cleaned):
            dupes = sorted({n for n in cleaned if cleaned.count(n) > 1})
            raise SchemaError(f"panel names not unique after trimming: {dupes}")
        object.__setattr__(self, "names", cleaned)
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(cleaned)})

    @property
    def size(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]  # type: ignore[attr-defined]
        except KeyError:
            raise SchemaError(f"unknown protein name: {name!r}") from None


@dataclass(frozen=True)
class CellRecord:
    """Row view of one cell. ``expression`` is a read-only length-M vector in
    panel order; ``position`` is (x, y) in image pixel units. Empty-string
    labels mean unlabeled."""

    cell_id: str
    sample_id: str
    expression: np.ndarray
    position: tuple[float, float]
    cell_type: str = ""
    status: str = ""


@dataclass(frozen=True)
class ColumnSchema:
    """Maps logical fields to file column names.

    ``proteins`` lists the protein columns in panel order; when empty the
    panel file supplies both names and order.
    """

    cell_id: str = "cell_id"
    sample_id: str = "sample_id"
    x: str = "x"
    y: str = "y"
    cell_type: str | None = "cell_type"
    status: str | None = "status"
    proteins: tuple[str, ...] = ()


class Dataset:
    """Immutable cell x protein table with coordinates and labels.

    Stored column-wise (numpy arrays plus label lists) so ranking and
    classification stay vectorized; ``cell()`` gives a per-row view.
    """

    def __init__(
        self,
        panel: ProteinPanel,
        cell_ids: Sequence[str],
        sample_ids: Sequence[str],
        expression: np.ndarray,
        positions: np.ndarray,
        cell_types: Sequence[str] | None = None,
        statuses: Sequence[str] | None = None,
        type_vocabulary: Sequence[str] | None = None,
        status_vocabulary: Sequence[str] | None = None,
    ) -> None:
        n = len(cell_ids)
        if n < 1:
            raise IntegrityError("dataset must contain at least one cell")
        expression = np.asarray(expression, dtype=np.float64)
        positions = np.asarray(positions, dtype=np.float64)
        if expression.shape != (n, panel.size):
            raise IntegrityError(
                f"expression shape {expression.shape} does not match "
                f"{n} cells x {panel.size} panel proteins"
            )
        if positions.shape != (n, 2):
            raise IntegrityError(f"positions shape {positions.shape} is not ({n}, 2)")
        if not np.isfinite(expression).all():
            raise IntegrityError("expression contains non-finite values")
        if not np.isfinite(positions).all():
            raise IntegrityError("positions contain non-finite values")
        if (expression < 0).any():
            raise IntegrityError("expression intensities must be non-negative")
        if len(sample_ids) != n:
            raise IntegrityError("sample_ids length does not match cell count")

        self.panel = panel
        self.cell_ids = list(map(str, cell_ids))
        self.sample_ids = list(map(str, sample_ids))
        self.expression = expression
        self.positions = positions
        self.cell_types = [""] * n if cell_types is None else list(map(str, cell_types))
        self.statuses = [""] * n if statuses is None else list(map(str, statuses))
        if len(self.cell_types) != n or len(self.statuses) != n:
            raise IntegrityError("label column length does not match cell count")

        seen: set[str] = set()
        for cid in self.cell_ids:
            if cid in seen:
                raise IntegrityError(f"duplicate cell_id: {cid!r}")
            seen.add(cid)

        self.type_vocabulary = _vocabulary(self.cell_types, type_vocabulary, "cell_type")
        self.status_vocabulary = _vocabulary(self.statuses, status_vocabulary, "status")

        # all cells of a sample must agree on status
        per_sample_status: dict[str, str] = {}
        for sid, st in zip(self.sample_ids, self.statuses):
            prev = per_sample_status.setdefault(sid, st)
            if prev != st:
                raise IntegrityError(
                    f"sample {sid!r} carries conflicting status labels "
                    f"({prev!r} vs {st!r})"
                )

        self.sample_index: dict[str, np.ndarray] = {}
        order: list[str] = []
        for sid in self.sample_ids:
            if sid not in self.sample_index:
                order.append(sid)
        sample_arr = np.asarray(self.sample_ids)
        for sid in order:
            self.sample_index[sid] = np.flatnonzero(sample_arr == sid)

        self.expression.setflags(write=False)
        self.positions.setflags(write=False)

    def __len__(self) -> int:
        return len(self.cell_ids)

    @property
    def n_cells(self) -> int:
        return len(self.cell_ids)

    def cell(self, i: int) -> CellRecord:
        return CellRecord(
            cell_id=self.cell_ids[i],
            sample_id=self.sample_ids[i],
            expression=self.expression[i],
            position=(float(self.positions[i, 0]), float(self.positions[i, 1])),
            cell_type=self.cell_types[i],
            status=self.statuses[i],
        )

    def cells(self) -> Iterator[CellRecord]:
        for i in range(len(self)):
            yield self.cell(i)

    def index_of_cell(self, cell_id: str) -> int:
        try:
            return self.cell_ids.index(cell_id)
        except ValueError:
            raise KeyError(f"unknown cell_id: {cell_id!r}") from None


def _vocabulary(
    labels: Sequence[str], explicit: Sequence[str] | None, what: str
) -> tuple[str, ...]:
    observed = {lab for lab in labels if lab}
    if explicit is None:
        return tuple(sorted(observed))
    vocab = tuple(explicit)
    missing = sorted(observed - set(vocab))
    if missing:
        raise IntegrityError(f"{what} labels outside vocabulary: {missing}")
    return vocab


# ---------------------------------------------------------------------------
# ingest / serialize
# ---------------------------------------------------------------------------


def read_panel(path: str | Path) -> ProteinPanel:
    """Panel sidecar: one protein name per line, order fixes panel order."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    names = [ln.strip() for ln in lines if ln.strip()]
    return ProteinPanel(tuple(names))


def _delimiter_for(path: Path, delimiter: str | None) -> str:
    if delimiter is not None:
        return delimiter
    return "," if path.suffix.lower() == ".csv" else "\t"


def _parse_float(raw: str, line_no: int, column: str, *, allow_negative: bool) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(
            f"line {line_no}, column {column!r}: cannot parse {raw!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise ParseError(f"line {line_no}, column {column!r}: non-finite value {raw!r}")
    if not allow_negative and value < 0:
        raise ParseError(f"line {line_no}, column {column!r}: negative intensity {raw!r}")
    return value


def ingest(
    cells_path: str | Path,
    panel: ProteinPanel | str | Path,
    schema: ColumnSchema | None = None,
    delimiter: str | None = None,
) -> Dataset:
    """Read a cells table into a validated Dataset. Row order becomes cell
    index order.

    Raises SchemaError for missing columns, ParseError (with line and column)
    for bad values, IntegrityError for duplicate ids or per-sample status
    conflicts.
    """
    cells_path = Path(cells_path)
    if not cells_path.exists():
        raise SchemaError(f"cells file not found: {cells_path}")
    if not isinstance(panel, ProteinPanel):
        panel = read_panel(panel)
    schema = schema or ColumnSchema()
    if not schema.proteins:
        schema = replace(schema, proteins=panel.names)
    if len(schema.proteins) != panel.size:
        raise SchemaError(
            f"schema lists {len(schema.proteins)} protein columns "
            f"but panel has {panel.size}"
        )

    with open(cells_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter=_delimiter_for(cells_path, delimiter))
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{cells_path}: empty file, expected a header row") from None
        col_pos = {name: i for i, name in enumerate(header)}

        def require(col: str) -> int:
            if col not in col_pos:
                raise SchemaError(f"missing required column: {col!r}")
            return col_pos[col]

        i_id = require(schema.cell_id)
        i_sample = require(schema.sample_id)
        i_x = require(schema.x)
        i_y = require(schema.y)
        i_type = col_pos.get(schema.cell_type) if schema.cell_type else None
        i_status = col_pos.get(schema.status) if schema.status else None
        i_prot = [require(c) for c in schema.proteins]

        cell_ids: list[str] = []
        sample_ids: list[str] = []
        cell_types: list[str] = []
        statuses: list[str] = []
        expr_rows: list[list[float]] = []
        pos_rows: list[tuple[float, float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"line {line_no}: expected {len(header)} fields, found {len(row)}"
                )
            cell_ids.append(row[i_id].strip())
            sample_ids.append(row[i_sample].strip())
            pos_rows.append(
                (
                    _parse_float(row[i_x], line_no, schema.x, allow_negative=True),
                    _parse_float(row[i_y], line_no, schema.y, allow_negative=True),
                )
            )
            cell_types.append(row[i_type].strip() if i_type is not None else "")
            statuses.append(row[i_status].strip() if i_status is not None else "")
            expr_rows.append(
                [
                    _parse_float(row[j], line_no, schema.proteins[k], allow_negative=False)
                    for k, j in enumerate(i_prot)
                ]
            )

    if not cell_ids:
        raise IntegrityError(f"{cells_path}: no data rows")
    return Dataset(
        panel=panel,
        cell_ids=cell_ids,
        sample_ids=sample_ids,
        expression=np.asarray(expr_rows, dtype=np.float64),
        positions=np.asarray(pos_rows, dtype=np.float64),
        cell_types=cell_types,
        statuses=statuses,
    )


def _format_value(v: float) -> str:
    # repr round-trips exactly through float(); integers stay compact
    if float(v).is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(float(v))


def serialize_cells(dataset: Dataset, delimiter: str = "\t") -> str:
    """Render the cells table; ingest of the result reproduces the dataset."""
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(list(REQUIRED_COLUMNS) + list(OPTIONAL_LABEL_COLUMNS) + list(dataset.panel.names))
    for i in range(len(dataset)):
        writer.writerow(
            [
                dataset.cell_ids[i],
                dataset.sample_ids[i],
                _format_value(dataset.positions[i, 0]),
                _format_value(dataset.positions[i, 1]),
                dataset.cell_types[i],
                dataset.statuses[i],
            ]
            + [_format_value(v) for v in dataset.expression[i]]
        )
    return buf.getvalue()


def write_dataset(dataset: Dataset, out_dir: str | Path, delimiter: str = "\t") -> dict[str, Path]:
    """Write cells.tsv plus panel.txt under ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells_path = out_dir / "cells.tsv"
    panel_path = out_dir / "panel.txt"
    cells_path.write_text(serialize_cells(dataset, delimiter), encoding="utf-8")
    panel_path.write_text("\n".join(dataset.panel.names) + "\n", encoding="utf-8")
    return {"cells": cells_path, "panel": panel_path}


def load_dataset_dir(path: str | Path, delimiter: str | None = None) -> Dataset:
    """Load a directory produced by write_dataset (cells.tsv + panel.txt)."""
    path = Path(path)
    return ingest(path / "cells.tsv", path / "panel.txt", delimiter=delimiter)


def dataset_checksum(dataset: Dataset) -> str:
    """Content hash over the canonical serialization (panel + cells)."""
    payload = "\n".join(dataset.panel.names) + "\n" + serialize_cells(dataset)
    return sha256_bytes(payload.encode("utf-8"))
