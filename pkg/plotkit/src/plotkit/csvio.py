"""Readers for the versioned simulation CSV schemas.

Every file starts with a ``# <schema-name>`` comment line followed by a
standard CSV header row.  Readers check the schema line and expose the
columns by name; a column that a figure needs but the file lacks raises
:class:`MissingColumnError` naming the column.
"""

from __future__ import annotations

import csv

import numpy as np

RUNLOG_SCHEMA = "valueqp-runlog-v1"
TRACKING_SUMMARY_SCHEMA = "valueqp-tracking-summary-v1"
FREQUENCY_SUMMARY_SCHEMA = "valueqp-frequency-summary-v1"
ABLATION_SUMMARY_SCHEMA = "valueqp-ablation-summary-v1"


class SchemaError(RuntimeError):
    """Schema comment line missing or naming an unsupported schema."""


class MissingColumnError(KeyError):
    """A required column is absent; the message names the column."""

    def __init__(self, column: str, path):
        super().__init__(f"column {column!r} missing from {path}")
        self.column = column


class CsvTable:
    """Columnar view of one schema-tagged CSV file."""

    def __init__(self, schema: str, columns: dict, path):
        self.schema = schema
        self._columns = columns
        self.path = path

    def __contains__(self, name: str) -> bool:
        return name in self._columns

    def column(self, name: str) -> np.ndarray:
        try:
            return self._columns[name]
        except KeyError:
            raise MissingColumnError(name, self.path) from None

    def text_column(self, name: str) -> list:
        return list(self.column(name))

    def numeric(self, name: str) -> np.ndarray:
        return np.asarray(self.column(name), dtype=float)

    @property
    def rows(self) -> int:
        if not self._columns:
            return 0
        return len(next(iter(self._columns.values())))


def read_table(path, expected_schema: str | None = None) -> CsvTable:
    with open(path, newline="") as f:
        first = f.readline().rstrip("\n")
        if not first.startswith("# "):
            raise SchemaError(f"{path}: missing schema comment line")
        schema = first[2:].strip()
        if expected_schema is not None and schema != expected_schema:
            raise SchemaError(
                f"{path}: schema {schema!r}, expected {expected_schema!r}"
            )
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: no header row") from None
        raw = {name: [] for name in header}
        for row in reader:
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}: row with {len(row)} fields, header has {len(header)}"
                )
            for name, value in zip(header, row):
                raw[name].append(value)
    columns = {name: np.array(vals, dtype=object) for name, vals in raw.items()}
    return CsvTable(schema, columns, path)
