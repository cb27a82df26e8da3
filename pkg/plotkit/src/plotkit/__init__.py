"""Figure rendering for the valueqp simulation CSV logs."""

from .csvio import (
    CsvTable,
    MissingColumnError,
    SchemaError,
    read_table,
)
from .figures import FIGURE_KINDS, PlotSpec, UsageError, plot

__all__ = [
    "CsvTable",
    "MissingColumnError",
    "SchemaError",
    "read_table",
    "FIGURE_KINDS",
    "PlotSpec",
    "UsageError",
    "plot",
]
