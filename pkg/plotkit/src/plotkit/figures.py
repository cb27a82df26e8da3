"""Deterministic figure renderers for the simulation CSV logs.

All figures use the Agg backend with a fixed style and write PNGs with
the metadata stripped, so rendering the same input twice produces
identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .csvio import (
    FREQUENCY_SUMMARY_SCHEMA,
    RUNLOG_SCHEMA,
    CsvTable,
    read_table,
)

FIGURE_KINDS = ("tracking", "forces", "frequency-sweep")

LEG_NAMES = ("FL", "FR", "HL", "HR")

_STYLE = {
    "figure.figsize": (7.0, 4.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 10,
    "svg.hashsalt": "plotkit",
}


class UsageError(RuntimeError):
    """Unknown figure kind or malformed spec."""


@dataclass
class PlotSpec:
    kind: str
    inputs: list
    output: str
    title: str = ""
    xlim: tuple | None = None
    ylim: tuple | None = None

    def __post_init__(self) -> None:
        if self.kind not in FIGURE_KINDS:
            raise UsageError(
                f"unknown figure kind {self.kind!r}; expected one of {FIGURE_KINDS}"
            )
        if not self.inputs:
            raise UsageError("at least one input CSV is required")


def _save(fig, path) -> None:
    # a pinned Software key would embed the matplotlib version
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def _figure():
    fig, ax = plt.subplots()
    return fig, ax


def render_tracking(tables: list, spec: PlotSpec):
    """Commanded vs measured horizontal velocity over time."""
    fig, ax = _figure()
    for table in tables:
        t = table.numeric("time")
        ax.plot(t, table.numeric("vx"), label=f"measured {_label(table)}")
        ax.plot(
            t,
            table.numeric("vcmd_x"),
            linestyle="--",
            label=f"commanded {_label(table)}",
        )
    ax.set_xlabel("time [s]")
    ax.set_ylabel("forward velocity [m/s]")
    ax.legend(loc="lower right")
    return fig


def render_forces(tables: list, spec: PlotSpec):
    """Per-leg vertical force during the first second of a run."""
    fig, ax = _figure()
    table = tables[0]
    t = table.numeric("time")
    mask = t <= 1.0
    for i, name in enumerate(LEG_NAMES):
        ax.plot(t[mask], table.numeric(f"f{i}z")[mask], label=name)
    ax.set_xlim(0.0, 1.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("vertical force [N]")
    ax.legend(loc="upper right", ncol=4)
    return fig


def render_frequency_sweep(tables: list, spec: PlotSpec):
    """Tracking error against the value-prediction rate."""
    fig, ax = _figure()
    table = tables[0]
    rate = table.numeric("prediction_rate_hz")
    err = table.numeric("mean_abs_vel_err")
    fell = table.numeric("fell").astype(bool)
    order = np.argsort(rate)
    ax.plot(rate[order], err[order], marker="o", label="tracking error")
    if fell.any():
        ax.plot(
            rate[fell],
            err[fell],
            linestyle="none",
            marker="x",
            markersize=10,
            color="tab:red",
            label="fell",
        )
    ax.set_xscale("log", base=2)
    ax.set_xlabel("prediction rate [Hz]")
    ax.set_ylabel("mean |velocity error| [m/s]")
    ax.legend(loc="upper right")
    return fig


_RENDERERS = {
    "tracking": (render_tracking, RUNLOG_SCHEMA),
    "forces": (render_forces, RUNLOG_SCHEMA),
    "frequency-sweep": (render_frequency_sweep, FREQUENCY_SUMMARY_SCHEMA),
}


def _label(table: CsvTable) -> str:
    from pathlib import Path

    return Path(table.path).stem


def plot(spec: PlotSpec) -> str:
    """Render the requested figure; returns the output path."""
    renderer, schema = _RENDERERS[spec.kind]
    tables = [read_table(p, expected_schema=schema) for p in spec.inputs]
    with plt.style.context(_STYLE):
        fig = renderer(tables, spec)
        if spec.title:
            fig.axes[0].set_title(spec.title)
        if spec.xlim is not None:
            fig.axes[0].set_xlim(*spec.xlim)
        if spec.ylim is not None:
            fig.axes[0].set_ylim(*spec.ylim)
        _save(fig, spec.output)
    return spec.output
