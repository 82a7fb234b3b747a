"""Figure rendering for tidy figdata CSV tables.

Three kinds cover every table the measurement pipeline exports: "ecdf"
(series/x/y step curves), "bar" (category/value columns drawn tallest
first) and "heatmap" (series/x/y cell grids with annotated shares).
Rendering is pure batch work over the CSV alone; the same file and kind
always produce the same PNG bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be set first

KINDS = ("ecdf", "bar", "heatmap")

ECDF_COLUMNS = ("series", "x", "y")
BAR_COLUMNS = ("category", "value")
HEATMAP_COLUMNS = ("series", "x", "y")

# every style input is pinned so re-rendering a CSV reproduces the
# output file byte for byte
_STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.titlesize": 11,
}


class FigureError(Exception):
    """Base for everything this package raises on purpose."""


class SchemaError(FigureError):
    """Header or cell contents do not match the declared kind."""


class EmptyTableError(FigureError):
    """No data rows; nothing is rendered and no file is written."""


@dataclass(frozen=True)
class FigData:
    """One exported table: a name, its header, and string-valued rows."""

    name: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]


def load_figdata(path) -> FigData:
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            columns = tuple(next(reader))
        except StopIteration:
            raise EmptyTableError(f"{path.name}: no header row") from None
        rows = tuple(tuple(cells) for cells in reader)
    if not rows:
        raise EmptyTableError(f"{path.name}: no data rows")
    for index, cells in enumerate(rows, start=2):
        if len(cells) != len(columns):
            raise SchemaError(f"{path.name} line {index}: "
                              f"{len(cells)} cells for {len(columns)} columns")
    name = path.stem
    if name.startswith("figdata_"):
        name = name[len("figdata_"):]
    return FigData(name=name, columns=columns, rows=rows)


def _check_header(fig: FigData, expected: tuple[str, ...]) -> None:
    if fig.columns == expected:
        return
    for got, want in zip(fig.columns, expected):
        if got != want:
            raise SchemaError(f"expected column {want!r}, found {got!r}")
    if len(fig.columns) < len(expected):
        raise SchemaError(f"missing column {expected[len(fig.columns)]!r}")
    raise SchemaError(f"unexpected column {fig.columns[len(expected)]!r}")


def _number(column: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise SchemaError(
            f"column {column!r}: not a number: {text!r}") from None
    if math.isnan(value):
        raise SchemaError(f"column {column!r}: NaN is not allowed")
    return value


def prepare_ecdf(fig: FigData) -> dict[str, list[tuple[float, float]]]:
    """Points per series, sorted by x, checked to be a valid CDF."""
    _check_header(fig, ECDF_COLUMNS)
    series: dict[str, list[tuple[float, float]]] = {}
    for label, x, y in fig.rows:
        series.setdefault(label, []).append((_number("x", x),
                                             _number("y", y)))
    for label, points in series.items():
        points.sort()
        last = 0.0
        for x, y in points:
            if not 0.0 <= y <= 1.0:
                raise FigureError(f"series {label!r}: y={y} outside [0, 1]")
            if y < last:
                raise FigureError(f"series {label!r}: y decreases at x={x}")
            last = y
    return series


def prepare_bar(fig: FigData) -> list[tuple[str, float]]:
    _check_header(fig, BAR_COLUMNS)
    pairs = [(category, _number("value", value))
             for category, value in fig.rows]
    pairs.sort(key=lambda pair: (-pair[1], pair[0]))
    return pairs


def prepare_heatmap(fig: FigData):
    """Row labels, column labels, and the dense value grid (gaps are 0)."""
    _check_header(fig, HEATMAP_COLUMNS)
    row_labels: list[str] = []
    col_labels: list[str] = []
    cells: dict[tuple[str, str], float] = {}
    for series, x, y in fig.rows:
        if (series, x) in cells:
            raise FigureError(f"duplicate cell ({series!r}, {x!r})")
        cells[(series, x)] = _number("y", y)
        if series not in row_labels:
            row_labels.append(series)
        if x not in col_labels:
            col_labels.append(x)
    matrix = [[cells.get((row, col), 0.0) for col in col_labels]
              for row in row_labels]
    return row_labels, col_labels, matrix


def _draw_ecdf(axes, fig: FigData) -> None:
    series = prepare_ecdf(fig)
    for label, points in series.items():
        axes.step([x for x, _ in points], [y for _, y in points],
                  where="post", label=label)
    axes.set_ylim(0.0, 1.05)
    axes.set_ylabel("cumulative fraction")
    axes.grid(True, alpha=0.3)
    if len(series) > 1:
        axes.legend(fontsize=8)


def _draw_bar(axes, fig: FigData) -> None:
    pairs = prepare_bar(fig)
    positions = range(len(pairs))
    axes.bar(positions, [value for _, value in pairs])
    axes.set_xticks(list(positions))
    axes.set_xticklabels([category for category, _ in pairs],
                         rotation=45, ha="right", fontsize=8)
    axes.set_ylabel("value")


def _draw_heatmap(figure, axes, fig: FigData) -> None:
    row_labels, col_labels, matrix = prepare_heatmap(fig)
    image = axes.imshow(matrix, cmap="viridis", aspect="auto")
    axes.set_xticks(range(len(col_labels)))
    axes.set_xticklabels(col_labels, rotation=45, ha="right", fontsize=8)
    axes.set_yticks(range(len(row_labels)))
    axes.set_yticklabels(row_labels, fontsize=8)
    top = max((value for row in matrix for value in row), default=0.0)
    for i, row in enumerate(matrix):
        for j, value in enumerate(row):
            # annotation must stay readable on both ends of the colormap
            color = "black" if top and value > 0.6 * top else "white"
            axes.text(j, i, f"{value:.2f}", ha="center", va="center",
                      fontsize=7, color=color)
    figure.colorbar(image, ax=axes)


def render(infile, outfile, kind: str) -> Path:
    """Draw one figdata CSV as a PNG; returns the written path."""
    if kind not in KINDS:
        raise FigureError(
            f"unknown figure kind {kind!r}; expected one of {', '.join(KINDS)}")
    outfile = Path(outfile)
    if outfile.suffix.lower() != ".png":
        raise FigureError("only .png output is supported")
    fig = load_figdata(infile)
    with plt.rc_context(_STYLE):
        figure, axes = plt.subplots()
        try:
            if kind == "ecdf":
                _draw_ecdf(axes, fig)
            elif kind == "bar":
                _draw_bar(axes, fig)
            else:
                _draw_heatmap(figure, axes, fig)
            axes.set_title(fig.name.replace("_", " "))
            figure.tight_layout()
            figure.savefig(outfile, format="png",
                           metadata={"Software": "render"})
        finally:
            plt.close(figure)
    return outfile
