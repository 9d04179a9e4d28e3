"""Render dindip harness outputs as figures.

Consumes only the harness's file formats: comma-separated CSV with an
optional leading '# units:' comment and a header row, and binary PGM (P5,
maxval 255).  Three figure kinds are supported:

  heatmap     - a grid CSV ((alpha, beta) mean iterations, or (k, alpha)
                success probability) pivoted onto a colored matrix
  curves      - trajectory/curve CSV panels: loss (log scale by default)
                and signal error against the iteration/time column
  image-strip - PGM snapshots side by side with their labels

Inputs whose headers do not match a known harness schema are refused with a
SchemaError naming the missing columns.  Rendering never mutates inputs, and
the Agg backend makes re-rendering byte-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


class SchemaError(ValueError):
    """Input file does not carry the expected harness schema."""


# grid schemas: (x column, y column, value column) in CSV terms
GRID_SCHEMAS = (
    {"x": "beta", "y": "alpha", "value": "mean_iterations"},
    {"x": "alpha", "y": "k", "value": "success_probability"},
)

# curve schemas share a leading index column and a loss column
CURVE_INDEX_COLUMNS = ("tau", "t")


@dataclass
class FigureSpec:
    kind: str  # heatmap | curves | image-strip
    inputs: list[str]
    output: str
    labels: list[str] = field(default_factory=list)
    logy: bool = True
    dpi: int = 150


def read_harness_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, "r") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: empty CSV")
    columns = lines[0].split(",")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric data rows ({exc})") from exc
    if data.ndim != 2 or data.shape[1] != len(columns):
        raise SchemaError(f"{path}: ragged rows")
    return columns, data


def read_pgm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    if fields[0] != b"P5" or int(fields[3]) != 255:
        raise SchemaError(f"{path}: expected binary PGM with maxval 255")
    width, height = int(fields[1]), int(fields[2])
    pos += 1
    img = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    return img.reshape(height, width).astype(np.float64)


def _require(columns: list[str], needed, path) -> None:
    missing = [c for c in needed if c not in columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")


def _pivot(columns, data, schema):
    xs = np.unique(data[:, columns.index(schema["x"])])
    ys = np.unique(data[:, columns.index(schema["y"])])
    grid = np.full((ys.size, xs.size), np.nan)
    for row in data:
        i = int(np.searchsorted(ys, row[columns.index(schema["y"])]))
        j = int(np.searchsorted(xs, row[columns.index(schema["x"])]))
        grid[i, j] = row[columns.index(schema["value"])]
    if np.isnan(grid).any():
        raise SchemaError("grid CSV does not cover a full cartesian grid")
    return xs, ys, grid


def build_heatmap(spec: FigureSpec):
    if len(spec.inputs) != 1:
        raise SchemaError("heatmap takes exactly one CSV input")
    columns, data = read_harness_csv(spec.inputs[0])
    schema = next(
        (s for s in GRID_SCHEMAS if all(k in columns for k in (s["x"], s["y"], s["value"]))),
        None,
    )
    if schema is None:
        raise SchemaError(
            f"{spec.inputs[0]}: header matches no grid schema "
            f"(need alpha/beta/mean_iterations or k/alpha/success_probability)"
        )
    xs, ys, grid = _pivot(columns, data, schema)
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="viridis")
    ax.set_xticks(range(xs.size), [f"{v:g}" for v in xs])
    ax.set_yticks(range(ys.size), [f"{v:g}" for v in ys])
    ax.set_xlabel(schema["x"])
    ax.set_ylabel(schema["y"])
    fig.colorbar(im, ax=ax, label=schema["value"])
    fig.tight_layout()
    return fig, {"grid": grid, "x": xs, "y": ys, "value": schema["value"]}


def build_curves(spec: FigureSpec):
    if not spec.inputs:
        raise SchemaError("curves needs at least one CSV input")
    panels = []
    for path in spec.inputs:
        columns, data = read_harness_csv(path)
        index = next((c for c in CURVE_INDEX_COLUMNS if c in columns), None)
        if index is None:
            raise SchemaError(f"{path}: missing column(s) tau or t")
        _require(columns, ["loss"], path)
        panels.append((path, columns, data, index))
    has_err = any("err_signal" in cols for _, cols, _, _ in panels)
    ncols = 2 if has_err else 1
    fig, axes = plt.subplots(1, ncols, figsize=(5.0 * ncols, 3.6), squeeze=False)
    ax_loss = axes[0][0]
    payload = {"loss": [], "err_signal": []}
    for i, (path, columns, data, index) in enumerate(panels):
        xs = data[:, columns.index(index)]
        ys = data[:, columns.index("loss")]
        label = spec.labels[i] if i < len(spec.labels) else Path(path).stem
        marker = "o" if xs.size == 1 else None
        ax_loss.plot(xs, ys, label=label, marker=marker)
        payload["loss"].append((xs, ys))
        if has_err and "err_signal" in columns:
            es = data[:, columns.index("err_signal")]
            axes[0][1].plot(xs, es, label=label, marker=marker)
            payload["err_signal"].append((xs, es))
    if spec.logy:
        ax_loss.set_yscale("log")
    ax_loss.set_xlabel(panels[0][3])
    ax_loss.set_ylabel("loss")
    ax_loss.legend(fontsize=8)
    if has_err:
        axes[0][1].set_xlabel(panels[0][3])
        axes[0][1].set_ylabel("err_signal")
        axes[0][1].legend(fontsize=8)
    fig.tight_layout()
    return fig, payload


def build_image_strip(spec: FigureSpec):
    if not spec.inputs:
        raise SchemaError("image-strip needs at least one PGM input")
    images = [read_pgm(p) for p in spec.inputs]
    labels = [
        spec.labels[i] if i < len(spec.labels) else Path(p).stem
        for i, p in enumerate(spec.inputs)
    ]
    fig, axes = plt.subplots(1, len(images), figsize=(2.6 * len(images), 3.0), squeeze=False)
    for ax, img, label in zip(axes[0], images, labels):
        ax.imshow(img, cmap="gray", vmin=0, vmax=255, interpolation="nearest")
        ax.set_title(label, fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.tight_layout()
    return fig, {"images": images, "labels": labels}


_BUILDERS = {
    "heatmap": build_heatmap,
    "curves": build_curves,
    "image-strip": build_image_strip,
}


def build(spec: FigureSpec):
    """Build the matplotlib figure plus the plotted arrays (for verification)."""
    if spec.kind not in _BUILDERS:
        raise SchemaError(f"unknown figure kind {spec.kind!r}")
    return _BUILDERS[spec.kind](spec)


def render(spec: FigureSpec) -> Path:
    """Build and write the figure; deterministic for fixed inputs."""
    fig, _ = build(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, dpi=spec.dpi)
    finally:
        plt.close(fig)
    return out
