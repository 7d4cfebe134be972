"""Figure jobs and renderers.

Pixel content is a pure function of the input CSVs and the style
constants below: the drawers reshape and draw harness numbers, never
derive new ones. Output is deterministic (Agg backend, fixed style, no
timestamps in the file).
"""

import enum
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap

from figplots import schema
from figplots.schema import SchemaError

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "axes.linewidth": 0.8,
    "legend.framealpha": 1.0,
    "svg.hashsalt": "figplots",
}

MEMBER_CMAP = ListedColormap(["#f2f2f2", "#4878a8"])
LINE_COLORS = ["#33567d", "#c1452f", "#3d8a5e", "#8a5e3d"]
BAND_COLOR = "#33567d"
ACCENT_COLOR = "#c1452f"


class FigureKind(enum.Enum):
    REGION_RASTER = "region_raster"
    TRAJECTORY = "trajectory"
    ENERGY_LINE = "energy_line"
    ENERGY_BOX = "energy_box"


@dataclass
class FigureJob:
    """One rendering task: input CSV path(s), figure kind, output image path."""

    inputs: tuple
    kind: FigureKind
    out_path: str

    def __post_init__(self):
        if isinstance(self.inputs, (str, bytes)):
            self.inputs = (self.inputs,)
        self.inputs = tuple(self.inputs)
        if not isinstance(self.kind, FigureKind):
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if self.kind is FigureKind.TRAJECTORY:
            if not self.inputs:
                raise ValueError("trajectory needs at least one input CSV")
        elif len(self.inputs) != 1:
            raise ValueError(
                f"{self.kind.value} takes exactly one input CSV, got {len(self.inputs)}")


def _facet_grid(cols, sel):
    xs = np.unique(cols["x"][sel])
    ys = np.unique(cols["y"][sel])
    grid = np.full((len(ys), len(xs)), -1.0)
    xi = np.searchsorted(xs, cols["x"][sel])
    yi = np.searchsorted(ys, cols["y"][sel])
    grid[yi, xi] = cols["member"][sel]
    if np.any(grid < 0.0) or len(xs) * len(ys) != int(np.sum(sel)):
        raise SchemaError("raster rows do not form a complete grid")
    return xs, ys, grid


def _draw_region_raster(inputs):
    cols = schema.load_columns(inputs[0], schema.RASTER_S_HEADER,
                               schema.RASTER_T_HEADER)
    facet = "threshold" if "threshold" in cols else "kappa"
    values = np.unique(cols[facet])
    panels = [(value, *_facet_grid(cols, cols[facet] == value))
              for value in values]
    fig, axes = plt.subplots(1, len(panels), constrained_layout=True,
                             figsize=(3.2 * len(panels), 3.2), squeeze=False)
    for ax, (value, xs, ys, grid) in zip(axes[0], panels):
        ax.imshow(grid, origin="lower", cmap=MEMBER_CMAP, vmin=0.0, vmax=1.0,
                  extent=(xs[0], xs[-1], ys[0], ys[-1]), interpolation="nearest")
        ax.set_title(f"{facet} = {value:g}")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.grid(False)
    return fig


def _draw_trajectory(inputs):
    traces = [schema.load_columns(path, schema.TRACE_HEADER) for path in inputs]
    fig, ax = plt.subplots(constrained_layout=True, figsize=(4.8, 4.0))
    for i, cols in enumerate(traces):
        color = LINE_COLORS[i % len(LINE_COLORS)]
        ax.plot(cols["pca_x"], cols["pca_y"], color=color, linewidth=1.0,
                marker=".", markersize=2.5,
                label=f"trace {i}" if len(inputs) > 1 else "trace")
        ax.plot(cols["pca_x"][0], cols["pca_y"][0], "o", color=color,
                markersize=7, markerfacecolor="white", label="start" if i == 0 else None)
        if i == 0:
            ax.plot(cols["opt_pca_x"][0], cols["opt_pca_y"][0], "*",
                    color=ACCENT_COLOR, markersize=12, label="optimum")
    ax.set_xlabel("pc 1")
    ax.set_ylabel("pc 2")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    return fig


def _draw_energy_line(inputs):
    cols = schema.load_columns(inputs[0], schema.CURVES_HEADER)
    fig, ax = plt.subplots(constrained_layout=True, figsize=(4.8, 3.4))
    ax.fill_between(cols["layer"], cols["q1"], cols["q3"], color=BAND_COLOR,
                    alpha=0.18, linewidth=0, label="quartiles")
    ax.plot(cols["layer"], cols["mean"], color=BAND_COLOR, linewidth=1.4,
            marker="o", markersize=3.5, label="mean")
    ax.plot(cols["layer"], cols["median"], color=ACCENT_COLOR, linewidth=1.1,
            linestyle="--", label="median")
    ax.set_xlabel("layer")
    ax.set_ylabel("energy")
    ax.legend(loc="best")
    return fig


def _draw_energy_box(inputs):
    cols = schema.load_columns(inputs[0], schema.CURVES_HEADER)
    # the harness publishes quartiles only, so the whiskers sit at the
    # quartiles rather than re-deriving any range from raw samples
    stats = [{
        "med": cols["median"][i], "q1": cols["q1"][i], "q3": cols["q3"][i],
        "whislo": cols["q1"][i], "whishi": cols["q3"][i],
        "mean": cols["mean"][i],
    } for i in range(len(cols["layer"]))]
    fig, ax = plt.subplots(constrained_layout=True, figsize=(4.8, 3.4))
    ax.bxp(stats, positions=cols["layer"], showfliers=False, showmeans=True,
           meanprops={"marker": "D", "markersize": 3.5,
                      "markerfacecolor": ACCENT_COLOR,
                      "markeredgecolor": ACCENT_COLOR},
           boxprops={"color": BAND_COLOR},
           medianprops={"color": ACCENT_COLOR})
    ax.set_xlabel("layer")
    ax.set_ylabel("energy")
    return fig


_DRAWERS = {
    FigureKind.REGION_RASTER: _draw_region_raster,
    FigureKind.TRAJECTORY: _draw_trajectory,
    FigureKind.ENERGY_LINE: _draw_energy_line,
    FigureKind.ENERGY_BOX: _draw_energy_box,
}


def _save(fig, out_path):
    if out_path.endswith(".png"):
        # fixed Software text instead of the version-bearing default
        fig.savefig(out_path, metadata={"Software": "figplots"})
    elif out_path.endswith(".svg"):
        fig.savefig(out_path, metadata={"Date": None})
    else:
        raise ValueError(f"unsupported image format: {out_path!r}")


def render(job: FigureJob) -> str:
    """Render one figure job; returns the output path.

    All inputs are loaded and validated before any drawing or output
    starts, so a SchemaError leaves no file behind.
    """
    with matplotlib.rc_context(STYLE):
        fig = _DRAWERS[job.kind](job.inputs)
        try:
            _save(fig, job.out_path)
        finally:
            plt.close(fig)
    return job.out_path
