"""Panel construction and file emission.

One figure per panel, each with the switching instants drawn as vertical
dashed-dotted lines.  Values are plotted verbatim from the CSV; NaN cells
leave gaps, which is what blanks the feature-error panel before the marker
first becomes visible.  Every data line carries its column name as the gid
so tests (and anyone reading the SVG) can map curves back to columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .reading import RunData, read_run_csv

PANELS = ("accel", "pose_error", "feature_error", "lyapunov")

_COMPONENTS = ("x", "y", "z", "rx", "ry", "rz")

_PANEL_COLUMNS = {
    "accel": [f"acc_{i}" for i in range(6)],
    "pose_error": [f"e_p_{i}" for i in range(6)],
    "feature_error": [f"e_i_{i}" for i in range(8)],
    "lyapunov": ["V_d", "V_v"],
}

_PANEL_LABELS = {
    "accel": _COMPONENTS,
    "pose_error": _COMPONENTS,
    "feature_error": tuple(f"{uv}{k}" for k in range(4) for uv in ("u", "v")),
}

_PANEL_YLABEL = {
    "accel": "commanded acceleration",
    "pose_error": "pose error",
    "feature_error": "feature error",
}

# fixed salt so SVG element ids depend only on content
_HASHSALT = "servo-plots"
_PNG_DPI = 150


@dataclass(frozen=True)
class FigureSpec:
    """What to render: which CSV, which panels, where, and the marker style."""

    csv_path: Path
    out_base: Path
    panels: tuple = PANELS
    switch_style: str = "dashdot"
    switch_color: str = "0.5"

    def __post_init__(self):
        unknown = [p for p in self.panels if p not in PANELS]
        if unknown:
            raise ValueError(f"unknown panels {unknown!r}; choose from {PANELS}")
        if not self.panels:
            raise ValueError("at least one panel is required")


def panel_figure(data: RunData, panel: str, spec: FigureSpec):
    """Build one panel as a matplotlib figure without touching the disk."""
    for name in _PANEL_COLUMNS[panel]:
        data.column(name)
    fig, ax = plt.subplots(figsize=(6.4, 3.2), constrained_layout=True)
    if panel == "lyapunov":
        line = ax.plot(data.t, data.column("V_d"), color="tab:blue", lw=1.0)[0]
        line.set_gid("V_d")
        ax.set_ylabel("primitive energy", color="tab:blue")
        ax.tick_params(axis="y", labelcolor="tab:blue")
        right = ax.twinx()
        line = right.plot(data.t, data.column("V_v"), color="tab:orange", lw=1.0)[0]
        line.set_gid("V_v")
        right.set_ylabel("servo energy", color="tab:orange")
        right.tick_params(axis="y", labelcolor="tab:orange")
    else:
        labels = _PANEL_LABELS[panel]
        for name, label in zip(_PANEL_COLUMNS[panel], labels):
            line = ax.plot(data.t, data.column(name), lw=1.0, label=label)[0]
            line.set_gid(name)
        ax.set_ylabel(_PANEL_YLABEL[panel])
        ax.legend(ncols=4, fontsize=7, loc="upper right")
    for t_switch in data.switch_times:
        mark = ax.axvline(t_switch, color=spec.switch_color,
                          linestyle=spec.switch_style, lw=1.0)
        mark.set_gid("switch")
    ax.set_xlabel("t [s]")
    ax.grid(True, alpha=0.3)
    return fig


def render(spec: FigureSpec) -> list[Path]:
    """Write every requested panel as SVG and PNG; returns the paths.

    The CSV is validated in full before the first file is created, so a
    schema failure never leaves partial output.  Output bytes depend only
    on the input CSV: timestamps and tool-version stamps are stripped.
    """
    data = read_run_csv(spec.csv_path)
    for panel in spec.panels:
        for name in _PANEL_COLUMNS[panel]:
            data.column(name)
    out_base = Path(spec.out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    written = []
    with matplotlib.rc_context({"svg.hashsalt": _HASHSALT}):
        for panel in spec.panels:
            fig = panel_figure(data, panel, spec)
            try:
                svg = out_base.parent / f"{out_base.name}_{panel}.svg"
                fig.savefig(svg, format="svg", metadata={"Date": None})
                png = out_base.parent / f"{out_base.name}_{panel}.png"
                fig.savefig(png, format="png", dpi=_PNG_DPI,
                            metadata={"Software": None})
            finally:
                plt.close(fig)
            written.extend([svg, png])
    return written
