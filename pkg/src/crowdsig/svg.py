"""Static SVG figures for signature plots, distributions, and grids.

Rendering is delegated to matplotlib (Agg backend) with a fixed hash salt
and stripped date metadata, so a given input yields byte-identical SVG text
across runs.
"""

import io as _io
from dataclasses import dataclass, field

from .factor import BIN_LABELS, DeviationGrid
from .sigplot import DistributionPlot, SignaturePlot

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
_BIN_COLORS = ("#ffffff", "#fdd0c0", "#f4795b", "#a63603")
_BIN_TEXT = ("<10%", "10-20%", "20-30%", ">30%")


@dataclass(frozen=True)
class SvgStyle:
    width: float = 7.0          # inches
    height: float = 4.5
    title: str = ""
    xlabel: str = "k (crowd size)"
    ylabel: str = ""
    palette: tuple = field(default=_PALETTE)
    marker: str = "o"


def _axes(style):
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "crowdsig"
    fig, ax = plt.subplots(figsize=(style.width, style.height))
    ax.set_title(style.title)
    ax.set_xlabel(style.xlabel)
    ax.set_ylabel(style.ylabel)
    return fig, ax


def _to_svg(fig):
    import matplotlib.pyplot as plt

    buf = _io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return buf.getvalue()


def render_signature_svg(plots, labels=None, style=None):
    """Line chart of one or more signature plots on a shared k axis."""
    if isinstance(plots, SignaturePlot):
        plots = [plots]
    if not plots:
        raise ValueError("no plot data to render")
    labels = labels or [f"{p.method} {p.kind}" for p in plots]
    style = style or SvgStyle(ylabel=plots[0].kind)
    fig, ax = _axes(style)
    for i, (plot, label) in enumerate(zip(plots, labels)):
        color = style.palette[i % len(style.palette)]
        ax.plot(plot.k, plot.values, marker=style.marker, markersize=4,
                color=color, label=label)
        if plot.mins is not None and plot.maxs is not None:
            ax.fill_between(plot.k, plot.mins, plot.maxs, color=color, alpha=0.15)
    ax.legend()
    ax.grid(True, alpha=0.3)
    return _to_svg(fig)


def render_distribution_svg(dist, style=None):
    """Boxplots of the scaled squared k-average error distribution per k."""
    if len(dist) == 0:
        raise ValueError("no distribution data to render")
    style = style or SvgStyle(ylabel="squared error (scaled)")
    fig, ax = _axes(style)
    stats = []
    for i, k in enumerate(dist.k):
        stats.append({
            "label": str(int(k)),
            "med": dist.median[i],
            "q1": dist.q1[i],
            "q3": dist.q3[i],
            "whislo": dist.whisker_lo[i],
            "whishi": dist.whisker_hi[i],
            "fliers": dist.outliers[i],
        })
    ax.bxp(stats, showfliers=True,
           flierprops={"marker": ".", "markersize": 2, "alpha": 0.4})
    ax.grid(True, axis="y", alpha=0.3)
    return _to_svg(fig)


def render_grid_svg(grid, style=None):
    """Heatmap of a deviation grid with the four-band shading legend."""
    n = grid.forecaster_ids.size
    if n == 0:
        raise ValueError("no grid data to render")
    style = style or SvgStyle(width=6.5, height=6.0, xlabel="", ylabel="")
    fig, ax = _axes(style)

    from matplotlib.colors import BoundaryNorm, ListedColormap
    from matplotlib.patches import Patch

    cmap = ListedColormap(_BIN_COLORS)
    norm = BoundaryNorm([-0.5, 0.5, 1.5, 2.5, 3.5], cmap.N)
    ax.imshow(grid.bins, cmap=cmap, norm=norm)
    for i in range(n):
        for j in range(n):
            ax.text(j, i, f"{grid.values[i, j]:.2f}", ha="center", va="center", fontsize=7)
    ticks = [str(int(i)) for i in grid.forecaster_ids]
    ax.set_xticks(range(n), ticks)
    ax.set_yticks(range(n), ticks)
    handles = [Patch(facecolor=c, edgecolor="#888888", label=t)
               for c, t in zip(_BIN_COLORS, _BIN_TEXT)]
    ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.02, 1.0),
              title="|deviation|")
    return _to_svg(fig)


def render_svg(data, style=None, labels=None):
    """Render any supported plot object to a self-contained SVG document."""
    if isinstance(data, (SignaturePlot, list, tuple)):
        return render_signature_svg(data, labels=labels, style=style)
    if isinstance(data, DistributionPlot):
        return render_distribution_svg(data, style=style)
    if isinstance(data, DeviationGrid):
        return render_grid_svg(data, style=style)
    raise TypeError(f"cannot render {type(data).__name__} to SVG")
