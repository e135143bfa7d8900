"""SVG line charts drawn from result CSVs."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

from .experiments import read_csv


def plot_csv(csv_path, svg_path=None, log_y: bool = True) -> Path:
    """One line per method, MAE (SCRLB for the ``scrlb`` rows) against the sweep value."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_csv(csv_path)
    series = defaultdict(list)
    for r in rows:
        if r["mae_deg"]:
            series[r["method"]].append((float(r["sweep_value"]), float(r["mae_deg"])))
    svg_path = Path(svg_path) if svg_path else Path(csv_path).with_suffix(".svg")
    fig, ax = plt.subplots(figsize=(6, 4))
    for method, pts in series.items():
        pts.sort()
        style = "k--" if method == "scrlb" else "-o"
        ax.plot([p[0] for p in pts], [p[1] for p in pts], style, label=method, markersize=3)
    if log_y and any(v > 0 for pts in series.values() for _, v in pts):
        ax.set_yscale("log")
    ax.set_xlabel(rows[0]["sweep_param"] if rows else "")
    ax.set_ylabel("MAE (deg)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    # fixed metadata keeps the SVG reproducible
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return svg_path
