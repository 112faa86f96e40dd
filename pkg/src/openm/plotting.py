"""SVG line charts of cumulative regret and violation, drawn from a results CSV.

matplotlib is imported lazily so the numeric pipeline never needs it.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import numpy as np


def read_results(path) -> dict[str, dict[str, np.ndarray]]:
    """Group a results file by algorithm: ``{algo: {column: array}}``."""
    cols: dict[str, dict[str, list[float]]] = defaultdict(lambda: defaultdict(list))
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            algo = row.pop("algorithm")
            for k, v in row.items():
                cols[algo][k].append(float(v))
    return {a: {k: np.asarray(v) for k, v in d.items()} for a, d in cols.items()}


def _draw(series: dict[str, dict[str, np.ndarray]], column: str, ylabel: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    positive = True
    for algo, d in series.items():
        y = d[column]
        ax.plot(d["t"], y, label=algo, linewidth=1.4)
        positive &= bool(np.all(y[1:] > 0)) if y.size > 1 else bool(np.all(y > 0))
    # regret on the network benchmark spans dozens of decades
    ax.set_yscale("log" if positive else "symlog")
    ax.set_xlabel("round t")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="major", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_results(csv_path, out_dir) -> list[Path]:
    """Write ``regret.svg`` and ``violation.svg`` into ``out_dir``."""
    import matplotlib

    matplotlib.rcParams["svg.hashsalt"] = "openm"
    series = read_results(csv_path)
    if not series:
        raise ValueError(f"{csv_path} has no data rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "regret.svg", out / "violation.svg"]
    _draw(series, "cum_regret", "cumulative dynamic regret", paths[0])
    _draw(series, "cum_violation", "cumulative constraint violation", paths[1])
    return paths
