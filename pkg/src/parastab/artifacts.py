"""Byte-stable artifact writers (JSON and static SVG)."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(data), indent=2, sort_keys=True) + "\n")
    return path


def plot_norms(trajectory, path, *, delta: float | None = None, M: float | None = None, column: str = "h1_y"):
    """Log-scale norm curves with the ``M e^{-delta (t - T1)} ||y(T1)||`` envelope when available."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "parastab"
    matplotlib.rcParams["svg.fonttype"] = "none"
    t = trajectory.t
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name, style in (("l2_y", "-"), ("h1_y", "--")):
        vals = trajectory.column(name)
        pos = vals > 0
        ax.semilogy(t[pos], vals[pos], style, label=name)
    if delta is not None and M is not None:
        t0 = trajectory.T1 if trajectory.T1 is not None else 0.0
        ref = float(np.interp(t0, t, trajectory.column(column)))
        post = t >= t0
        if ref > 0:
            ax.semilogy(t[post], M * ref * np.exp(-delta * (t[post] - t0)), ":", color="k",
                        label=r"$M e^{-\delta (t - T_1)}$")
    if trajectory.T1 is not None:
        ax.axvline(trajectory.T1, color="0.6", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("norm")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return Path(path)
