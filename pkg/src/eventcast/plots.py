"""Render forecast curves and survival overlays to image files."""

from __future__ import annotations

from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .diagnostics import SurvivalOverlay
from .domain import ForecastCurve


def save_forecast_figure(curve: ForecastCurve, path, title: str,
                         ylabel: str = "count",
                         target: Optional[float] = None) -> None:
    """Mean with its central band; optional horizontal target line."""
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    ax.plot(curve.days, curve.mean, "b-", label="predicted mean")
    pct = 100.0 * curve.confidence_level
    ax.plot(curve.days, curve.lower, "r--", label=f"{pct:.0f}% band")
    ax.plot(curve.days, curve.upper, "r--")
    if target is not None:
        ax.axhline(target, color="0.4", linestyle=":", label="target")
    ax.set_xlabel("days since cut-off")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="lower right")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_overlay_figure(ov: SurvivalOverlay, path, title: str) -> None:
    """Kaplan-Meier steps with band, against the fitted survival curves."""
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    ax.step(ov.times, ov.km_survival, where="post", color="k", label="Kaplan-Meier")
    ax.step(ov.times, ov.km_lower, where="post", color="0.6", linewidth=0.8)
    ax.step(ov.times, ov.km_upper, where="post", color="0.6", linewidth=0.8,
            label="KM band")
    for name, vals in ov.model_curves.items():
        ax.plot(ov.times, vals, label=name)
    ax.set_xlabel("days since randomisation")
    ax.set_ylabel("survival (no endpoint)")
    ax.set_ylim(0.0, 1.02)
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize="small")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
