"""Log-log convergence plots written as reproducible SVG."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"u1": ("C0", "o", "Re u"), "u2": ("C3", "s", "Im u")}


def emit_plot(report, path: str | Path) -> Path:
    """Scatter of error against ``h`` per component with its fitted line.

    Output bytes depend only on the report: the SVG id salt is fixed and the
    date metadata is dropped.
    """
    if len(report.records) < 2:
        raise ValueError("need at least two levels to plot")
    path = Path(path)
    h = np.array([r.h for r in report.records])
    errors = {
        "u1": np.array([r.error_u1 for r in report.records]),
        "u2": np.array([r.error_u2 for r in report.records]),
    }
    fits = {"u1": report.fit_u1, "u2": report.fit_u2}
    title = "deterministic" if report.kind == "deterministic" else "stochastic (RMS)"

    with plt.rc_context({"svg.hashsalt": "stochschro", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        hh = np.geomspace(h.min(), h.max(), 2)
        for key, (color, marker, label) in _STYLE.items():
            fit = fits[key]
            ax.loglog(h, errors[key], marker, color=color, ls="none", label=f"{label}: slope {fit.rate:.2f}")
            ax.loglog(hh, 2.0**fit.intercept * hh**fit.rate, "--", color=color, lw=1)
        ax.set_xlabel("h")
        ax.set_ylabel("L2 error at final time")
        ax.set_title(f"Strong convergence, {title}")
        ax.grid(True, which="both", lw=0.3)
        ax.legend(loc="upper left")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return path
