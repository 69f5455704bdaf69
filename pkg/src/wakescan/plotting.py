"""Figures and rasters: ROC curves as SVG and the detection overlay."""

from __future__ import annotations

import io as _io
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .detect import Status, WakeKind, WakeReport  # noqa: E402
from .io import atomic_write  # noqa: E402

__all__ = ["OVERLAY_LEVELS", "render_overlay", "plot_roc"]

OVERLAY_LEVELS = {
    WakeKind.TURBULENT: 255,
    WakeKind.NARROW1: 200,
    WakeKind.NARROW2: 200,
    WakeKind.KELVIN1: 160,
    WakeKind.KELVIN2: 160,
}


def render_overlay(size: int, report: WakeReport) -> np.ndarray:
    """8-bit raster with each confirmed half-line burned in at its kind's gray level.

    Later kinds never overwrite the turbulent level where lines cross.
    """
    out = np.zeros((size, size), dtype=np.uint8)
    c = size // 2
    for cand in sorted(report.candidates, key=lambda k: OVERLAY_LEVELS[WakeKind(k.kind)]):
        if Status(cand.status) is not Status.CONFIRMED or cand.endpoints is None:
            continue
        (x0, y0), (x1, y1) = cand.endpoints
        n = int(math.ceil(2 * math.hypot(x1 - x0, y1 - y0))) + 1
        t = np.linspace(0.0, 1.0, n)
        cols = np.rint(x0 + t * (x1 - x0)).astype(int) + c
        rows = np.rint(y0 + t * (y1 - y0)).astype(int) + c
        ok = (rows >= 0) & (rows < size) & (cols >= 0) & (cols < size)
        out[rows[ok], cols[ok]] = OVERLAY_LEVELS[WakeKind(cand.kind)]
    return out


def plot_roc(curves: dict, path, title: str = "ROC") -> None:
    """Write one ROC line per entry of ``curves`` (label -> rows of (margin, fpr, tpr)).

    The SVG carries no date and a fixed hash salt, so reruns are byte-identical.
    """
    with plt.rc_context({"svg.hashsalt": "wakescan", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 5))
        for label in sorted(curves):
            rows = curves[label]
            fpr = [r[1] for r in rows]
            tpr = [r[2] for r in rows]
            ax.plot(fpr, tpr, marker="o", markersize=3, label=label)
        ax.plot([0, 1], [0, 1], color="0.7", linestyle=":", linewidth=1)
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right")
        buf = _io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    with atomic_write(path, "w") as fh:
        fh.write(buf.getvalue())
