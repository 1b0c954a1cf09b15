"""Minimal SVG output for survival step curves and ROC curves."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .survival import KMCurve

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
W, H = 640, 420
MARGIN = dict(left=60, right=20, top=30, bottom=50)


class _Canvas:
    def __init__(self, title: str, xlabel: str, ylabel: str, xmax: float, ymin: float = 0.0, ymax: float = 1.0,
                 comment: str | None = None):
        self.xmax = xmax if xmax > 0 else 1.0
        self.ymin, self.ymax = ymin, ymax
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        ]
        if comment:
            self.parts.append(f"<!-- {escape(comment).replace('--', '- -')} -->")
        self.parts.append(f'<rect width="{W}" height="{H}" fill="white"/>')
        self._axes(title, xlabel, ylabel)

    def x(self, v: float) -> float:
        return MARGIN["left"] + (W - MARGIN["left"] - MARGIN["right"]) * v / self.xmax

    def y(self, v: float) -> float:
        span = self.ymax - self.ymin
        return H - MARGIN["bottom"] - (H - MARGIN["top"] - MARGIN["bottom"]) * (v - self.ymin) / span

    def _axes(self, title, xlabel, ylabel):
        x0, x1, y0, y1 = self.x(0), self.x(self.xmax), self.y(self.ymin), self.y(self.ymax)
        p = self.parts
        p.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y0:.2f}" stroke="black"/>')
        p.append(f'<line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x0:.2f}" y2="{y1:.2f}" stroke="black"/>')
        for v in np.linspace(0, self.xmax, 6):
            p.append(f'<text x="{self.x(v):.2f}" y="{y0 + 18:.2f}" font-size="11" text-anchor="middle">{v:.3g}</text>')
        for v in np.linspace(self.ymin, self.ymax, 6):
            p.append(f'<text x="{x0 - 6:.2f}" y="{self.y(v) + 4:.2f}" font-size="11" text-anchor="end">{v:.2f}</text>')
        p.append(f'<text x="{W / 2}" y="18" font-size="14" text-anchor="middle">{escape(title)}</text>')
        p.append(f'<text x="{W / 2}" y="{H - 10}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
        p.append(f'<text x="16" y="{H / 2}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>')

    def polyline(self, xs, ys, color, width=1.5, dash=None):
        pts = " ".join(f"{self.x(a):.2f},{self.y(b):.2f}" for a, b in zip(xs, ys))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="{width}"{extra}/>')

    def polygon(self, xs, ys, color, opacity=0.2):
        pts = " ".join(f"{self.x(a):.2f},{self.y(b):.2f}" for a, b in zip(xs, ys))
        self.parts.append(f'<polygon points="{pts}" fill="{color}" fill-opacity="{opacity}" stroke="none"/>')

    def legend(self, labels, colors):
        for i, (lab, col) in enumerate(zip(labels, colors)):
            yy = MARGIN["top"] + 14 + 16 * i
            xx = W - MARGIN["right"] - 190
            self.parts.append(f'<line x1="{xx}" y1="{yy - 4}" x2="{xx + 20}" y2="{yy - 4}" stroke="{col}" stroke-width="2"/>')
            self.parts.append(f'<text x="{xx + 26}" y="{yy}" font-size="11">{escape(lab)}</text>')

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def step_points(times: Sequence[float], values: Sequence[float], start: float = 1.0,
                t_end: float | None = None) -> tuple[list[float], list[float]]:
    """Right-continuous step function vertices starting at (0, start)."""
    xs, ys = [0.0], [start]
    cur = start
    for t, v in zip(times, values):
        xs += [t, t]
        ys += [cur, v]
        cur = v
    if t_end is not None and t_end > xs[-1]:
        xs.append(t_end)
        ys.append(cur)
    return xs, ys


def km_svg(curves: dict[str, KMCurve], t_max: float | None = None, title: str = "Time to delirium",
           comment: str | None = None) -> str:
    """Step curves with shaded confidence bands, one colour per group."""
    ends = [float(c.time[-1]) for c in curves.values() if len(c.time)]
    t_max = t_max if t_max is not None else (max(ends) * 1.05 if ends else 1.0)
    ymin = min([0.0] + [float(np.min(c.ci_lo)) for c in curves.values() if len(c.time)])
    cv = _Canvas(title, "Months since index admission", "Delirium-free probability", t_max,
                 ymin=min(ymin, 0.0), comment=comment)
    colors = []
    for i, (name, c) in enumerate(curves.items()):
        col = PALETTE[i % len(PALETTE)]
        colors.append(col)
        if len(c.time):
            lx, ly = step_points(c.time, c.ci_lo, 1.0, t_max)
            ux, uy = step_points(c.time, c.ci_hi, 1.0, t_max)
            cv.polygon(ux + lx[::-1], uy + ly[::-1], col)
        sx, sy = step_points(c.time, c.survival, 1.0, t_max)
        cv.polyline(sx, sy, col, 2)
    cv.legend([f"{n} (n={c.n})" for n, c in curves.items()], colors)
    return cv.render()


def roc_svg(fpr, tpr, auc: float | None = None, title: str = "ROC curve", comment: str | None = None) -> str:
    cv = _Canvas(title, "False positive rate", "True positive rate", 1.0, comment=comment)
    cv.polyline([0, 1], [0, 1], "#888888", 1, dash="4 4")
    cv.polyline(list(fpr), list(tpr), PALETTE[0], 2)
    if auc is not None:
        cv.legend([f"AUROC = {auc:.3f}"], [PALETTE[0]])
    return cv.render()


def write_svg(text: str, path) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
