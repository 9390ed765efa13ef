"""Minimal deterministic SVG chart emission.

Charts are emitted as plain SVG text with fixed-precision coordinates so
that identical inputs produce byte-identical files — no plotting backend,
no timestamps, no generated ids.
"""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 720, 420
MARGIN = dict(left=64, right=64, top=36, bottom=44)

GREY = "#9a9a9a"
BLUE = "#1f6fb2"
RED = "#c23b22"
BAND = "#f2c4bd"


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class Canvas:
    """Accumulates SVG elements over a fixed plot area."""

    def __init__(self, width: int = WIDTH, height: int = HEIGHT):
        self.width = width
        self.height = height
        self.parts: list[str] = []

    def line(self, x1, y1, x2, y2, stroke=GREY, width=1.0, dash=None):
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.parts.append(
            f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}" '
            f'stroke="{stroke}" stroke-width="{width}"{dash_attr} />'
        )

    def polyline(self, points, stroke=GREY, width=1.0, opacity=1.0):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}" />'
        )

    def polygon(self, points, fill=BAND, opacity=0.5):
        pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)
        self.parts.append(
            f'<polygon points="{pts}" fill="{fill}" fill-opacity="{opacity}" stroke="none" />'
        )

    def circle(self, x, y, r=2.5, fill=BLUE, opacity=0.8):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{r}" fill="{fill}" '
            f'fill-opacity="{opacity}" />'
        )

    def text(self, x, y, content, size=11, anchor="start", fill="#222222"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" font-size="{size}" '
            f'font-family="sans-serif" text-anchor="{anchor}" fill="{fill}">{content}</text>'
        )

    def render(self) -> str:
        body = "\n".join(f"  {p}" for p in self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
            f'  <rect width="{self.width}" height="{self.height}" fill="#ffffff" />\n'
            f"{body}\n</svg>\n"
        )


class Scale:
    """Affine map from data space to pixel space."""

    def __init__(self, lo: float, hi: float, pix_lo: float, pix_hi: float):
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = lo, hi
        self.pix_lo, self.pix_hi = pix_lo, pix_hi

    def __call__(self, v: float) -> float:
        frac = (v - self.lo) / (self.hi - self.lo)
        return self.pix_lo + frac * (self.pix_hi - self.pix_lo)

    def ticks(self, n: int = 5) -> list[float]:
        return list(np.linspace(self.lo, self.hi, n))


def plot_area() -> tuple[float, float, float, float]:
    return (
        MARGIN["left"],
        WIDTH - MARGIN["right"],
        HEIGHT - MARGIN["bottom"],
        MARGIN["top"],
    )


def draw_frame(canvas: Canvas, x_scale: Scale, y_scale: Scale, title: str,
               x_label: str, y_label: str, y2_scale: Scale | None = None,
               y2_label: str = ""):
    left, right, bottom, top = plot_area()
    canvas.line(left, bottom, right, bottom, stroke="#444444")
    canvas.line(left, bottom, left, top, stroke="#444444")
    canvas.text(WIDTH / 2, MARGIN["top"] - 14, title, size=13, anchor="middle")
    canvas.text(WIDTH / 2, HEIGHT - 10, x_label, anchor="middle")
    for t in x_scale.ticks():
        px = x_scale(t)
        canvas.line(px, bottom, px, bottom + 4, stroke="#444444")
        label = f"{t:.0f}" if abs(t - round(t)) < 1e-9 else f"{t:.2f}"
        canvas.text(px, bottom + 16, label, anchor="middle")
    for t in y_scale.ticks():
        py = y_scale(t)
        canvas.line(left - 4, py, left, py, stroke="#444444")
        canvas.text(left - 7, py + 3, f"{t:.1f}", anchor="end")
    canvas.text(14, HEIGHT / 2, y_label, anchor="middle")
    if y2_scale is not None:
        canvas.line(right, bottom, right, top, stroke="#444444")
        for t in y2_scale.ticks():
            py = y2_scale(t)
            canvas.line(right, py, right + 4, py, stroke=BLUE)
            canvas.text(right + 7, py + 3, f"{t:.1f}", fill=BLUE)
        canvas.text(WIDTH - 12, HEIGHT / 2, y2_label, anchor="middle", fill=BLUE)
