"""Minimal self-contained SVG plotting (polylines, scatter, unit circle).

The CSV files next to each plot are the authoritative artifacts; these
renderings are quick-look only, so the plotter stays deliberately small:
fixed canvas, linear axes, a handful of ticks, no text layout engine.
"""

from __future__ import annotations

import math

WIDTH = 640
HEIGHT = 440
MARGIN_L = 70
MARGIN_R = 20
MARGIN_T = 40
MARGIN_B = 50

_COLORS = ("#1f77b4", "#2ca02c", "#d62728", "#9467bd", "#ff7f0e")


def _finite(values):
    return [v for v in values if math.isfinite(v)]


def _data_range(lo, hi):
    if lo == hi:
        pad = 1.0 if lo == 0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


class _Canvas:
    def __init__(self, x_range, y_range, title, xlabel, ylabel):
        self.x0, self.x1 = x_range
        self.y0, self.y1 = y_range
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">',
            f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
            f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" '
            f'font-family="sans-serif" font-size="14">{title}</text>',
            f'<text x="{WIDTH / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{xlabel}</text>',
            f'<text x="16" y="{HEIGHT / 2:.1f}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 16 {HEIGHT / 2:.1f})">{ylabel}</text>',
        ]

    def px(self, x):
        span = self.x1 - self.x0
        return MARGIN_L + (x - self.x0) / span * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y):
        span = self.y1 - self.y0
        return HEIGHT - MARGIN_B - (y - self.y0) / span * (HEIGHT - MARGIN_T - MARGIN_B)

    def axes(self):
        left, right = MARGIN_L, WIDTH - MARGIN_R
        top, bottom = MARGIN_T, HEIGHT - MARGIN_B
        self.parts.append(
            f'<rect x="{left}" y="{top}" width="{right - left}" height="{bottom - top}" '
            f'fill="none" stroke="black" stroke-width="1"/>')
        for i in range(6):
            fx = self.x0 + (self.x1 - self.x0) * i / 5
            fy = self.y0 + (self.y1 - self.y0) * i / 5
            xpix, ypix = self.px(fx), self.py(fy)
            self.parts.append(
                f'<line x1="{xpix:.1f}" y1="{bottom}" x2="{xpix:.1f}" y2="{bottom + 4}" stroke="black"/>'
                f'<text x="{xpix:.1f}" y="{bottom + 16}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{fx:.3g}</text>')
            self.parts.append(
                f'<line x1="{left - 4}" y1="{ypix:.1f}" x2="{left}" y2="{ypix:.1f}" stroke="black"/>'
                f'<text x="{left - 6}" y="{ypix + 3:.1f}" text-anchor="end" '
                f'font-family="sans-serif" font-size="10">{fy:.3g}</text>')

    def polyline(self, xs, ys, color, dashed=False):
        pts = []
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                pts.append(f"{self.px(x):.2f},{self.py(y):.2f}")
        if not pts:
            return
        dash = ' stroke-dasharray="6 4"' if dashed else ""
        self.parts.append(
            f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"{dash}/>')

    def markers(self, xs, ys, color):
        for x, y in zip(xs, ys):
            if math.isfinite(x) and math.isfinite(y):
                self.parts.append(
                    f'<circle cx="{self.px(x):.2f}" cy="{self.py(y):.2f}" r="2.4" '
                    f'fill="{color}"/>')

    def legend(self, labels_colors):
        y = MARGIN_T + 14
        for label, color in labels_colors:
            self.parts.append(
                f'<line x1="{WIDTH - 180}" y1="{y - 4}" x2="{WIDTH - 156}" y2="{y - 4}" '
                f'stroke="{color}" stroke-width="2"/>'
                f'<text x="{WIDTH - 150}" y="{y}" font-family="sans-serif" '
                f'font-size="11">{label}</text>')
            y += 16

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_plot(path, series, *, title="", xlabel="", ylabel="", hlines=()):
    """series: iterable of (xs, ys, label) triples sharing the axes."""
    all_x, all_y = [], []
    for xs, ys, _ in series:
        all_x.extend(_finite(list(xs)))
        all_y.extend(_finite(list(ys)))
    all_y.extend(hlines)
    if not all_x or not all_y:
        all_x, all_y = [0.0, 1.0], [0.0, 1.0]
    canvas = _Canvas(_data_range(min(all_x), max(all_x)),
                     _data_range(min(all_y), max(all_y)),
                     title, xlabel, ylabel)
    canvas.axes()
    for y in hlines:
        canvas.polyline([min(all_x), max(all_x)], [y, y], "#888888", dashed=True)
    labels = []
    for idx, (xs, ys, label) in enumerate(series):
        color = _COLORS[idx % len(_COLORS)]
        canvas.polyline(list(xs), list(ys), color)
        if label:
            labels.append((label, color))
    if labels:
        canvas.legend(labels)
    _write(path, canvas.render())


def scatter_with_unit_circle(path, points, *, title="", xlabel="Re", ylabel="Im"):
    """Scatter of complex-plane points with the unit circle overlaid."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    lo = min([-1.1] + [x - 0.1 for x in xs] + [y - 0.1 for y in ys])
    hi = max([1.1] + [x + 0.1 for x in xs] + [y + 0.1 for y in ys])
    canvas = _Canvas((lo, hi), (lo, hi), title, xlabel, ylabel)
    canvas.axes()
    circle = [(math.cos(t * math.pi / 100), math.sin(t * math.pi / 100))
              for t in range(201)]
    canvas.polyline([c[0] for c in circle], [c[1] for c in circle],
                    "#d62728", dashed=True)
    canvas.markers(xs, ys, "#2ca02c")
    _write(path, canvas.render())


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
