"""Minimal self-contained SVG line plots (no plotting dependency).

Diagnostic quality only: linear or log axes, ticks, labels, and a simple
legend.  Colors cycle through a fixed palette so series order is stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]
WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 72, 24, 40, 56


@dataclass
class Series:
    label: str
    x: list[float]
    y: list[float]
    marker: bool = False


@dataclass
class LinePlot:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    xlog: bool = False
    ylog: bool = False
    series: list[Series] = field(default_factory=list)

    def add(self, label, x, y, marker=False):
        self.series.append(Series(label, [float(v) for v in x],
                                  [float(v) for v in y], marker))

    def _finite_points(self):
        pts = []
        for s in self.series:
            for x, y in zip(s.x, s.y):
                if math.isfinite(x) and math.isfinite(y):
                    if self.xlog and x <= 0 or self.ylog and y <= 0:
                        continue
                    pts.append((x, y))
        return pts

    def render(self) -> str:
        if not self.series:
            raise ValueError("cannot render a plot with no series")
        pts = self._finite_points()
        if not pts:
            raise ValueError("no finite data points to plot")
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        xaxis = _Axis(min(xs), max(xs), self.xlog)
        yaxis = _Axis(min(ys), max(ys), self.ylog)
        x0, x1 = MARGIN_L, WIDTH - MARGIN_R
        y0, y1 = HEIGHT - MARGIN_B, MARGIN_T

        def px(x):
            return x0 + xaxis.unit(x) * (x1 - x0)

        def py(y):
            return y0 + yaxis.unit(y) * (y1 - y0)

        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
                 f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
                 f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
                 '<g font-family="sans-serif" font-size="12">']
        # frame
        parts.append(f'<rect x="{x0}" y="{y1}" width="{x1-x0}" height="{y0-y1}" '
                     'fill="none" stroke="#333"/>')
        for xv in xaxis.ticks():
            X = px(xv)
            parts.append(f'<line x1="{X:.1f}" y1="{y0}" x2="{X:.1f}" y2="{y0+5}" stroke="#333"/>')
            parts.append(f'<text x="{X:.1f}" y="{y0+18}" text-anchor="middle">{_fmt(xv)}</text>')
        for yv in yaxis.ticks():
            Y = py(yv)
            parts.append(f'<line x1="{x0-5}" y1="{Y:.1f}" x2="{x0}" y2="{Y:.1f}" stroke="#333"/>')
            parts.append(f'<text x="{x0-8}" y="{Y+4:.1f}" text-anchor="end">{_fmt(yv)}</text>')
            parts.append(f'<line x1="{x0}" y1="{Y:.1f}" x2="{x1}" y2="{Y:.1f}" '
                         'stroke="#ddd" stroke-width="0.5"/>')
        if self.title:
            parts.append(f'<text x="{(x0+x1)/2}" y="{MARGIN_T-14}" text-anchor="middle" '
                         f'font-size="15">{_esc(self.title)}</text>')
        if self.xlabel:
            parts.append(f'<text x="{(x0+x1)/2}" y="{HEIGHT-14}" text-anchor="middle">'
                         f'{_esc(self.xlabel)}</text>')
        if self.ylabel:
            parts.append(f'<text x="18" y="{(y0+y1)/2}" text-anchor="middle" '
                         f'transform="rotate(-90 18 {(y0+y1)/2})">{_esc(self.ylabel)}</text>')
        for k, s in enumerate(self.series):
            color = PALETTE[k % len(PALETTE)]
            path = []
            pen_up = True
            for x, y in zip(s.x, s.y):
                ok = (math.isfinite(x) and math.isfinite(y)
                      and not (self.xlog and x <= 0) and not (self.ylog and y <= 0))
                if not ok:
                    pen_up = True
                    continue
                cmd = "M" if pen_up else "L"
                path.append(f"{cmd}{px(x):.2f} {py(y):.2f}")
                pen_up = False
            if path:
                parts.append(f'<path d="{" ".join(path)}" fill="none" stroke="{color}" '
                             'stroke-width="1.5"/>')
            if s.marker:
                for x, y in zip(s.x, s.y):
                    if math.isfinite(x) and math.isfinite(y) and \
                       not (self.xlog and x <= 0) and not (self.ylog and y <= 0):
                        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" '
                                     f'fill="{color}"/>')
            # legend
            ly = MARGIN_T + 16 + 16 * k
            parts.append(f'<line x1="{x1-130}" y1="{ly-4}" x2="{x1-105}" y2="{ly-4}" '
                         f'stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{x1-100}" y="{ly}">{_esc(s.label)}</text>')
        parts.append("</g></svg>")
        return "\n".join(parts)

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())


class _Axis:
    def __init__(self, lo: float, hi: float, log: bool):
        self.log = log
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi <= lo:
            pad = max(abs(lo) * 0.05, 0.5 if log else 1e-6)
            lo, hi = lo - pad, hi + pad
        else:
            pad = 0.05 * (hi - lo)
            lo, hi = lo - pad, hi + pad
        self.lo, self.hi = lo, hi

    def unit(self, v: float) -> float:
        w = math.log10(v) if self.log else v
        return (w - self.lo) / (self.hi - self.lo)

    def ticks(self, target: int = 6) -> list[float]:
        if self.log:
            lo, hi = math.ceil(self.lo), math.floor(self.hi)
            step = max(1, (hi - lo) // target + 1)
            return [10.0 ** e for e in range(lo, hi + 1, step)]
        span = self.hi - self.lo
        raw = span / target
        mag = 10.0 ** math.floor(math.log10(raw))
        step = min((s for s in (1 * mag, 2 * mag, 5 * mag, 10 * mag) if s >= raw),
                   default=mag)
        start = math.ceil(self.lo / step) * step
        out = []
        v = start
        while v <= self.hi + 1e-12 * abs(step):
            out.append(0.0 if abs(v) < 1e-15 * step else v)
            v += step
        return out


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if 1e-3 <= a < 1e4:
        s = f"{v:.6g}"
        return s
    return f"{v:.1e}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
