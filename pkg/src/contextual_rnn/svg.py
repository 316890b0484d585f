"""A tiny deterministic SVG plotter (lines, scatter, bars) with linear or log axes.

Output depends only on the data: numbers are printed with fixed precision and
element order follows insertion order, so re-rendering the same inputs yields
identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


@dataclass
class _Series:
    kind: str            # "line" | "scatter" | "bar"
    xs: list
    ys: list
    label: str
    color: str
    width: float = 0.8   # bar width in data units


@dataclass
class Plot:
    title: str
    xlabel: str = ""
    ylabel: str = ""
    xlog: bool = False
    width: int = 640
    height: int = 400
    series: list = field(default_factory=list)
    xtick_labels: list | None = None   # (position, text) pairs for categorical axes
    hlines: list = field(default_factory=list)

    def _color(self, color):
        return color or PALETTE[len(self.series) % len(PALETTE)]

    def line(self, xs, ys, label="", color=None):
        self.series.append(_Series("line", [float(x) for x in xs], [float(y) for y in ys], label, self._color(color)))
        return self

    def scatter(self, xs, ys, label="", color=None):
        self.series.append(_Series("scatter", [float(x) for x in xs], [float(y) for y in ys], label, self._color(color)))
        return self

    def bars(self, xs, ys, label="", color=None, width=0.8):
        self.series.append(_Series("bar", [float(x) for x in xs], [float(y) for y in ys], label, self._color(color), width))
        return self

    def hline(self, y):
        self.hlines.append(float(y))
        return self

    # ------------------------------------------------------------ rendering
    def _tx(self, x):
        return math.log10(x) if self.xlog else x

    def _bounds(self):
        xs, ys = [], list(self.hlines)
        for s in self.series:
            for x, y in zip(s.xs, s.ys):
                if not (math.isfinite(x) and math.isfinite(y)) or (self.xlog and x <= 0):
                    continue
                if s.kind == "bar":
                    xs += [self._tx(x) - s.width / 2, self._tx(x) + s.width / 2]
                    ys += [0.0, y]
                else:
                    xs.append(self._tx(x))
                    ys.append(y)
        if not xs:
            xs = [0.0, 1.0]
        if not ys:
            ys = [0.0, 1.0]
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        pad = 0.05 * (y1 - y0)
        return x0, x1, y0 - pad, y1 + pad

    def to_svg(self) -> str:
        W, H = self.width, self.height
        L, R, T, B = 70, 20, 40, 55
        x0, x1, y0, y1 = self._bounds()

        def px(x):
            return L + (self._tx(x) - x0) / (x1 - x0) * (W - L - R)

        def py(y):
            return H - B - (y - y0) / (y1 - y0) * (H - T - B)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
               f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
               f'<text x="{W / 2:.1f}" y="22" text-anchor="middle" font-size="15" font-family="sans-serif">{escape(self.title)}</text>',
               f'<line x1="{L}" y1="{H - B}" x2="{W - R}" y2="{H - B}" stroke="black"/>',
               f'<line x1="{L}" y1="{T}" x2="{L}" y2="{H - B}" stroke="black"/>']
        if self.xtick_labels is not None:
            xt = [(float(p), str(t)) for p, t in self.xtick_labels]
        elif self.xlog:
            xt = [(10.0 ** e, f"1e{e}") for e in range(math.floor(x0), math.ceil(x1) + 1) if x0 <= e <= x1]
        else:
            xt = [(t, f"{t:g}") for t in _nice_ticks(x0, x1)]
        for pos, text in xt:
            X = px(pos)
            out.append(f'<line x1="{_f(X)}" y1="{H - B}" x2="{_f(X)}" y2="{H - B + 5}" stroke="black"/>')
            out.append(f'<text x="{_f(X)}" y="{H - B + 18}" text-anchor="middle" font-size="11" font-family="sans-serif">{escape(text)}</text>')
        for t in _nice_ticks(y0, y1):
            Y = py(t)
            out.append(f'<line x1="{L - 5}" y1="{_f(Y)}" x2="{L}" y2="{_f(Y)}" stroke="black"/>')
            out.append(f'<text x="{L - 8}" y="{_f(Y + 4)}" text-anchor="end" font-size="11" font-family="sans-serif">{t:g}</text>')
        for y in self.hlines:
            out.append(f'<line x1="{L}" y1="{_f(py(y))}" x2="{W - R}" y2="{_f(py(y))}" stroke="#999" stroke-dasharray="4 3"/>')
        out.append(f'<text x="{(L + W - R) / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12" font-family="sans-serif">{escape(self.xlabel)}</text>')
        out.append(f'<text x="16" y="{(T + H - B) / 2:.1f}" text-anchor="middle" font-size="12" font-family="sans-serif" '
                   f'transform="rotate(-90 16 {(T + H - B) / 2:.1f})">{escape(self.ylabel)}</text>')
        for s in self.series:
            pts = [(x, y) for x, y in zip(s.xs, s.ys)
                   if math.isfinite(x) and math.isfinite(y) and not (self.xlog and x <= 0)]
            if s.kind == "line" and pts:
                d = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in pts)
                out.append(f'<polyline fill="none" stroke="{s.color}" stroke-width="1.5" points="{d}"/>')
            elif s.kind == "scatter":
                for x, y in pts:
                    out.append(f'<circle cx="{_f(px(x))}" cy="{_f(py(y))}" r="3" fill="{s.color}"/>')
            elif s.kind == "bar":
                for x, y in pts:
                    if self.xlog:
                        xa, xb = px(x) - 4, px(x) + 4
                    else:
                        xa = L + (x - s.width / 2 - x0) / (x1 - x0) * (W - L - R)
                        xb = L + (x + s.width / 2 - x0) / (x1 - x0) * (W - L - R)
                    ya, yb = py(max(y, 0.0)), py(min(y, 0.0))
                    out.append(f'<rect x="{_f(xa)}" y="{_f(ya)}" width="{_f(xb - xa)}" height="{_f(yb - ya)}" fill="{s.color}"/>')
        legend = [s for s in self.series if s.label]
        for i, s in enumerate(legend):
            y = T + 8 + 16 * i
            out.append(f'<rect x="{W - R - 150}" y="{y - 8}" width="10" height="10" fill="{s.color}"/>')
            out.append(f'<text x="{W - R - 135}" y="{y + 1}" font-size="11" font-family="sans-serif">{escape(s.label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"


def histogram_bars(plot: Plot, counts, edges, label="", color=None) -> Plot:
    """One bar per ``[edges[i], edges[i+1])``.

    With ``plot.xlog`` the bars are laid out in log10 units and the axis is
    relabelled with decade ticks, so bins of equal log width look equal.
    """
    color = plot._color(color)
    log = plot.xlog
    ex = [math.log10(e) for e in edges] if log else [float(e) for e in edges]
    for i, c in enumerate(counts):
        lo, hi = ex[i], ex[i + 1]
        plot.series.append(_Series("bar", [(lo + hi) / 2], [float(c)], label if i == 0 else "",
                                   color, 0.95 * (hi - lo)))
    if log:
        plot.xlog = False
        plot.xtick_labels = [(e, f"1e{e}") for e in range(math.floor(ex[0]), math.ceil(ex[-1]) + 1)
                             if ex[0] - 1e-9 <= e <= ex[-1] + 1e-9]
    return plot
