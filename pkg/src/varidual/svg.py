"""Minimal deterministic SVG plots (no timestamps, fixed viewport and number format)."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["line_plot", "histogram", "cell_map", "write"]

W, H = 480, 320
PAD_L, PAD_R, PAD_T, PAD_B = 56, 16, 28, 36
COLORS = ["#1f4e79", "#b03a2e", "#1e8449", "#7d3c98", "#b9770e", "#2e4053"]


def _f(v):
    return f"{v:.2f}"


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _head(title):
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W // 2}" y="18" font-family="sans-serif" font-size="13" '
            f'text-anchor="middle">{_esc(title)}</text>']


def _range(vals):
    vals = [v for v in vals if math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-300:
        pad = max(abs(lo), 1.0) * 0.5
        return lo - pad, hi + pad
    return lo, hi


def _axes(xlo, xhi, ylo, yhi):
    x0, x1 = PAD_L, W - PAD_R
    y0, y1 = H - PAD_B, PAD_T
    out = [f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
           f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>']
    for v, x in ((xlo, x0), (xhi, x1)):
        out.append(f'<text x="{x}" y="{y0 + 16}" font-family="sans-serif" font-size="10" '
                   f'text-anchor="middle">{v:.4g}</text>')
    for v, y in ((ylo, y0), (yhi, y1)):
        out.append(f'<text x="{x0 - 4}" y="{y + 3}" font-family="sans-serif" font-size="10" '
                   f'text-anchor="end">{v:.4g}</text>')
    return out


def _mapper(xlo, xhi, ylo, yhi):
    sx = (W - PAD_L - PAD_R) / (xhi - xlo)
    sy = (H - PAD_T - PAD_B) / (yhi - ylo)
    return lambda x, y: (PAD_L + (x - xlo) * sx, H - PAD_B - (y - ylo) * sy)


def line_plot(series, title="", markers=False):
    """``series`` is a list of (label, xs, ys). Empty input gives empty axes."""
    xs_all = [float(v) for _, xs, _ in series for v in xs]
    ys_all = [float(v) for _, _, ys in series for v in ys]
    xlo, xhi = _range(xs_all)
    ylo, yhi = _range(ys_all)
    out = _head(title) + _axes(xlo, xhi, ylo, yhi)
    to = _mapper(xlo, xhi, ylo, yhi)
    for i, (label, xs, ys) in enumerate(series):
        col = COLORS[i % len(COLORS)]
        pts = [to(float(x), float(y)) for x, y in zip(xs, ys) if math.isfinite(float(y))]
        if pts:
            out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="'
                       + " ".join(f"{_f(a)},{_f(b)}" for a, b in pts) + '"/>')
            if markers:
                out.extend(f'<circle cx="{_f(a)}" cy="{_f(b)}" r="2.5" fill="{col}"/>' for a, b in pts)
        out.append(f'<text x="{W - PAD_R - 4}" y="{PAD_T + 14 * (i + 1)}" font-family="sans-serif" '
                   f'font-size="10" text-anchor="end" fill="{col}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def histogram(values, bins=20, title=""):
    vals = np.asarray([v for v in np.ravel(values) if math.isfinite(v)], dtype=float)
    if vals.size == 0:
        return line_plot([], title)
    lo, hi = _range(list(vals))
    counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
    out = _head(title) + _axes(lo, hi, 0.0, float(max(counts.max(), 1)))
    to = _mapper(lo, hi, 0.0, float(max(counts.max(), 1)))
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        x0, y0 = to(a, c)
        x1, y1 = to(b, 0.0)
        out.append(f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(x1 - x0)}" height="{_f(y1 - y0)}" '
                   f'fill="{COLORS[0]}" stroke="white" stroke-width="0.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cell_map(values, title=""):
    """Grayscale cell map of a 2D array (row index = x, drawn left to right)."""
    a = np.asarray(values, dtype=float)
    lo, hi = _range(list(a.ravel()))
    nx, ny = a.shape
    cw = (W - PAD_L - PAD_R) / nx
    ch = (H - PAD_T - PAD_B) / ny
    out = _head(title)
    for i in range(nx):
        for j in range(ny):
            g = int(round(255 * (a[i, j] - lo) / (hi - lo))) if math.isfinite(a[i, j]) else 0
            y = H - PAD_B - (j + 1) * ch
            out.append(f'<rect x="{_f(PAD_L + i * cw)}" y="{_f(y)}" width="{_f(cw)}" '
                       f'height="{_f(ch)}" fill="rgb({g},{g},{g})"/>')
    out.append(f'<text x="{PAD_L}" y="{H - 10}" font-family="sans-serif" font-size="10">'
               f'min {lo:.4g}  max {hi:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
