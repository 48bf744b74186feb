"""Dependency-free SVG line plots with a provenance comment."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H = 640, 420
ML, MR, MT, MB = 70, 20, 40, 55


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [start + k * step for k in range(int((hi - start) / step + 1e-9) + 1)]


def line_plot(path, series, xlabel="", ylabel="", title="", provenance="", hlines=(),
              logy=False, step=False):
    """Write ``series`` = [(label, x, y), ...] as a standalone SVG file.

    ``hlines`` holds ``(label, y)`` dashed reference lines. With ``step``
    each series is drawn as a histogram outline with ``len(x) = len(y) + 1``.
    """
    xs = np.concatenate([np.asarray(s[1], float) for s in series]) if series else np.zeros(1)
    ys = np.concatenate([np.asarray(s[2], float) for s in series]) if series else np.zeros(1)
    ys = np.concatenate([ys, [h[1] for h in hlines]]) if hlines else ys
    fin = np.isfinite(ys) & ((ys > 0) if logy else True)
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    y0, y1 = (float(ys[fin].min()), float(ys[fin].max())) if fin.any() else (0.0, 1.0)
    if logy:
        y0, y1 = math.log10(y0), math.log10(y1)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return ML + (x - x0) / (x1 - x0) * (W - ML - MR)

    def py(y):
        if logy:
            y = math.log10(y) if y > 0 else y0
        return H - MB - (y - y0) / (y1 - y0) * (H - MT - MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'font-family="sans-serif" font-size="12">']
    if provenance:
        out.append(f"<!-- {escape(provenance).replace('--', '- -')} -->")
    out.append(f'<rect width="{W}" height="{H}" fill="white"/>')
    out.append(f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
               f'fill="none" stroke="black"/>')
    for t in _ticks(x0, x1):
        out.append(f'<text x="{px(t):.1f}" y="{H - MB + 16}" text-anchor="middle">{t:.4g}</text>')
    if logy:
        yt = [10.0**k for k in range(math.ceil(y0), math.floor(y1) + 1)]
    else:
        yt = _ticks(y0, y1)
    for t in yt:
        out.append(f'<text x="{ML - 6}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{H / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>')
    for label, y in hlines:
        out.append(f'<line x1="{ML}" x2="{W - MR}" y1="{py(y):.1f}" y2="{py(y):.1f}" '
                   f'stroke="gray" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{W - MR - 4}" y="{py(y) - 4:.1f}" text-anchor="end" '
                   f'fill="gray">{escape(label)}</text>')
    for k, (label, x, y) in enumerate(series):
        x, y = np.asarray(x, float), np.asarray(y, float)
        if step:
            pts = [(x[0], 0.0)]
            for i, v in enumerate(y):
                pts += [(x[i], v), (x[i + 1], v)]
            pts.append((x[-1], 0.0))
        else:
            pts = [(a, b) for a, b in zip(x, y) if np.isfinite(b)]
        c = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{px(a):.1f},{py(b):.1f}" for a, b in pts)
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{coords}"/>')
        out.append(f'<text x="{ML + 8}" y="{MT + 16 + 15 * k}" fill="{c}">{escape(label)}</text>')
    out.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")
