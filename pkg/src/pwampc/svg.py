"""Minimal deterministic SVG line plots for traces and comparisons.

No external plotting runtime; output bytes depend only on the data.
"""

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")

_W, _H = 720, 260
_ML, _MR, _MT, _MB = 62, 14, 28, 34


def _fmt(x):
    return "%.6g" % x


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = np.ceil(lo / step) * step
    vals = []
    v = start
    while v <= hi + 1e-12 * step:
        vals.append(0.0 if abs(v) < 1e-12 * step else v)
        v += step
    return vals


class _Panel:
    def __init__(self, title, ylabel):
        self.title = title
        self.ylabel = ylabel
        self.series = []

    def add(self, label, x, y):
        self.series.append((label, np.asarray(x, float), np.asarray(y, float)))


def _render_panel(p, x_label, y_offset):
    xs = np.concatenate([s[1] for s in p.series])
    ys = np.concatenate([s[2] for s in p.series])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    iw = _W - _ML - _MR
    ih = _H - _MT - _MB

    def sx(v):
        return _ML + (v - x0) / (x1 - x0) * iw if x1 > x0 else _ML

    def sy(v):
        return y_offset + _MT + (y1 - v) / (y1 - y0) * ih

    out = []
    out.append(f'<rect x="{_ML}" y="{y_offset + _MT}" width="{iw}" height="{ih}" '
               f'fill="none" stroke="#888" stroke-width="1"/>')
    out.append(f'<text x="{_ML}" y="{y_offset + _MT - 8}" font-size="13" '
               f'fill="#222">{p.title}</text>')
    for tv in _ticks(x0, x1):
        px = sx(tv)
        out.append(f'<line x1="{_fmt(px)}" y1="{y_offset + _MT + ih}" x2="{_fmt(px)}" '
                   f'y2="{y_offset + _MT + ih + 4}" stroke="#888"/>')
        out.append(f'<text x="{_fmt(px)}" y="{y_offset + _MT + ih + 16}" font-size="10" '
                   f'text-anchor="middle" fill="#444">{_fmt(tv)}</text>')
    for tv in _ticks(y0, y1):
        py = sy(tv)
        out.append(f'<line x1="{_ML - 4}" y1="{_fmt(py)}" x2="{_ML}" y2="{_fmt(py)}" stroke="#888"/>')
        out.append(f'<text x="{_ML - 7}" y="{_fmt(py + 3)}" font-size="10" '
                   f'text-anchor="end" fill="#444">{_fmt(tv)}</text>')
    out.append(f'<text x="{_ML - 48}" y="{y_offset + _MT + ih / 2}" font-size="11" fill="#222" '
               f'transform="rotate(-90 {_ML - 48} {y_offset + _MT + ih / 2})" '
               f'text-anchor="middle">{p.ylabel}</text>')
    out.append(f'<text x="{_ML + iw / 2}" y="{y_offset + _H - 8}" font-size="11" '
               f'text-anchor="middle" fill="#222">{x_label}</text>')
    for i, (label, x, y) in enumerate(p.series):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        lx = _ML + iw - 8
        ly = y_offset + _MT + 14 + 13 * i
        out.append(f'<line x1="{lx - 60}" y1="{ly - 4}" x2="{lx - 40}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        out.append(f'<text x="{lx - 36}" y="{ly}" font-size="10" fill="#222">{label}</text>')
    return out


def plot(panels, x_label="time (s)"):
    """Render stacked panels; each panel is (title, ylabel, series) with
    series a list of (label, x, y).  Returns the SVG text."""
    built = []
    for title, ylabel, series in panels:
        p = _Panel(title, ylabel)
        for label, x, y in series:
            p.add(label, x, y)
        built.append(p)
    height = _H * len(built)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{height}" '
           f'viewBox="0 0 {_W} {height}">',
           f'<rect width="{_W}" height="{height}" fill="#ffffff"/>']
    for i, p in enumerate(built):
        out.extend(_render_panel(p, x_label, i * _H))
    out.append("</svg>")
    return "\n".join(out) + "\n"


def tracking_plot(trace):
    """Reference/position panel plus input panel."""
    return plot([
        ("tracking", "position (mm)",
         [("reference", trace.t, trace.r), ("position", trace.t, trace.y)]),
        ("input", "voltage (V)", [("u", trace.t, trace.u)]),
    ])


def mismatch_plot(traces):
    """Two-panel error/velocity comparison across labeled traces."""
    err_series = [(label, tr.t, tr.y - tr.r) for label, tr in traces]
    vel_series = [(label, tr.t, tr.v) for label, tr in traces]
    return plot([
        ("tracking error", "error (mm)", err_series),
        ("velocity", "velocity (mm/s)", vel_series),
    ])
