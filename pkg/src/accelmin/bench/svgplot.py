"""Self-contained deterministic SVG convergence plots.

Hand-rolled on purpose: the output bytes must be a pure function of the
input data (no library version strings, ids, or timestamps), so repeated
runs of the same experiment re-emit identical files.
"""

from __future__ import annotations

import math

__all__ = ["emit_plot"]

WIDTH, HEIGHT = 760, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 80, 170, 40, 60
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#17becf", "#7f7f7f")

X_LABELS = {"oracle_calls": "oracle calls (gradient + block-min)",
            "iteration": "iteration k"}
Y_LABELS = {"gap": "objective gap f - f*", "grad_norm": "gradient norm"}

_FLOOR = 1e-300


def _curve(trace, x_axis: str, y_axis: str, f_star: float):
    xs, ys = [], []
    for rec in trace:
        if x_axis == "iteration":
            xs.append(float(rec.k))
        else:
            xs.append(float(rec.grad_calls + rec.block_min_calls))
        if y_axis == "grad_norm":
            ys.append(math.sqrt(max(rec.grad_norm_sq, 0.0)))
        else:
            ys.append(rec.f_val - f_star)
    return xs, ys


def _nice_linear_ticks(lo: float, hi: float, target: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(t)
        t += step
    return ticks


def _decade_ticks(lo_exp: int, hi_exp: int, max_ticks: int = 9):
    span = hi_exp - lo_exp
    step = max(1, math.ceil(span / max_ticks))
    return list(range(lo_exp, hi_exp + 1, step))


def emit_plot(traces: dict, path, x_axis: str = "oracle_calls",
              y_axis: str = "gap", f_star: float | None = None,
              title: str | None = None) -> str:
    """Write a log-scale convergence plot for the given traces.

    ``traces`` maps a legend label to a list of trace records.  ``f_star``
    is needed for the gap axis; when omitted, the smallest objective value
    across all traces is used as the proxy.  Returns the path written.
    """
    traces = {k: v for k, v in traces.items() if v}
    if not traces:
        raise ValueError("need at least one nonempty trace")
    if f_star is None:
        f_star = min(rec.f_val for tr in traces.values() for rec in tr)

    curves = {name: _curve(tr, x_axis, y_axis, f_star)
              for name, tr in traces.items()}

    x_lo = min(min(xs) for xs, _ in curves.values())
    x_hi = max(max(xs) for xs, _ in curves.values())
    if x_hi <= x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    pos = [y for _, ys in curves.values() for y in ys if y > _FLOOR]
    if pos:
        y_lo_exp = math.floor(math.log10(min(pos)))
        y_hi_exp = math.ceil(math.log10(max(pos)))
    else:
        y_lo_exp, y_hi_exp = -16, 0
    if y_hi_exp <= y_lo_exp:
        y_hi_exp = y_lo_exp + 1
    floor = 10.0 ** y_lo_exp

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def sy(y):
        e = math.log10(max(y, floor))
        return MARGIN_T + (y_hi_exp - e) / (y_hi_exp - y_lo_exp) * plot_h

    out = []
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
               f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">')
    out.append('<rect width="100%" height="100%" fill="white"/>')
    out.append('<g font-family="Helvetica,Arial,sans-serif" font-size="12" fill="black">')

    # frame
    x0, x1 = MARGIN_L, MARGIN_L + plot_w
    y0, y1 = MARGIN_T, MARGIN_T + plot_h
    out.append(f'<rect x="{x0}" y="{y0}" width="{plot_w}" height="{plot_h}" '
               'fill="none" stroke="black" stroke-width="1"/>')

    # y ticks: powers of ten
    for e in _decade_ticks(y_lo_exp, y_hi_exp):
        yy = sy(10.0 ** e)
        out.append(f'<line x1="{x0}" y1="{yy:.2f}" x2="{x1}" y2="{yy:.2f}" '
                   'stroke="#dddddd" stroke-width="0.5"/>')
        out.append(f'<text x="{x0 - 8}" y="{yy + 4:.2f}" text-anchor="end">1e{e:+03d}</text>')

    # x ticks
    for t in _nice_linear_ticks(x_lo, x_hi):
        xx = sx(t)
        out.append(f'<line x1="{xx:.2f}" y1="{y1}" x2="{xx:.2f}" y2="{y1 + 5}" '
                   'stroke="black" stroke-width="1"/>')
        out.append(f'<text x="{xx:.2f}" y="{y1 + 20}" text-anchor="middle">{t:g}</text>')

    # axis labels
    x_label = X_LABELS.get(x_axis, x_axis)
    y_label = Y_LABELS.get(y_axis, y_axis)
    out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 15}" '
               f'text-anchor="middle">{x_label}</text>')
    out.append(f'<text x="18" y="{(y0 + y1) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(y0 + y1) / 2:.2f})">{y_label} (log scale)</text>')
    if title:
        out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{MARGIN_T - 12}" '
                   f'text-anchor="middle" font-size="14">{title}</text>')

    # curves + legend
    for idx, (name, (xs, ys)) in enumerate(curves.items()):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        if len(xs) == 1:
            out.append(f'<circle cx="{sx(xs[0]):.2f}" cy="{sy(ys[0]):.2f}" r="3" '
                       f'fill="{color}"/>')
        else:
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                       'stroke-width="1.5"/>')
        ly = MARGIN_T + 16 + 18 * idx
        lx = x1 + 12
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 28}" y="{ly}">{name}</text>')

    out.append("</g>")
    out.append("</svg>")
    data = "\n".join(out) + "\n"
    with open(path, "w") as fh:
        fh.write(data)
    return str(path)
