"""Log-error-versus-iteration plots emitted as plain SVG text.

No plotting dependency: the figure is assembled from text elements.  Each
run contributes exactly one polyline; legend swatches are rectangles so the
polyline count equals the run count.
"""

from __future__ import annotations

import math

__all__ = ["render_log_error_plot", "LOG_FLOOR"]

LOG_FLOOR = 1e-16  # errors at exact zero are clamped here before taking logs

ALGO_COLORS = {
    "vi": "#d62728",
    "fvi": "#2ca02c",
    "kbb": "#1f77b4",
}
FALLBACK_COLORS = ["#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]

WIDTH, HEIGHT = 720, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 24, 28, 48


def _color_for(algo: str, taken: dict) -> str:
    if algo in ALGO_COLORS:
        return ALGO_COLORS[algo]
    if algo not in taken:
        taken[algo] = FALLBACK_COLORS[len(taken) % len(FALLBACK_COLORS)]
    return taken[algo]


def _ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / target))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= target:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 10))
        t += step
    return ticks


def render_log_error_plot(series: list[dict], title: str = "") -> str:
    """Render one polyline per run.

    Each entry of ``series`` is a dict with keys ``algo``, ``label``,
    ``iters`` (list of ints) and ``errors`` (same-length list of floats).
    """
    if not series:
        raise ValueError("no runs to plot")
    pts = []
    for s in series:
        logs = [math.log10(max(e, LOG_FLOOR)) for e in s["errors"]]
        pts.append((s, logs))
    x_max = max(max(s["iters"]) for s, _ in pts)
    x_min = min(min(s["iters"]) for s, _ in pts)
    y_vals = [v for _, logs in pts for v in logs]
    y_min, y_max = min(y_vals), max(y_vals)
    if y_max - y_min < 1e-9:
        y_min, y_max = y_min - 1.0, y_max + 1.0
    pad = 0.05 * (y_max - y_min)
    y_min, y_max = y_min - pad, y_max + pad

    inner_w = WIDTH - MARGIN_L - MARGIN_R
    inner_h = HEIGHT - MARGIN_T - MARGIN_B

    def sx(x: float) -> float:
        if x_max == x_min:
            return MARGIN_L + inner_w / 2
        return MARGIN_L + (x - x_min) / (x_max - x_min) * inner_w

    def sy(y: float) -> float:
        return MARGIN_T + (y_max - y) / (y_max - y_min) * inner_h

    out = []
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    out.append(f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>')
    if title:
        out.append(
            f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>'
        )
    # Axes
    x0, y0 = MARGIN_L, HEIGHT - MARGIN_B
    out.append(
        f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}" stroke="black" stroke-width="1"/>'
    )
    out.append(
        f'<line x1="{x0}" y1="{y0}" x2="{WIDTH - MARGIN_R}" y2="{y0}" stroke="black" stroke-width="1"/>'
    )
    for t in _ticks(x_min, x_max):
        if t < x_min or t > x_max:
            continue
        px = sx(t)
        out.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 5}" stroke="black"/>')
        label = str(int(t)) if abs(t - round(t)) < 1e-9 else f"{t:g}"
        out.append(
            f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{label}</text>'
        )
    for t in _ticks(y_min, y_max):
        py = sy(t)
        out.append(f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        out.append(
            f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{t:g}</text>'
        )
    out.append(
        f'<text x="{MARGIN_L + inner_w / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">iteration</text>'
    )
    out.append(
        f'<text x="16" y="{MARGIN_T + inner_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN_T + inner_h / 2:.1f})">log10 error</text>'
    )
    # Data
    taken: dict = {}
    for s, logs in pts:
        color = _color_for(s["algo"], taken)
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(s["iters"], logs))
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>'
        )
    # Legend: one swatch per distinct algo, drawn with rects (not polylines)
    seen = []
    for s, _ in pts:
        if s["algo"] not in seen:
            seen.append(s["algo"])
    ly = MARGIN_T + 8
    for algo in seen:
        color = _color_for(algo, taken)
        lx = WIDTH - MARGIN_R - 110
        out.append(f'<rect x="{lx}" y="{ly - 9}" width="18" height="4" fill="{color}"/>')
        out.append(
            f'<text x="{lx + 24}" y="{ly - 3}" font-family="sans-serif" font-size="12">{algo}</text>'
        )
        ly += 18
    out.append("</svg>")
    return "\n".join(out) + "\n"
