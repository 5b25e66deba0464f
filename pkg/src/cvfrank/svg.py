"""Minimal deterministic SVG bar charts (counts per integer bin)."""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#4477aa", "#ee6677", "#228833", "#ccbb44")
WIDTH, HEIGHT = 720, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 60


def _nice_max(v: float) -> float:
    if v <= 0:
        return 1.0
    mag = 10 ** (len(str(int(v))) - 1)
    for step in (1, 2, 5, 10):
        if v <= step * mag:
            return float(step * mag)
    return float(10 * mag)


def bar_chart(keys, series, title="", xlabel="", ylabel="count") -> str:
    """Grouped bar chart.

    ``keys`` are the integer bin labels in display order and ``series`` a list
    of ``(name, values)`` pairs aligned with ``keys``. A legend is drawn when
    there is more than one series.
    """
    keys = list(keys)
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B
    top = _nice_max(max((max(v, default=0) for _, v in series), default=0))
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]
    x0, y0 = MARGIN_L, MARGIN_T + plot_h
    out.append(f'<g class="axes" stroke="black">'
               f'<line x1="{x0}" y1="{MARGIN_T}" x2="{x0}" y2="{y0}"/>'
               f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}"/></g>')
    for i in range(5):
        val = top * i / 4
        y = y0 - plot_h * i / 4
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.1f}" text-anchor="end">{val:g}</text>')
    if keys:
        slot = plot_w / len(keys)
        bar_w = slot * 0.8 / max(len(series), 1)
        label_every = max(1, len(keys) // 20)
        for s_idx, (name, values) in enumerate(series):
            color = PALETTE[s_idx % len(PALETTE)]
            out.append(f'<g class="series" data-name="{escape(str(name))}" fill="{color}">')
            for k_idx, v in enumerate(values):
                h = plot_h * v / top
                x = x0 + slot * k_idx + slot * 0.1 + bar_w * s_idx
                out.append(f'<rect x="{x:.2f}" y="{y0 - h:.2f}" width="{bar_w:.2f}" height="{h:.2f}">'
                           f'<title>{keys[k_idx]}: {v}</title></rect>')
            out.append("</g>")
        for k_idx, key in enumerate(keys):
            if k_idx % label_every == 0:
                x = x0 + slot * (k_idx + 0.5)
                out.append(f'<text x="{x:.2f}" y="{y0 + 15}" text-anchor="middle">{key}</text>')
    out.append(f'<text x="{x0 + plot_w / 2:.1f}" y="{HEIGHT - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{MARGIN_T + plot_h / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN_T + plot_h / 2:.1f})">{escape(ylabel)}</text>')
    if len(series) > 1:
        out.append('<g class="legend">')
        for s_idx, (name, _) in enumerate(series):
            y = MARGIN_T + 4 + 16 * s_idx
            lx = WIDTH - MARGIN_R - 130
            out.append(f'<rect x="{lx}" y="{y}" width="12" height="12" fill="{PALETTE[s_idx % len(PALETTE)]}"/>'
                       f'<text x="{lx + 18}" y="{y + 10}">{escape(str(name))}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
