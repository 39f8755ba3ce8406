"""Static SVG scatter plots of Pareto fronts."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

W, H, PAD = 420, 420, 50


def scatter_svg(
    series: dict[str, Sequence[tuple[float, float]]],
    labels: dict[str, Sequence[str]] | None = None,
    xlabel: str = "objective 1",
    ylabel: str = "objective 2",
    title: str = "",
) -> str:
    """One circle per point; each carries ``data-label`` and a hover title."""
    pts = [p for s in series.values() for p in s]
    if pts:
        xs, ys = [p[0] for p in pts], [p[1] for p in pts]
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def sx(x):
        return PAD + (x - x0) / (x1 - x0) * (W - 2 * PAD)

    def sy(y):
        return H - PAD - (y - y0) / (y1 - y0) * (H - 2 * PAD)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {H / 2})">{escape(ylabel)}</text>',
        f'<text x="{PAD}" y="{H - PAD + 16}" font-size="10">{x0:.3g}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 16}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 4}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    if title:
        out.append(f'<text x="{W / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    for i, (name, s) in enumerate(series.items()):
        color = colors[i % len(colors)]
        out.append(f'<g data-series="{escape(name)}">')
        lab = (labels or {}).get(name) or [""] * len(s)
        for (x, y), text in zip(s, lab):
            out.append(
                f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="{color}" '
                f'data-label="{escape(text)}" data-x="{x!r}" data-y="{y!r}">'
                f"<title>{escape(name)} {escape(text)} ({x:.4f}, {y:.4f})</title></circle>"
            )
        out.append("</g>")
        out.append(
            f'<text x="{W - PAD}" y="{PAD + 14 * i}" font-size="11" text-anchor="end" fill="{color}">{escape(name)}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
