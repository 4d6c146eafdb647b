"""Minimal native SVG emission for documentation plots.

Deliberately dependency-free and deterministic: fixed formatting, no
timestamps.  Plots are artifacts for humans, not acceptance surfaces.
"""

from __future__ import annotations

import numpy as np

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def line_plot(
    curves,
    width: int = 720,
    height: int = 420,
    margin: int = 48,
    title: str = "",
    labels=None,
) -> str:
    """Polyline plot of (x, y) arrays; returns the SVG text."""
    xs_all = np.concatenate([np.asarray(c[0], dtype=float) for c in curves])
    ys_all = np.concatenate([np.asarray(c[1], dtype=float) for c in curves])
    finite = np.isfinite(xs_all) & np.isfinite(ys_all)
    x0, x1 = float(xs_all[finite].min()), float(xs_all[finite].max())
    y0, y1 = float(ys_all[finite].min()), float(ys_all[finite].max())
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    iw, ih = width - 2 * margin, height - 2 * margin

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * iw

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * ih

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin}" y="{margin}" width="{iw}" height="{ih}" fill="none" '
        'stroke="#888" stroke-width="1"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width // 2}" y="{margin - 16}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="15">{title}</text>'
        )
    for k, (cx, cy) in enumerate(curves):
        cx = np.asarray(cx, dtype=float)
        cy = np.asarray(cy, dtype=float)
        ok = np.isfinite(cx) & np.isfinite(cy)
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(cx[ok], cy[ok]))
        color = _PALETTE[k % len(_PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if labels and k < len(labels):
            parts.append(
                f'<text x="{margin + 8}" y="{margin + 18 + 16 * k}" font-family="sans-serif" '
                f'font-size="12" fill="{color}">{labels[k]}</text>'
            )
    for val, anchor, x, y in (
        (x0, "start", margin, height - margin + 16),
        (x1, "end", width - margin, height - margin + 16),
        (y0, "start", 4, height - margin),
        (y1, "start", 4, margin + 4),
    ):
        parts.append(
            f'<text x="{x}" y="{y}" text-anchor="{anchor}" font-family="sans-serif" '
            f'font-size="11">{_fmt(val)}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
