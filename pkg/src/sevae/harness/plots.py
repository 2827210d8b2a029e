"""Self-contained SVG line charts of metric vs. sample size with ±1 SD bands."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from sevae.errors import ConfigError
from sevae.metrics import METRIC_NAMES

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#17becf", "#7f7f7f", "#bcbd22"]
TITLES = {"mig": "MIG", "dci_d": "DCI disentanglement", "dci_c": "DCI completeness",
          "dci_i": "DCI informativeness", "sap": "SAP", "perm_align": "Permutation alignment"}

WIDTH, HEIGHT = 560, 380
LEFT, RIGHT, TOP, BOTTOM = 64, 150, 40, 56


def summarize(rows: Sequence[dict], metric: str) -> dict:
    """{model: [(N, mean, sd), ...]} over successful rows, N ascending."""
    groups: dict = {}
    for r in rows:
        if r.get("status", "ok") != "ok" or r.get(metric) in (None, ""):
            continue
        groups.setdefault(r["model"], {}).setdefault(int(r["N"]), []).append(float(r[metric]))
    out = {}
    for model, by_n in groups.items():
        series = []
        for n in sorted(by_n):
            vals = np.asarray(by_n[n])
            sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            series.append((n, float(vals.mean()), sd))
        out[model] = series
    return out


def _num(v: float) -> str:
    return f"{v:.2f}"


def render_svg(metric: str, series: dict) -> str:
    xs = sorted({n for pts in series.values() for n, _, _ in pts})
    lo_x, hi_x = math.log10(xs[0]), math.log10(xs[-1])
    if hi_x == lo_x:
        lo_x, hi_x = lo_x - 0.5, hi_x + 0.5
    lows = [m - s for pts in series.values() for _, m, s in pts]
    highs = [m + s for pts in series.values() for _, m, s in pts]
    lo_y, hi_y = min(0.0, min(lows)), max(1.0, max(highs))
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(n):
        return LEFT + (math.log10(n) - lo_x) / (hi_x - lo_x) * pw

    def py(v):
        return TOP + (hi_y - v) / (hi_y - lo_y) * ph

    title = TITLES.get(metric, metric)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(title)} vs. sample size</title>',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + pw / 2:.2f}" y="22" text-anchor="middle" font-size="15">'
        f'{escape(title)}</text>',
    ]
    # axes, grid and ticks
    parts.append(f'<line x1="{LEFT}" y1="{_num(py(lo_y))}" x2="{LEFT + pw}" y2="{_num(py(lo_y))}" '
                 'stroke="black"/>')
    parts.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>')
    for n in xs:
        x = _num(px(n))
        parts.append(f'<line x1="{x}" y1="{TOP}" x2="{x}" y2="{TOP + ph}" stroke="#dddddd"/>')
        parts.append(f'<text x="{x}" y="{TOP + ph + 16}" text-anchor="middle">{n}</text>')
    for v in np.linspace(lo_y, hi_y, 6):
        y = _num(py(v))
        parts.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + pw}" y2="{y}" stroke="#eeeeee"/>')
        parts.append(f'<text x="{LEFT - 6}" y="{y}" text-anchor="end" '
                     f'dominant-baseline="middle">{v:.2f}</text>')
    parts.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 14}" text-anchor="middle">'
                 'training samples (log scale)</text>')
    parts.append(f'<text x="16" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {TOP + ph / 2:.2f})">{escape(title)}</text>')

    for i, (model, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        upper = [f"{_num(px(n))},{_num(py(m + s))}" for n, m, s in pts]
        lower = [f"{_num(px(n))},{_num(py(m - s))}" for n, m, s in reversed(pts)]
        parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                     'fill-opacity="0.18" stroke="none"/>')
        line = " ".join(f"{_num(px(n))},{_num(py(m))}" for n, m, _ in pts)
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>')
        for n, m, _ in pts:
            parts.append(f'<circle cx="{_num(px(n))}" cy="{_num(py(m))}" r="3" fill="{color}"/>')
        ly = TOP + 10 + 18 * i
        lx = LEFT + pw + 14
        parts.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                     'stroke-width="3"/>')
        parts.append(f'<text x="{lx + 26}" y="{ly}" dominant-baseline="middle">'
                     f'{escape(model)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(rows: Sequence[dict], output_dir, metrics: Sequence[str] = METRIC_NAMES
               ) -> list[Path]:
    """Write ``metric_<name>.svg`` for each metric; returns the paths."""
    rows = [r for r in rows if r.get("status", "ok") == "ok"]
    if not rows:
        raise ConfigError("no successful result rows to plot")
    sizes = {int(r["N"]) for r in rows}
    if len(sizes) < 2:
        raise ConfigError(f"plots need at least 2 sample sizes, got {sorted(sizes)}")
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in metrics:
        series = summarize(rows, metric)
        if not series:
            raise ConfigError(f"results have no values for metric {metric!r}")
        path = out_dir / f"metric_{metric}.svg"
        path.write_text(render_svg(metric, series))
        paths.append(path)
    return paths
