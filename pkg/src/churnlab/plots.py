"""Minimal deterministic SVG charts built from the exported plot-data tables.

Hand-written markup (fixed precision, fixed element order) so identical
input gives byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 720, 440
MARGIN = dict(left=190, right=30, top=40, bottom=50)


def _f(x: float) -> str:
    return f"{x:.2f}"


def _open(width: int, height: int, title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
    ]


def _text(x, y, s, anchor="start", size=None, rotate=None) -> str:
    extra = f' font-size="{size}"' if size else ""
    if rotate is not None:
        extra += f' transform="rotate({rotate} {_f(x)} {_f(y)})"'
    return f'<text x="{_f(x)}" y="{_f(y)}" text-anchor="{anchor}"{extra}>{escape(str(s))}</text>'


def placeholder_svg(title: str) -> str:
    parts = _open(WIDTH, HEIGHT, title)
    parts.append(_text(WIDTH / 2, HEIGHT / 2, "no data", anchor="middle", size=16))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** __import__("math").floor(__import__("math").log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    start = __import__("math").ceil(lo / step) * step
    ticks, t = [], start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


class _Axes:
    def __init__(self, x0, x1, y0, y1, px0, px1, py0, py1):
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1
        self.px0, self.px1, self.py0, self.py1 = px0, px1, py0, py1

    def x(self, v):
        span = self.x1 - self.x0 or 1.0
        return self.px0 + (v - self.x0) / span * (self.px1 - self.px0)

    def y(self, v):
        span = self.y1 - self.y0 or 1.0
        return self.py1 - (v - self.y0) / span * (self.py1 - self.py0)


def importance_bar_svg(rows: Sequence[dict], title: str = "Mean |SHAP| (log-odds)") -> str:
    if not rows:
        return placeholder_svg(title)
    n = len(rows)
    height = max(HEIGHT, MARGIN["top"] + MARGIN["bottom"] + 18 * n)
    parts = _open(WIDTH, height, title)
    vmax = max(float(r["mean_abs_shap"]) for r in rows) or 1.0
    ax = _Axes(0.0, vmax, 0, n, MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], height - MARGIN["bottom"])
    band = (ax.py1 - ax.py0) / n
    for i, r in enumerate(rows):
        y = ax.py0 + i * band
        w = ax.x(float(r["mean_abs_shap"])) - ax.px0
        parts.append(
            f'<rect x="{_f(ax.px0)}" y="{_f(y + 0.15 * band)}" width="{_f(w)}" '
            f'height="{_f(0.7 * band)}" fill="#1f77b4"/>'
        )
        parts.append(_text(ax.px0 - 6, y + 0.6 * band, r["feature"], anchor="end"))
    for t in _nice_ticks(0.0, vmax):
        parts.append(_text(ax.x(t), ax.py1 + 16, f"{t:g}", anchor="middle"))
    parts.append(f'<line x1="{_f(ax.px0)}" y1="{_f(ax.py1)}" x2="{_f(ax.px1)}" y2="{_f(ax.py1)}" stroke="black"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _color(t: float) -> str:
    # blue (low feature value) -> red (high)
    t = min(max(t, 0.0), 1.0)
    r = int(round(30 + t * (220 - 30)))
    g = int(round(136 - t * (136 - 40)))
    b = int(round(229 - t * (229 - 60)))
    return f"#{r:02x}{g:02x}{b:02x}"


def beeswarm_svg(rows: Sequence[dict], title: str = "SHAP value by feature", max_features: int = 20) -> str:
    if not rows:
        return placeholder_svg(title)
    features: list[str] = []
    for r in rows:
        if r["feature"] not in features:
            features.append(r["feature"])
    features = features[:max_features]
    keep = set(features)
    pts = [r for r in rows if r["feature"] in keep]
    n = len(features)
    height = max(HEIGHT, MARGIN["top"] + MARGIN["bottom"] + 26 * n)
    parts = _open(WIDTH, height, title)
    vals = [float(r["shap_value"]) for r in pts]
    lo, hi = min(vals + [0.0]), max(vals + [0.0])
    ax = _Axes(lo, hi, 0, n, MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], height - MARGIN["bottom"])
    band = (ax.py1 - ax.py0) / n
    parts.append(
        f'<line x1="{_f(ax.x(0.0))}" y1="{_f(ax.py0)}" x2="{_f(ax.x(0.0))}" y2="{_f(ax.py1)}" stroke="#999"/>'
    )
    for i, name in enumerate(features):
        yc = ax.py0 + (i + 0.5) * band
        parts.append(_text(ax.px0 - 6, yc + 4, name, anchor="end"))
        stacks: dict[int, int] = {}
        for r in pts:
            if r["feature"] != name:
                continue
            px = ax.x(float(r["shap_value"]))
            bucket = int(px // 2)
            k = stacks.get(bucket, 0)
            stacks[bucket] = k + 1
            offset = ((k + 1) // 2) * (1 if k % 2 else -1) * 1.6
            offset = max(-0.45 * band, min(0.45 * band, offset))
            parts.append(
                f'<circle cx="{_f(px)}" cy="{_f(yc + offset)}" r="1.6" '
                f'fill="{_color(float(r["normalized_value"]))}"/>'
            )
    for t in _nice_ticks(lo, hi):
        parts.append(_text(ax.x(t), ax.py1 + 16, f"{t:g}", anchor="middle"))
    parts.append(_text((ax.px0 + ax.px1) / 2, ax.py1 + 36, "SHAP value (log-odds)", anchor="middle"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def km_step_points(rows: Sequence[dict], key: str = "S", t_max: float | None = None) -> list[tuple[float, float]]:
    """Vertices of the right-continuous step function starting at (0, 1)."""
    pts = [(0.0, 1.0)]
    level = 1.0
    for r in rows:
        t = float(r["time"])
        pts.append((t, level))
        level = float(r[key])
        pts.append((t, level))
    end = t_max if t_max is not None else (float(rows[-1]["time"]) if rows else 1.0)
    if end > pts[-1][0]:
        pts.append((end, level))
    return pts


def km_svg(rows: Sequence[dict], title: str = "Kaplan-Meier survival", t_max: float | None = None) -> str:
    if not rows:
        return placeholder_svg(title)
    end = t_max if t_max is not None else float(rows[-1]["time"])
    end = max(end, 1.0)
    ymin = min(0.5, min(float(r["ci_low"]) for r in rows))
    ymin = max(0.0, (int(ymin * 10)) / 10)
    parts = _open(WIDTH, HEIGHT, title)
    ax = _Axes(0.0, end, ymin, 1.0, 70, WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"])
    hi = km_step_points(rows, "ci_high", end)
    lo = km_step_points(rows, "ci_low", end)
    band = " ".join(f"{_f(ax.x(t))},{_f(ax.y(s))}" for t, s in hi + lo[::-1])
    parts.append(f'<polygon points="{band}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>')
    line = " ".join(f"{_f(ax.x(t))},{_f(ax.y(s))}" for t, s in km_step_points(rows, "S", end))
    parts.append(f'<polyline points="{line}" fill="none" stroke="#1f77b4" stroke-width="2"/>')
    parts.append(f'<line x1="{_f(ax.px0)}" y1="{_f(ax.py1)}" x2="{_f(ax.px1)}" y2="{_f(ax.py1)}" stroke="black"/>')
    parts.append(f'<line x1="{_f(ax.px0)}" y1="{_f(ax.py0)}" x2="{_f(ax.px0)}" y2="{_f(ax.py1)}" stroke="black"/>')
    for t in _nice_ticks(0.0, end, 6):
        parts.append(_text(ax.x(t), ax.py1 + 16, f"{t:g}", anchor="middle"))
    for s in _nice_ticks(ymin, 1.0, 5):
        parts.append(_text(ax.px0 - 6, ax.y(s) + 4, f"{s:g}", anchor="end"))
    parts.append(_text((ax.px0 + ax.px1) / 2, HEIGHT - 12, "Tenure (months)", anchor="middle"))
    parts.append(_text(18, (ax.py0 + ax.py1) / 2, "Survival probability", anchor="middle", rotate=-90))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def rfm_box_svg(rows: Sequence[dict], title: str = "Recency, Frequency and Monetary by segment") -> str:
    if not rows:
        return placeholder_svg(title)
    metrics: list[str] = []
    segments: list[str] = []
    for r in rows:
        if r["metric"] not in metrics:
            metrics.append(r["metric"])
        if r["segment"] not in segments:
            segments.append(r["segment"])
    width = 3 * 300
    parts = _open(width, HEIGHT, title)
    panel_w = width / len(metrics)
    for k, metric in enumerate(metrics):
        sub = [r for r in rows if r["metric"] == metric]
        lo = min(float(r["whisker_low"]) for r in sub)
        hi = max(float(r["whisker_high"]) for r in sub)
        if hi == lo:
            hi = lo + 1.0
        ax = _Axes(0, len(segments), lo, hi, k * panel_w + 50, (k + 1) * panel_w - 15, 50, HEIGHT - 90)
        parts.append(_text((ax.px0 + ax.px1) / 2, 40, metric.capitalize(), anchor="middle", size=12))
        slot = (ax.px1 - ax.px0) / len(segments)
        for r in sub:
            i = segments.index(r["segment"])
            xc = ax.px0 + (i + 0.5) * slot
            half = 0.3 * slot
            q1, q3 = ax.y(float(r["q1"])), ax.y(float(r["q3"]))
            parts.append(
                f'<line x1="{_f(xc)}" y1="{_f(ax.y(float(r["whisker_low"])))}" x2="{_f(xc)}" '
                f'y2="{_f(ax.y(float(r["whisker_high"])))}" stroke="black"/>'
            )
            parts.append(
                f'<rect x="{_f(xc - half)}" y="{_f(q3)}" width="{_f(2 * half)}" '
                f'height="{_f(max(q1 - q3, 0.5))}" fill="#9ecae1" stroke="black"/>'
            )
            med = ax.y(float(r["median"]))
            parts.append(
                f'<line x1="{_f(xc - half)}" y1="{_f(med)}" x2="{_f(xc + half)}" y2="{_f(med)}" '
                f'stroke="#d62728" stroke-width="2"/>'
            )
            parts.append(_text(xc, ax.py1 + 14, r["segment"], anchor="end", size=10, rotate=-40))
        for t in _nice_ticks(lo, hi, 4):
            parts.append(_text(ax.px0 - 4, ax.y(t) + 4, f"{t:g}", anchor="end", size=10))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(svg: str, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
