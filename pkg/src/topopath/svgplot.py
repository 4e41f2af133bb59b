"""Standalone SVG emitters for trajectories, diagrams, heatmaps, and paths.

Every function returns the complete SVG document as a string. Output is
deterministic: fixed canvas geometry, %.6g coordinate formatting, no
timestamps, and an optional provenance comment right after the opening
tag so a plot can name the data file it came from. Rendering here is
for post-hoc inspection only; nothing downstream reads these files.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "diagram_plot",
    "heatmap",
    "line_plot",
    "path_over_heatmap",
    "phase_plot",
]

WIDTH = 640
HEIGHT = 480
MARGIN = (56.0, 16.0, 30.0, 46.0)  # left, right, top, bottom
FONT = 'font-family="sans-serif"'

# compact viridis ramp, linearly interpolated between anchors
_VIRIDIS = (
    (0.0, 68, 1, 84),
    (0.125, 72, 40, 120),
    (0.25, 62, 74, 137),
    (0.375, 49, 104, 142),
    (0.5, 38, 130, 142),
    (0.625, 31, 158, 137),
    (0.75, 53, 183, 121),
    (0.875, 109, 205, 89),
    (1.0, 253, 231, 37),
)

_SERIES_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def _num(v: float) -> str:
    return f"{v:.6g}"


def _color(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    for (t0, r0, g0, b0), (t1, r1, g1, b1) in zip(_VIRIDIS, _VIRIDIS[1:]):
        if t <= t1:
            w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            r = round(r0 + w * (r1 - r0))
            g = round(g0 + w * (g1 - g0))
            b = round(b0 + w * (b1 - b0))
            return f"#{r:02x}{g:02x}{b:02x}"
    return "#fde725"


def _nice_ticks(lo: float, hi: float, n: int = 5):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


class _Frame:
    """Data-to-pixel mapping inside the margins, plus shared chrome."""

    def __init__(self, xlo, xhi, ylo, yhi, width=WIDTH, height=HEIGHT, right_pad=0.0):
        if xhi <= xlo:
            pad = max(abs(xlo), 1.0) * 0.5
            xlo, xhi = xlo - pad, xhi + pad
        if yhi <= ylo:
            pad = max(abs(ylo), 1.0) * 0.5
            ylo, yhi = ylo - pad, yhi + pad
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi
        left, right, top, bottom = MARGIN
        self.px0 = left
        self.px1 = width - right - right_pad
        self.py0 = top
        self.py1 = height - bottom
        self.width = width
        self.height = height

    def x(self, v: float) -> float:
        return self.px0 + (v - self.xlo) / (self.xhi - self.xlo) * (self.px1 - self.px0)

    def y(self, v: float) -> float:
        return self.py1 - (v - self.ylo) / (self.yhi - self.ylo) * (self.py1 - self.py0)

    def open(self, provenance: Optional[str]) -> list:
        parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
            f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">'
        ]
        if provenance:
            safe = provenance.replace("--", "- -")
            parts.append(f"<!-- {safe} -->")
        parts.append(f'<rect width="{self.width}" height="{self.height}" fill="white"/>')
        return parts

    def axes(self, title: str, xlabel: str, ylabel: str) -> list:
        parts = [
            f'<rect x="{_num(self.px0)}" y="{_num(self.py0)}" '
            f'width="{_num(self.px1 - self.px0)}" height="{_num(self.py1 - self.py0)}" '
            'fill="none" stroke="black" stroke-width="1"/>'
        ]
        for t in _nice_ticks(self.xlo, self.xhi):
            px = self.x(t)
            parts.append(
                f'<line x1="{_num(px)}" y1="{_num(self.py1)}" x2="{_num(px)}" '
                f'y2="{_num(self.py1 + 4)}" stroke="black" stroke-width="1"/>'
            )
            parts.append(
                f'<text x="{_num(px)}" y="{_num(self.py1 + 16)}" {FONT} '
                f'font-size="11" text-anchor="middle">{_num(t)}</text>'
            )
        for t in _nice_ticks(self.ylo, self.yhi):
            py = self.y(t)
            parts.append(
                f'<line x1="{_num(self.px0 - 4)}" y1="{_num(py)}" x2="{_num(self.px0)}" '
                f'y2="{_num(py)}" stroke="black" stroke-width="1"/>'
            )
            parts.append(
                f'<text x="{_num(self.px0 - 7)}" y="{_num(py + 4)}" {FONT} '
                f'font-size="11" text-anchor="end">{_num(t)}</text>'
            )
        cx = 0.5 * (self.px0 + self.px1)
        parts.append(
            f'<text x="{_num(cx)}" y="18" {FONT} font-size="14" '
            f'text-anchor="middle">{title}</text>'
        )
        parts.append(
            f'<text x="{_num(cx)}" y="{_num(self.height - 8)}" {FONT} '
            f'font-size="12" text-anchor="middle">{xlabel}</text>'
        )
        parts.append(
            f'<text x="14" y="{_num(0.5 * (self.py0 + self.py1))}" {FONT} font-size="12" '
            f'text-anchor="middle" transform="rotate(-90 14 {_num(0.5 * (self.py0 + self.py1))})"'
            f'>{ylabel}</text>'
        )
        return parts


def _polyline(frame: _Frame, xs, ys, stroke: str, width: float = 1.2, dash: str = "") -> str:
    pts = " ".join(
        f"{_num(frame.x(float(a)))},{_num(frame.y(float(b)))}" for a, b in zip(xs, ys)
    )
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (
        f'<polyline points="{pts}" fill="none" stroke="{stroke}" '
        f'stroke-width="{_num(width)}"{extra}/>'
    )


def line_plot(
    x: np.ndarray,
    series: Sequence[np.ndarray],
    labels: Sequence[str],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    provenance: Optional[str] = None,
) -> str:
    """One or more y-series over a shared x axis, with a small legend."""
    x = np.asarray(x, dtype=np.float64)
    ys = [np.asarray(s, dtype=np.float64) for s in series]
    finite = np.concatenate([s[np.isfinite(s)] for s in ys]) if ys else np.array([0.0])
    if finite.size == 0:
        finite = np.array([0.0])
    frame = _Frame(float(x.min()), float(x.max()), float(finite.min()), float(finite.max()))
    parts = frame.open(provenance) + frame.axes(title, xlabel, ylabel)
    for i, s in enumerate(ys):
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        mask = np.isfinite(s)
        # break the polyline at NaNs instead of bridging them
        run_x, run_y = [], []
        for xv, yv, ok in zip(x, s, mask):
            if ok:
                run_x.append(xv)
                run_y.append(yv)
            elif run_x:
                parts.append(_polyline(frame, run_x, run_y, color))
                run_x, run_y = [], []
        if run_x:
            parts.append(_polyline(frame, run_x, run_y, color))
        ly = frame.py0 + 14 + 14 * i
        parts.append(
            f'<line x1="{_num(frame.px1 - 96)}" y1="{_num(ly - 4)}" x2="{_num(frame.px1 - 76)}" '
            f'y2="{_num(ly - 4)}" stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_num(frame.px1 - 70)}" y="{_num(ly)}" {FONT} '
            f'font-size="11">{labels[i]}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def phase_plot(
    points: np.ndarray,
    title: str = "",
    xlabel: str = "x1",
    ylabel: str = "x2",
    provenance: Optional[str] = None,
) -> str:
    """Projection of a trajectory onto two coordinates, drawn as one path."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("phase_plot needs an (N, 2) array")
    frame = _Frame(float(pts[:, 0].min()), float(pts[:, 0].max()),
                   float(pts[:, 1].min()), float(pts[:, 1].max()))
    parts = frame.open(provenance) + frame.axes(title, xlabel, ylabel)
    parts.append(_polyline(frame, pts[:, 0], pts[:, 1], "#1f77b4", 0.8))
    parts.append(
        f'<circle cx="{_num(frame.x(pts[0, 0]))}" cy="{_num(frame.y(pts[0, 1]))}" '
        'r="3" fill="#d62728"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def diagram_plot(diag, title: str = "persistence diagram", provenance: Optional[str] = None) -> str:
    """Birth/death scatter with the diagonal; H0 circles, H1 squares.

    Essential classes sit on the top border with hollow markers.
    """
    finite = [p for p in diag.pairs if math.isfinite(p.death)]
    essential = [p for p in diag.pairs if not math.isfinite(p.death)]
    hi = max((p.death for p in finite), default=1.0)
    hi = max(hi, max((p.birth for p in diag.pairs), default=0.0))
    hi = hi * 1.08 if hi > 0 else 1.0
    frame = _Frame(0.0, hi, 0.0, hi)
    parts = frame.open(provenance) + frame.axes(title, "birth", "death")
    parts.append(_polyline(frame, [0.0, hi], [0.0, hi], "#999999", 1.0, dash="4 3"))
    dim_color = {0: "#1f77b4", 1: "#d62728", 2: "#2ca02c"}
    for p in finite:
        c = dim_color.get(p.dim, "#555555")
        px, py = frame.x(p.birth), frame.y(p.death)
        if p.dim == 0:
            parts.append(f'<circle cx="{_num(px)}" cy="{_num(py)}" r="3" fill="{c}"/>')
        else:
            parts.append(
                f'<rect x="{_num(px - 2.6)}" y="{_num(py - 2.6)}" width="5.2" '
                f'height="5.2" fill="{c}"/>'
            )
    for p in essential:
        c = dim_color.get(p.dim, "#555555")
        px = frame.x(p.birth)
        parts.append(
            f'<circle cx="{_num(px)}" cy="{_num(frame.py0 + 5)}" r="3.4" '
            f'fill="none" stroke="{c}" stroke-width="1.5"/>'
        )
    # tiny legend keyed by homology dimension
    for i, d in enumerate(sorted(diag.homology_dims_computed)):
        c = dim_color.get(d, "#555555")
        ly = frame.py1 - 12 - 14 * i
        parts.append(
            f'<rect x="{_num(frame.px0 + 8)}" y="{_num(ly - 8)}" width="8" height="8" fill="{c}"/>'
        )
        parts.append(
            f'<text x="{_num(frame.px0 + 20)}" y="{_num(ly)}" {FONT} font-size="11">H{d}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _heatmap_cells(frame: _Frame, xv, yv, grid) -> list:
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    span = hi - lo if hi > lo else 1.0
    # cell edges: midpoints between sample coordinates, extended at the rim
    def edges(vals):
        v = np.asarray(vals, dtype=np.float64)
        if v.size == 1:
            half = max(abs(v[0]) * 0.05, 0.5)
            return np.array([v[0] - half, v[0] + half])
        mid = 0.5 * (v[1:] + v[:-1])
        return np.concatenate([[v[0] - (mid[0] - v[0])], mid, [v[-1] + (v[-1] - mid[-1])]])

    xe, ye = edges(xv), edges(yv)
    parts = []
    for i in range(len(xv)):
        for j in range(len(yv)):
            v = grid[i, j]
            fill = "#c8c8c8" if not math.isfinite(v) else _color((v - lo) / span)
            x0, x1 = frame.x(xe[i]), frame.x(xe[i + 1])
            y0, y1 = frame.y(ye[j + 1]), frame.y(ye[j])
            parts.append(
                f'<rect x="{_num(x0)}" y="{_num(y0)}" width="{_num(x1 - x0)}" '
                f'height="{_num(y1 - y0)}" fill="{fill}"/>'
            )
    return parts, lo, hi


def _colorbar(frame: _Frame, lo: float, hi: float, label: str) -> list:
    bx = frame.px1 + 14
    parts = []
    n = 24
    for k in range(n):
        t0 = k / n
        y1 = frame.py1 - (frame.py1 - frame.py0) * (k + 1) / n
        h = (frame.py1 - frame.py0) / n
        parts.append(
            f'<rect x="{_num(bx)}" y="{_num(y1)}" width="12" height="{_num(h + 0.5)}" '
            f'fill="{_color((t0 + 0.5 / n))}"/>'
        )
    parts.append(
        f'<rect x="{_num(bx)}" y="{_num(frame.py0)}" width="12" '
        f'height="{_num(frame.py1 - frame.py0)}" fill="none" stroke="black" stroke-width="0.8"/>'
    )
    parts.append(
        f'<text x="{_num(bx + 16)}" y="{_num(frame.py1 + 4)}" {FONT} font-size="10">{_num(lo)}</text>'
    )
    parts.append(
        f'<text x="{_num(bx + 16)}" y="{_num(frame.py0 + 8)}" {FONT} font-size="10">{_num(hi)}</text>'
    )
    if label:
        parts.append(
            f'<text x="{_num(bx + 6)}" y="{_num(frame.py0 - 6)}" {FONT} '
            f'font-size="10" text-anchor="middle">{label}</text>'
        )
    return parts


def heatmap(
    x_values: np.ndarray,
    y_values: np.ndarray,
    grid: np.ndarray,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    colorbar_label: str = "",
    provenance: Optional[str] = None,
) -> str:
    """Feature grid as colored cells; non-finite cells render gray.

    grid[i, j] belongs to (x_values[i], y_values[j]).
    """
    xv = np.asarray(x_values, dtype=np.float64)
    yv = np.asarray(y_values, dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape != (xv.size, yv.size):
        raise ValueError("grid shape must be (len(x_values), len(y_values))")
    frame = _Frame(float(xv.min()), float(xv.max()), float(yv.min()), float(yv.max()), right_pad=58.0)
    parts = frame.open(provenance)
    cells, lo, hi = _heatmap_cells(frame, xv, yv, grid)
    parts += cells
    parts += frame.axes(title, xlabel, ylabel)
    parts += _colorbar(frame, lo, hi, colorbar_label)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def path_over_heatmap(
    x_values: np.ndarray,
    y_values: np.ndarray,
    grid: Optional[np.ndarray],
    path: np.ndarray,
    regions: Optional[np.ndarray] = None,
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    provenance: Optional[str] = None,
) -> str:
    """Parameter path drawn over a feature heatmap (or a plain frame).

    path is (K, 2) in the two plotted coordinates; regions, when given,
    is (K, 2, 2) stacked (lower, upper) boxes and is drawn as faint
    outlines so the sampled areas stay visible.
    """
    xv = np.asarray(x_values, dtype=np.float64)
    yv = np.asarray(y_values, dtype=np.float64)
    path = np.asarray(path, dtype=np.float64)
    if path.ndim != 2 or path.shape[1] != 2:
        raise ValueError("path must be (K, 2)")
    frame = _Frame(float(xv.min()), float(xv.max()), float(yv.min()), float(yv.max()),
                   right_pad=58.0 if grid is not None else 0.0)
    parts = frame.open(provenance)
    if grid is not None:
        grid = np.asarray(grid, dtype=np.float64)
        cells, lo, hi = _heatmap_cells(frame, xv, yv, grid)
        parts += cells
    if regions is not None:
        regions = np.asarray(regions, dtype=np.float64)
        stride = max(1, len(regions) // 40)  # cap outline count on long runs
        for box in regions[::stride]:
            (x0, y0), (x1, y1) = box
            parts.append(
                f'<rect x="{_num(frame.x(x0))}" y="{_num(frame.y(y1))}" '
                f'width="{_num(frame.x(x1) - frame.x(x0))}" '
                f'height="{_num(frame.y(y0) - frame.y(y1))}" '
                'fill="none" stroke="#ffffff" stroke-width="0.5" opacity="0.45"/>'
            )
    parts += frame.axes(title, xlabel, ylabel)
    parts.append(_polyline(frame, path[:, 0], path[:, 1], "#ffffff", 2.2))
    parts.append(_polyline(frame, path[:, 0], path[:, 1], "#d62728", 1.1))
    parts.append(
        f'<circle cx="{_num(frame.x(path[0, 0]))}" cy="{_num(frame.y(path[0, 1]))}" '
        'r="4" fill="white" stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<circle cx="{_num(frame.x(path[-1, 0]))}" cy="{_num(frame.y(path[-1, 1]))}" '
        'r="4" fill="#d62728" stroke="black" stroke-width="1"/>'
    )
    if grid is not None:
        parts += _colorbar(frame, lo, hi, "")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
