"""Standalone SVG plots: density contours with trajectory overlays.

The emitter writes plain SVG text with fixed formatting so identical inputs
produce byte-identical files. Contour lines come from a marching-squares pass
over a density grid; trajectories are polylines; labeled modes are drawn as
markers.
"""

from __future__ import annotations

import numpy as np

from .mixtures import ConditionLabel, ConditionedMixture, FrozenMixture

_W, _H, _PAD = 560, 560, 42

_TRAJ_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def density_grid(mix: ConditionedMixture, bounds: tuple[float, float, float, float],
                 resolution: int = 120) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    frozen = FrozenMixture(mix)
    dens = np.zeros((resolution, resolution))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            dens[i, j] = np.exp(frozen.log_density(np.array([x, y])))
    return xs, ys, dens


def marching_squares(xs: np.ndarray, ys: np.ndarray, grid: np.ndarray,
                     level: float) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Line segments of the iso-contour at `level` (linear edge interpolation)."""

    def interp(pa, pb, va, vb):
        t = 0.5 if vb == va else (level - va) / (vb - va)
        return (pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1]))

    segments = []
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            corners = [(xs[i], ys[j]), (xs[i + 1], ys[j]),
                       (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])]
            vals = [grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]]
            case = sum(1 << k for k, v in enumerate(vals) if v > level)
            if case in (0, 15):
                continue
            edges = {
                0: interp(corners[0], corners[1], vals[0], vals[1]),
                1: interp(corners[1], corners[2], vals[1], vals[2]),
                2: interp(corners[3], corners[2], vals[3], vals[2]),
                3: interp(corners[0], corners[3], vals[0], vals[3]),
            }
            lookup = {
                1: [(3, 0)], 2: [(0, 1)], 3: [(3, 1)], 4: [(1, 2)],
                6: [(0, 2)], 7: [(3, 2)], 8: [(2, 3)], 9: [(2, 0)],
                11: [(2, 1)], 12: [(1, 3)], 13: [(1, 0)], 14: [(0, 3)],
            }
            if case in (5, 10):
                center = sum(vals) / 4.0
                if case == 5:
                    pairs = [(3, 0), (1, 2)] if center <= level else [(3, 2), (1, 0)]
                else:
                    pairs = [(0, 1), (2, 3)] if center <= level else [(0, 3), (2, 1)]
            else:
                pairs = lookup[case]
            for a, b in pairs:
                segments.append((edges[a], edges[b]))
    return segments


class _Canvas:
    def __init__(self, bounds):
        self.x0, self.x1, self.y0, self.y1 = bounds

    def px(self, x: float) -> float:
        return _PAD + (x - self.x0) / (self.x1 - self.x0) * (_W - 2 * _PAD)

    def py(self, y: float) -> float:
        return _H - _PAD - (y - self.y0) / (self.y1 - self.y0) * (_H - 2 * _PAD)


def _star(cx: float, cy: float, r: float, color: str) -> str:
    pts = []
    for k in range(10):
        rad = r if k % 2 == 0 else 0.4 * r
        ang = -np.pi / 2 + k * np.pi / 5
        pts.append(f"{_fmt(cx + rad * np.cos(ang))},{_fmt(cy + rad * np.sin(ang))}")
    return (f'<polygon points="{" ".join(pts)}" fill="{color}" '
            f'stroke="#333333" stroke-width="0.8"/>')


def plot_trajectories_svg(mix: ConditionedMixture, trajectories: list[np.ndarray],
                          labels: list[str] | None = None,
                          bounds: tuple[float, float, float, float] | None = None,
                          title: str = "", digest: str = "",
                          levels: int = 8, resolution: int = 110) -> str:
    """SVG text: unconditional density contours, labeled modes, trajectory overlays."""
    if bounds is None:
        means = mix.means()
        lo = means.min(axis=0) - 1.2
        hi = means.max(axis=0) + 1.2
        bounds = (float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))
    cv = _Canvas(bounds)
    xs, ys, grid = density_grid(mix, bounds, resolution)
    gmax = grid.max()
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
    ]
    if digest:
        parts.append(f"<!-- digest={digest} -->")
    parts.append(f'<rect width="{_W}" height="{_H}" fill="#ffffff"/>')
    parts.append(f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" '
                 f'height="{_H - 2 * _PAD}" fill="none" stroke="#888888"/>')
    if title:
        parts.append(f'<text x="{_W // 2}" y="24" text-anchor="middle" '
                     f'font-family="monospace" font-size="13">{title}</text>')

    for k in range(1, levels + 1):
        level = gmax * k / (levels + 1)
        shade = 230 - int(120 * k / levels)
        color = f"#{shade:02x}{shade:02x}f0"
        for (xa, ya), (xb, yb) in marching_squares(xs, ys, grid, level):
            parts.append(f'<line x1="{_fmt(cv.px(xa))}" y1="{_fmt(cv.py(ya))}" '
                         f'x2="{_fmt(cv.px(xb))}" y2="{_fmt(cv.py(yb))}" '
                         f'stroke="{color}" stroke-width="1"/>')

    marker_styles = {ConditionLabel.UNCONDITIONAL: "#777777",
                     ConditionLabel.TEXT_ONLY: "#2ca02c",
                     ConditionLabel.IMAGE_ONLY: "#e6b800",
                     ConditionLabel.BOTH: "#d62728"}
    for comp, label in mix.components:
        parts.append(_star(cv.px(comp.mean[0]), cv.py(comp.mean[1]), 7.0,
                           marker_styles[label]))

    for idx, traj in enumerate(trajectories):
        color = _TRAJ_COLORS[idx % len(_TRAJ_COLORS)]
        pts = " ".join(f"{_fmt(cv.px(p[0]))},{_fmt(cv.py(p[1]))}" for p in traj)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.2" opacity="0.85"/>')
        start, end = traj[0], traj[-1]
        parts.append(f'<circle cx="{_fmt(cv.px(start[0]))}" cy="{_fmt(cv.py(start[1]))}" '
                     f'r="3" fill="none" stroke="{color}"/>')
        parts.append(f'<circle cx="{_fmt(cv.px(end[0]))}" cy="{_fmt(cv.py(end[1]))}" '
                     f'r="3" fill="{color}"/>')
        if labels and idx < len(labels):
            parts.append(f'<text x="{_W - _PAD - 120}" y="{_PAD + 16 + 14 * idx}" '
                         f'font-family="monospace" font-size="11" fill="{color}">'
                         f'{labels[idx]}</text>')

    for tick in range(5):
        fx = bounds[0] + tick * (bounds[1] - bounds[0]) / 4
        fy = bounds[2] + tick * (bounds[3] - bounds[2]) / 4
        parts.append(f'<text x="{_fmt(cv.px(fx))}" y="{_H - _PAD + 16}" '
                     f'text-anchor="middle" font-family="monospace" font-size="10">'
                     f'{fx:.1f}</text>')
        parts.append(f'<text x="{_PAD - 6}" y="{_fmt(cv.py(fy) + 3)}" '
                     f'text-anchor="end" font-family="monospace" font-size="10">'
                     f'{fy:.1f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(text: str, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
