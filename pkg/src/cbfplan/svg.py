"""Standalone SVG rendering of workspaces, trees, and paths.

Output is deterministic: same inputs give byte-identical files. One SVG
user unit is 0.05 m (20 units per meter) and the y-axis is flipped to the
usual math convention. Arm scenarios are drawn in configuration space
(first two joints) with red tree edges; workspace scenarios use green
trees, blue reference paths, and red tracked paths. All colors can be
overridden from the scenario's [render] section.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import Trajectory
from .rrt import Tree
from .scenario import DEFAULT_COLORS, Scenario

UNITS_PER_METER = 20.0
MARGIN_M = 1.0


class _Canvas:
    def __init__(self, x_min, x_max, y_min, y_max):
        self.x_min = x_min - MARGIN_M
        self.x_max = x_max + MARGIN_M
        self.y_min = y_min - MARGIN_M
        self.y_max = y_max + MARGIN_M
        self.width = (self.x_max - self.x_min) * UNITS_PER_METER
        self.height = (self.y_max - self.y_min) * UNITS_PER_METER
        self.parts: list[str] = []

    def to_px(self, x, y):
        return ((x - self.x_min) * UNITS_PER_METER,
                (self.y_max - y) * UNITS_PER_METER)

    def circle(self, x, y, r_m, fill, stroke="none", css_class=None):
        px, py = self.to_px(x, y)
        cls = f' class="{css_class}"' if css_class else ""
        self.parts.append(
            f'<circle{cls} cx="{px:.3f}" cy="{py:.3f}" r="{r_m * UNITS_PER_METER:.3f}" '
            f'fill="{fill}" stroke="{stroke}"/>'
        )

    def polyline(self, points, stroke, width=1.0, css_class=None):
        if len(points) < 2:
            return
        cls = f' class="{css_class}"' if css_class else ""
        coords = " ".join(f"{px:.3f},{py:.3f}" for px, py in (self.to_px(x, y) for x, y in points))
        self.parts.append(
            f'<polyline{cls} points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width:.2f}"/>'
        )

    def rect_frame(self, x0, y0, x1, y1):
        px0, py1 = self.to_px(x0, y0)
        px1, py0 = self.to_px(x1, y1)
        self.parts.append(
            f'<rect x="{px0:.3f}" y="{py0:.3f}" width="{px1 - px0:.3f}" '
            f'height="{py1 - py0:.3f}" fill="none" stroke="black" stroke-width="1.00"/>'
        )

    def render(self) -> str:
        body = "\n".join(self.parts)
        return (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width:.0f}" '
            f'height="{self.height:.0f}" viewBox="0 0 {self.width:.3f} {self.height:.3f}">\n'
            f'{body}\n</svg>\n'
        )


def _clip_points(points, canvas):
    return [(min(max(x, canvas.x_min), canvas.x_max), min(max(y, canvas.y_min), canvas.y_max))
            for x, y in points]


def render_svg(scenario: Scenario, trees: Sequence[Tree] = (), references: Sequence[Trajectory] = (),
               tracked: Sequence[Trajectory] = (), t_display: float = 0.0, path=None,
               colors: dict | None = None) -> str:
    """Render a scenario snapshot; writes to ``path`` when given.

    Obstacles are filled circles at their position at ``t_display``; trees,
    reference paths, and tracked paths are polylines; start markers are
    filled dots and goal markers are circles of the goal radius.
    """
    palette = dict(DEFAULT_COLORS)
    palette.update(scenario.colors)
    if colors:
        palette.update(colors)
    ws = scenario.workspace
    cspace = scenario.is_arm
    canvas = _Canvas(float(ws.state_lower[0]), float(ws.state_upper[0]),
                     float(ws.state_lower[1]), float(ws.state_upper[1]))
    canvas.rect_frame(float(ws.state_lower[0]), float(ws.state_lower[1]),
                      float(ws.state_upper[0]), float(ws.state_upper[1]))

    if not cspace:
        for obs in scenario.obstacles:
            c = obs.position_at(t_display)
            canvas.circle(float(c[0]), float(c[1]), obs.radius, palette["obstacle"],
                          css_class="obstacle")

    tree_color = palette["cspace_tree"] if cspace else palette["tree"]
    for tree in trees:
        for edge in tree.edges:
            pts = [(float(r[0]), float(r[1])) for r in edge.path.states]
            canvas.polyline(_clip_points(pts, canvas), tree_color, 0.6, css_class="tree-edge")
    for ref in references:
        pts = [(float(r[0]), float(r[1])) for r in ref.states]
        canvas.polyline(_clip_points(pts, canvas), palette["reference"], 1.4, css_class="reference")
    for tr in tracked:
        pts = [(float(r[0]), float(r[1])) for r in tr.states]
        canvas.polyline(_clip_points(pts, canvas), palette["tracked"], 1.4, css_class="tracked")

    if cspace and scenario.arm is not None:
        ti, tg = scenario.arm.theta_init, scenario.arm.theta_goal
        canvas.circle(float(ti[0]), float(ti[1]), 0.08, palette["start"], css_class="start")
        canvas.circle(float(tg[0]), float(tg[1]), 0.08, palette["goal"], css_class="goal")
    else:
        for robot in scenario.robots:
            s = robot.start.position()
            canvas.circle(float(s[0]), float(s[1]), max(robot.radius, 0.08), palette["start"],
                          css_class="start")
            canvas.circle(float(robot.goal[0]), float(robot.goal[1]),
                          scenario.workspace.goal_radius, "none", stroke=palette["goal"])
            canvas.circle(float(robot.goal[0]), float(robot.goal[1]), 0.06, palette["goal"],
                          css_class="goal")

    text = canvas.render()
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text


def render_barrier_chart(records, path=None, width_px: float = 640.0, height_px: float = 360.0) -> str:
    """Line chart of active barrier values over time, one polyline per
    (obstacle, link) pair. Deterministic output."""
    series: dict[tuple[int, int], list[tuple[float, float]]] = {}
    for t, i, j, h in records:
        series.setdefault((i, j), []).append((t, h))
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px:.0f}" height="{height_px:.0f}" '
        f'viewBox="0 0 {width_px:.0f} {height_px:.0f}">',
        f'<rect x="0" y="0" width="{width_px:.0f}" height="{height_px:.0f}" fill="white" stroke="black"/>',
    ]
    if series:
        all_t = [t for pts in series.values() for t, _ in pts]
        all_h = [h for pts in series.values() for _, h in pts]
        t0, t1 = min(all_t), max(all_t)
        h0, h1 = min(all_h + [0.0]), max(all_h)
        t_span = (t1 - t0) or 1.0
        h_span = (h1 - h0) or 1.0
        pad = 20.0

        def to_px(t, h):
            x = pad + (t - t0) / t_span * (width_px - 2 * pad)
            y = height_px - pad - (h - h0) / h_span * (height_px - 2 * pad)
            return x, y

        zx0, zy = to_px(t0, 0.0)
        zx1, _ = to_px(t1, 0.0)
        parts.append(f'<line x1="{zx0:.2f}" y1="{zy:.2f}" x2="{zx1:.2f}" y2="{zy:.2f}" '
                     'stroke="gray" stroke-dasharray="4 3"/>')
        hues = ["crimson", "royalblue", "seagreen", "darkorange", "purple", "teal", "brown", "magenta"]
        for idx, key in enumerate(sorted(series)):
            pts = sorted(series[key])
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in (to_px(t, h) for t, h in pts))
            parts.append(f'<polyline points="{coords}" fill="none" '
                         f'stroke="{hues[idx % len(hues)]}" stroke-width="1.2"/>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
