"""SVG 1.1 rendering of a scene and a solution path."""
from __future__ import annotations

from xml.sax.saxutils import escape

from tmitstar.search.forward import SolutionPath
from tmitstar.world2d.problem import Problem

SCALE = 60.0  # pixels per world unit
STROKES = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def render_svg(problem: Problem, path: SolutionPath | None = None, title: str = "") -> str:
    """Scene (bounds, regions, obstacles, objects, start), one polyline per segment and
    a marker at every transition state."""
    sc = problem.scene
    b = sc.bounds
    w, h = (b.x1 - b.x0) * SCALE, (b.y1 - b.y0) * SCALE

    def x(v):
        return f"{(v - b.x0) * SCALE:.2f}"

    def y(v):
        return f"{(b.y1 - v) * SCALE:.2f}"

    def rect(r, style):
        return (f'<rect x="{x(r.x0)}" y="{y(r.y1)}" width="{(r.x1 - r.x0) * SCALE:.2f}" '
                f'height="{(r.y1 - r.y0) * SCALE:.2f}" {style}/>')

    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0f}" height="{h:.0f}" '
           f'viewBox="0 0 {w:.2f} {h:.2f}">']
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(rect(b, 'fill="white" stroke="black" stroke-width="2"'))
    for reg in sc.regions:
        colour = reg.color if reg.color != "none" else "#eeeeee"
        out.append(rect(reg.rect, f'fill="{escape(colour)}" fill-opacity="0.3" stroke="{escape(colour)}"'))
    for ob in sc.obstacles:
        out.append(rect(ob.rect, 'fill="#444444"'))
    for o in sc.objects:
        out.append(f'<circle cx="{x(o.pose[0])}" cy="{y(o.pose[1])}" r="{o.radius * SCALE:.2f}" '
                   f'fill="{escape(o.color)}" stroke="black"/>')
    out.append(f'<circle cx="{x(sc.start[0])}" cy="{y(sc.start[1])}" r="{sc.robot_radius * SCALE:.2f}" '
               f'fill="none" stroke="black" stroke-dasharray="4 3"/>')
    if path is not None:
        for i, seg in enumerate(path.segments):
            pts = " ".join(f"{x(q.robot_config[0])},{y(q.robot_config[1])}" for q in seg.states)
            out.append(f'<polyline class="segment" points="{pts}" fill="none" '
                       f'stroke="{STROKES[i % len(STROKES)]}" stroke-width="3"/>')
        for seg in path.segments:
            if seg.action is None:
                continue
            q = seg.states[-1]
            out.append(f'<circle class="transition" cx="{x(q.robot_config[0])}" cy="{y(q.robot_config[1])}" '
                       f'r="5" fill="black"><title>{escape(seg.action.name)}</title></circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
