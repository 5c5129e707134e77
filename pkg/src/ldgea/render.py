"""Static SVG cross-sections of lens designs.

Elements are filled with a colour that encodes the rank of their glass when
the catalog is sorted by d-line index (light = low index, dark = high), and
labelled with the glass name.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .optics.system import LensDesign

LOW_RGB = (222, 238, 250)
HIGH_RGB = (24, 62, 140)


def sag(c: float, y):
    """Sag of a spherical surface of curvature ``c`` at height ``y``."""
    y = np.asarray(y, dtype=float)
    return c * y * y / (1.0 + np.sqrt(np.maximum(1.0 - c * c * y * y, 0.0)))


def usable_height(c: float, a: float) -> float:
    """Semi-aperture clipped to the hemisphere of the surface."""
    if c == 0 or not math.isfinite(a):
        return a
    return min(a, 0.999 / abs(c))


def element_polygon(c1: float, c2: float, z1: float, thickness: float, a1: float, a2: float, n: int = 41) -> np.ndarray:
    """Closed outline ``(m, 2)`` of ``(z, y)`` points of one element.

    The front surface is traced top to bottom, the back surface bottom to top;
    the rims are joined by straight segments.
    """
    h1, h2 = usable_height(c1, a1), usable_height(c2, a2)
    y1 = np.linspace(h1, -h1, n)
    y2 = np.linspace(-h2, h2, n)
    front = np.column_stack([z1 + sag(c1, y1), y1])
    back = np.column_stack([z1 + thickness + sag(c2, y2), y2])
    return np.vstack([front, back])


def surface_positions(design: LensDesign) -> np.ndarray:
    """Axial vertex position of every surface, the first at zero."""
    z = [0.0]
    for s in design.surfaces[:-1]:
        z.append(z[-1] + s.thickness)
    return np.array(z)


def _colour(rank: int, n: int) -> str:
    t = 0.0 if n <= 1 else rank / (n - 1)
    rgb = [round(lo + (hi - lo) * t) for lo, hi in zip(LOW_RGB, HIGH_RGB)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def render_svg(design: LensDesign, title: str = "", width: float = 800.0) -> str:
    """SVG 1.1 document of the design's meridional cross-section."""
    surfaces = design.surfaces
    z = surface_positions(design)
    image_gap = design.image_distance if design.image_distance is not None else surfaces[-1].thickness
    z_image = z[-1] + max(float(image_gap), 0.0)
    finite_a = [s.semi_diameter for s in surfaces if math.isfinite(s.semi_diameter)]
    half = max(finite_a) if finite_a else 1.0
    length = max(z_image, 1e-9)
    margin = 40.0
    scale = (width - 2 * margin) / length
    height = 2 * half * scale + 2 * margin + 30.0
    y0 = margin + 20.0 + half * scale

    def px(zz, yy):
        return margin + zz * scale, y0 - yy * scale

    ranks = design.catalog.nd_rank()
    n_glass = len(design.catalog)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.1f} {height:.1f}">',
    ]
    if title:
        out.append(f'<text x="{margin:.1f}" y="20.0" font-family="sans-serif" font-size="13">{escape(title)}</text>')
    ax0, ay = px(-0.05 * length, 0.0)
    ax1, _ = px(z_image, 0.0)
    out.append(f'<line x1="{ax0:.2f}" y1="{ay:.2f}" x2="{ax1:.2f}" y2="{ay:.2f}" stroke="#888" stroke-dasharray="6,4"/>')
    for i, s in enumerate(surfaces):
        if s.material is None or i + 1 >= len(surfaces):
            continue
        nxt = surfaces[i + 1]
        poly = element_polygon(s.curvature, nxt.curvature, z[i], s.thickness, s.semi_diameter, nxt.semi_diameter)
        pts = " ".join("{:.2f},{:.2f}".format(*px(p[0], p[1])) for p in poly)
        colour = _colour(int(ranks[s.material]), n_glass)
        out.append(f'<polygon points="{pts}" fill="{colour}" stroke="#000" stroke-width="1"/>')
        lx, ly = px(z[i] + 0.5 * s.thickness, max(s.semi_diameter, nxt.semi_diameter))
        name = escape(design.catalog[s.material].name)
        out.append(
            f'<text x="{lx:.2f}" y="{ly - 6:.2f}" font-family="sans-serif" font-size="10" text-anchor="middle">{name}</text>'
        )
    for i, s in enumerate(surfaces):
        if s.stop:
            a = s.semi_diameter if math.isfinite(s.semi_diameter) else half
            x, top = px(z[i], a)
            _, bottom = px(z[i], -a)
            _, edge_t = px(z[i], half)
            _, edge_b = px(z[i], -half)
            out.append(f'<line x1="{x:.2f}" y1="{edge_t:.2f}" x2="{x:.2f}" y2="{top:.2f}" stroke="#000" stroke-width="2"/>')
            out.append(f'<line x1="{x:.2f}" y1="{bottom:.2f}" x2="{x:.2f}" y2="{edge_b:.2f}" stroke="#000" stroke-width="2"/>')
    ix, it = px(z_image, half)
    _, ib = px(z_image, -half)
    out.append(f'<line x1="{ix:.2f}" y1="{it:.2f}" x2="{ix:.2f}" y2="{ib:.2f}" stroke="#c00" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
