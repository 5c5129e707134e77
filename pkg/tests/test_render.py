from xml.etree import ElementTree

import numpy as np
import pytest

from ldgea.render import element_polygon, render_svg, sag, surface_positions, usable_height

SVG = "{http://www.w3.org/2000/svg}"


def test_sag_sphere():
    c, y = 0.02, 10.0
    r = 1 / c
    assert sag(c, y) == pytest.approx(r - np.sqrt(r * r - y * y), rel=1e-12)
    assert sag(0.0, y) == 0.0
    assert sag(-c, y) == pytest.approx(-sag(c, y))


def test_usable_height_clamped():
    assert usable_height(0.0, 12.0) == 12.0
    assert usable_height(0.1, 50.0) == pytest.approx(0.999 / 0.1)


def test_symmetric_biconvex_mirror():
    t = 4.0
    poly = element_polygon(0.02, -0.02, 0.0, t, 10.0, 10.0)
    n = len(poly) // 2
    front, back = poly[:n], poly[n:][::-1]
    # reflection through the mid plane z = t/2 maps the front onto the back
    np.testing.assert_allclose(t - front[:, 0], back[:, 0], atol=1e-12)
    np.testing.assert_allclose(front[:, 1], back[:, 1], atol=1e-12)
    # and the outline is symmetric about the axis
    np.testing.assert_allclose(front[:, 0], front[::-1, 0], atol=1e-12)


def test_flat_surface_is_vertical_edge():
    poly = element_polygon(0.0, -0.03, 5.0, 3.0, 8.0, 8.0)
    n = len(poly) // 2
    assert np.all(poly[:n, 0] == 5.0)
    assert poly[:n, 1].max() == 8.0 and poly[:n, 1].min() == -8.0


def test_surface_positions_and_svg(triplet):
    template, _ = triplet
    design = template.base
    z = surface_positions(design)
    assert z[0] == 0.0 and np.all(np.diff(z) >= 0)
    root = ElementTree.fromstring(render_svg(design, title="best"))
    assert root.tag == SVG + "svg"
    polys = root.findall(f".//{SVG}polygon")
    assert len(polys) == sum(s.material is not None for s in design.surfaces)
    names = {t.text for t in root.iter(SVG + "text")}
    assert "best" in names
