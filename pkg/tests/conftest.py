import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ldgea.config import RunConfig, build_problem
from ldgea.optics.glass import parse_catalog
from ldgea.optics.system import LensDesign, Surface

settings.register_profile("ci", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

# constant-index glasses: no dispersion, convenient for hand calculations
CONSTANT_CATALOG = """\
G150,constant,1.5,1.5,1.5,,,,0.3,2.5
G170,constant,1.7,1.7,1.7,,,,0.3,2.5
"""


@pytest.fixture(scope="session")
def constant_catalog():
    return parse_catalog(CONSTANT_CATALOG, name="constant")


def make_singlet(catalog, c1=0.01, c2=-0.01, thickness=1e-6, epd=10.0, aperture=20.0, fields=(0.0,),
                 wavelengths=(0.5875618,), image_distance=None, stop_aperture=math.inf, glass=0):
    """Stop at the first vertex followed by a single element."""
    surfaces = (
        Surface(0.0, stop_aperture, 0.0, None, stop=True),
        Surface(c1, aperture, thickness, glass),
        Surface(c2, aperture, 0.0, None),
    )
    return LensDesign(surfaces, catalog, epd, tuple(fields), tuple(wavelengths), image_distance)


@pytest.fixture
def singlet_factory(constant_catalog):
    return lambda **kw: make_singlet(constant_catalog, **kw)


@lru_cache(maxsize=None)
def triplet_problem():
    """Triplet preset with the 20-glass catalog (shared, built once)."""
    return build_problem(RunConfig(preset="triplet", catalog_size=20))


@pytest.fixture(scope="session")
def triplet():
    return triplet_problem()


@pytest.fixture(scope="session")
def double_gauss():
    return build_problem(RunConfig(preset="double_gauss"))


def perturbed(template, rng, rel=0.02):
    """Random design near the preset, clipped into the template bounds."""
    x0 = template.continuous()
    lo, hi = template.continuous_bounds()
    return np.clip(x0 * (1 + rel * rng.uniform(-1, 1, x0.size)), lo, hi)


# two quadratic wells in the unit square; the second sits 0.1 higher
WELL_CENTERS = np.array([[0.25, 0.25], [0.75, 0.7]])
WELL_OFFSETS = np.array([0.0, 0.1])


def two_basin(X):
    X = np.atleast_2d(X)
    d = np.stack([np.sum((X - c) ** 2, axis=1) + o for c, o in zip(WELL_CENTERS, WELL_OFFSETS)])
    return d.min(axis=0)


def wells_found(result, tol=1e-2):
    """True when every well center has an archived point within ``tol``."""
    pts = np.array(result.archive.points)
    if pts.size == 0:
        return False
    return all(np.min(np.linalg.norm(pts - c, axis=1)) <= tol for c in WELL_CENTERS)


# acceptance outcomes, printed once more at the end of the session
ACCEPTANCE: dict[int, str] = {}


def report_criterion(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
