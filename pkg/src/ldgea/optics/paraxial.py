"""First-order (y-u) ray propagation: focal length, image distance, pupil."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import dual as D
from .system import LensDesign
from .trace import design_columns


class NoPowerError(ArithmeticError):
    """The system is afocal at the requested wavelength."""


POWER_EPS = 1e-12


def propagate(curv: Sequence, thick: Sequence, n: Sequence, y, u, stop_at: int | None = None):
    """Paraxial height and angle after refraction at the last surface.

    With ``stop_at`` the ray is propagated to the vertex of that surface and
    returned before refracting there.
    """
    last = len(curv) if stop_at is None else stop_at
    for s in range(last):
        u = (n[s] * u - y * curv[s] * (n[s + 1] - n[s])) / n[s + 1]
        if s < len(curv) - 1:
            y = y + u * thick[s]
    return y, u


def image_distance_columns(curv, thick, n):
    y, u = propagate(curv, thick, n, 1.0, 0.0)
    return -y / u, u


def efl_columns(curv, thick, n):
    _, u = propagate(curv, thick, n, 1.0, 0.0)
    return -1.0 / u, u


def pupil_position_columns(curv, thick, n, stop_index: int):
    """Axial position of the entrance pupil relative to the first vertex."""
    if stop_index == 0:
        return 0.0 * curv[0] if isinstance(curv[0], D.Dual) else 0.0
    a, _ = propagate(curv, thick, n, 1.0, 0.0, stop_at=stop_index)
    b, _ = propagate(curv, thick, n, 0.0, 1.0, stop_at=stop_index)
    return b / a


def _check_power(u):
    if np.any(np.abs(D.value(u)) < POWER_EPS):
        raise NoPowerError("system has no paraxial power (afocal)")


def paraxial_image_distance(design: LensDesign, wavelength: float | None = None) -> float:
    """Distance after the last vertex at which an axial parallel ray crosses the axis."""
    wl = design.primary_wavelength if wavelength is None else wavelength
    curv, thick, n = design_columns(design, wl)
    y, u = propagate(curv, thick, n, 1.0, 0.0)
    _check_power(u)
    return float(-y / u)


def effective_focal_length(design: LensDesign, wavelength: float | None = None) -> float:
    wl = design.primary_wavelength if wavelength is None else wavelength
    curv, thick, n = design_columns(design, wl)
    _, u = propagate(curv, thick, n, 1.0, 0.0)
    _check_power(u)
    return float(-1.0 / u)


def entrance_pupil_position(design: LensDesign, wavelength: float | None = None) -> float:
    wl = design.primary_wavelength if wavelength is None else wavelength
    curv, thick, n = design_columns(design, wl)
    return float(pupil_position_columns(curv, thick, n, design.stop_index))


def marginal_heights(design: LensDesign, wavelength: float | None = None) -> np.ndarray:
    """Paraxial marginal-ray height at every surface for the full EPD."""
    wl = design.primary_wavelength if wavelength is None else wavelength
    curv, thick, n = design_columns(design, wl)
    heights = []
    for s in range(len(curv)):
        y, _ = propagate(curv, thick, n, 0.5 * design.epd, 0.0, stop_at=s)
        heights.append(float(y))
    return np.array(heights)
