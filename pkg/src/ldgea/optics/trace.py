"""Sequential real-ray tracing through centred spherical surfaces.

The kernel :func:`trace_columns` works on per-surface "columns" so that every
quantity may be a float, an ``ndarray`` of shape ``(P, R)`` (P parameter
points by R rays) or a :class:`~ldgea.optics.dual.Dual` of the same shape.
Ray failures are never raised; they are recorded in a status array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Sequence

import numpy as np

from . import dual as D
from .glass import refractive_index
from .system import LensDesign


class RayStatus(IntEnum):
    ALIVE = 0
    VIGNETTED = 1
    TIR = 2
    NEGATIVE_PATH = 3
    MISSED = 4


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    wavelength: float
    status: RayStatus = RayStatus.ALIVE

    @property
    def alive(self) -> bool:
        return self.status == RayStatus.ALIVE


@dataclass
class TraceResult:
    points: list[np.ndarray]
    landing: np.ndarray | None
    status: RayStatus
    failed_surface: int | None
    paths: list[float] = field(default_factory=list)

    @property
    def alive(self) -> bool:
        return self.status == RayStatus.ALIVE


def _refract(dx, dy, dz, nx, ny, nz, mu):
    """Vector Snell refraction; returns new direction and a TIR mask.

    ``(nx, ny, nz)`` must be a unit normal.  It is flipped internally so that
    it points along the propagation direction.
    """
    cos_i = dx * nx + dy * ny + dz * nz
    flip = np.where(D.value(cos_i) < 0, -1.0, 1.0)
    nx, ny, nz, cos_i = nx * flip, ny * flip, nz * flip, cos_i * flip
    k = 1.0 - mu * mu * (1.0 - cos_i * cos_i)
    tir = D.value(k) < 0
    g = D.sqrt(D.where(tir, 1.0, k)) - mu * cos_i
    return mu * dx + g * nx, mu * dy + g * ny, mu * dz + g * nz, tir


def refract(ray: Ray, normal, n1: float, n2: float) -> Ray:
    """Refract ``ray`` at an interface with unit ``normal`` from index ``n1`` to ``n2``."""
    if not ray.alive:
        return ray
    d = np.asarray(ray.direction, dtype=float)
    n = np.asarray(normal, dtype=float)
    dx, dy, dz, tir = _refract(d[0], d[1], d[2], n[0], n[1], n[2], n1 / n2)
    if bool(tir):
        return replace(ray, status=RayStatus.TIR)
    out = np.array([dx, dy, dz], dtype=float)
    return replace(ray, direction=out / np.linalg.norm(out))


def _intersect(x, y, zl, dx, dy, dz, c):
    """Signed distance to a sphere of curvature ``c`` with vertex at the local origin.

    Uses the cancellation-free form ``t = F / (G + sqrt(G^2 - cF))``, which for
    ``c == 0`` is exactly the plane intersection ``-z/dz``.
    """
    f = c * (x * x + y * y + zl * zl) - 2.0 * zl
    g = dz - c * (x * dx + y * dy + zl * dz)
    disc = g * g - c * f
    ok = D.value(disc) >= 0
    den = g + D.sqrt(D.where(ok, disc, 1.0))
    ok = ok & (D.value(den) > 0)
    t = f / D.where(ok, den, 1.0)
    return D.where(ok, t, 0.0), ok


@dataclass
class KernelOutput:
    x: object
    y: object
    status: np.ndarray
    failed_surface: np.ndarray
    paths: list
    hits: list


def trace_columns(
    curv: Sequence,
    thick: Sequence,
    image_distance,
    n_media: Sequence,
    apertures: Sequence[float],
    stop_flags: Sequence[bool],
    ox, oy, oz, dx, dy, dz,
    keep_hits: bool = False,
) -> KernelOutput:
    """Trace ray arrays through ``len(curv)`` surfaces onto the image plane.

    ``thick[i]`` is the gap after surface ``i`` (the last entry is unused;
    ``image_distance`` is the gap to the image plane).  ``n_media`` has one
    more entry than ``curv``: the index before the first surface followed by
    the index after each surface.
    """
    shape = np.broadcast_shapes(
        *(np.shape(D.value(a)) for a in (ox, oy, oz, dx, dy, dz, image_distance)),
        *(np.shape(D.value(a)) for a in curv),
        *(np.shape(D.value(a)) for a in thick),
    )
    status = np.zeros(shape, dtype=np.int8)
    failed = np.full(shape, -1, dtype=np.int16)
    x, y, z = ox, oy, oz
    zv = 0.0
    paths, hits = [], []

    def kill(mask, code, s):
        new = mask & (status == RayStatus.ALIVE)
        status[new] = code
        failed[new] = s

    for s, c in enumerate(curv):
        if s > 0:
            zv = zv + thick[s - 1]
        zl = z - zv
        t, ok = _intersect(x, y, zl, dx, dy, dz, c)
        kill(~np.broadcast_to(ok, shape), RayStatus.MISSED, s)
        x, y, z = x + t * dx, y + t * dy, z + t * dz
        if s > 0:
            paths.append(t)
        if keep_hits:
            hits.append((x, y, z))
        a = apertures[s]
        if math.isfinite(a):
            r2 = D.value(x) ** 2 + D.value(y) ** 2
            kill(np.broadcast_to(r2 > a * a, shape), RayStatus.VIGNETTED, s)
        if stop_flags[s]:
            continue
        zl = z - zv
        nx, ny, nz = -c * x, -c * y, 1.0 - c * zl
        norm = D.sqrt(nx * nx + ny * ny + nz * nz)
        nx, ny, nz = nx / norm, ny / norm, nz / norm
        dx, dy, dz, tir = _refract(dx, dy, dz, nx, ny, nz, n_media[s] / n_media[s + 1])
        kill(np.broadcast_to(tir, shape), RayStatus.TIR, s)
        # keep dead rays numerically tame
        bad = status != RayStatus.ALIVE
        if bad.any():
            dx = D.where(bad, 0.0, dx)
            dy = D.where(bad, 0.0, dy)
            dz = D.where(bad, 1.0, dz)

    n_surf = len(curv)
    z_img = zv + image_distance
    forward = D.value(dz) > 0
    kill(~np.broadcast_to(forward, shape), RayStatus.MISSED, n_surf)
    t = (z_img - z) / D.where(forward, dz, 1.0)
    xi, yi = x + t * dx, y + t * dy
    return KernelOutput(xi, yi, status, failed, paths, hits)


def design_columns(design: LensDesign, wavelength: float):
    """Per-surface float columns of a design at one wavelength."""
    curv = [s.curvature for s in design.surfaces]
    thick = [s.thickness for s in design.surfaces]
    n = [1.0] + [
        1.0 if s.material is None else refractive_index(design.catalog[s.material], wavelength)
        for s in design.surfaces
    ]
    return curv, thick, n


def trace(design: LensDesign, ray: Ray) -> TraceResult:
    """Trace a single ray through ``design`` onto its image plane."""
    from .paraxial import paraxial_image_distance

    if not ray.alive:
        return TraceResult([], None, ray.status, None, [])
    image = design.image_distance
    if image is None:
        image = paraxial_image_distance(design, design.primary_wavelength)
    curv, thick, n = design_columns(design, ray.wavelength)
    o = np.asarray(ray.origin, dtype=float)
    d = np.asarray(ray.direction, dtype=float)
    out = trace_columns(
        curv, thick, image, n,
        [s.semi_diameter for s in design.surfaces],
        [s.stop for s in design.surfaces],
        *(np.array([v]) for v in (*o, *d)),
        keep_hits=True,
    )
    status = RayStatus(int(out.status[0]))
    n_hit = len(out.hits) if status == RayStatus.ALIVE else int(out.failed_surface[0]) + 1
    points = [np.array([float(h[0][0]), float(h[1][0]), float(h[2][0])]) for h in out.hits[:n_hit]]
    paths = [float(p[0]) for p in out.paths[: max(n_hit - 1, 0)]]
    if status == RayStatus.ALIVE:
        return TraceResult(points, np.array([float(out.x[0]), float(out.y[0])]), status, None, paths)
    return TraceResult(points, None, status, int(out.failed_surface[0]), paths)


def hexapolar_grid(rings: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Normalised pupil coordinates: centre plus ``6k`` points on ring ``k``."""
    px, py = [0.0], [0.0]
    for k in range(1, rings):
        r = k / (rings - 1)
        for j in range(6 * k):
            a = 2.0 * math.pi * j / (6 * k)
            px.append(r * math.sin(a))
            py.append(r * math.cos(a))
    return np.array(px), np.array(py)


@dataclass(frozen=True)
class RaySet:
    """The fixed fan of rays used for merit evaluation.

    Rays are ordered field-major, then wavelength, then pupil point.
    """

    field_angles: tuple[float, ...]
    wavelengths: tuple[float, ...]
    px: np.ndarray
    py: np.ndarray

    @classmethod
    def for_design(cls, design: LensDesign, rings: int = 3) -> "RaySet":
        px, py = hexapolar_grid(rings)
        return cls(tuple(design.field_angles), tuple(design.wavelengths), px, py)

    @property
    def n_pupil(self) -> int:
        return len(self.px)

    @property
    def n_rays(self) -> int:
        return len(self.field_angles) * len(self.wavelengths) * self.n_pupil

    @property
    def field_id(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.field_angles)), len(self.wavelengths) * self.n_pupil)

    @property
    def wavelength_id(self) -> np.ndarray:
        per_field = np.repeat(np.arange(len(self.wavelengths)), self.n_pupil)
        return np.tile(per_field, len(self.field_angles))

    def start(self, z_pupil, epd: float):
        """Ray origins on the entrance-pupil plane and unit directions.

        ``z_pupil`` is a float or a ``(P, 1)`` column (array or Dual); results
        are ``(P, R)``-broadcastable.
        """
        nf, nw = len(self.field_angles), len(self.wavelengths)
        theta = np.radians(np.repeat(np.asarray(self.field_angles, dtype=float), nw * self.n_pupil))
        h = 0.5 * epd
        ox = np.tile(self.px, nf * nw)[None, :] * h
        oy = np.tile(self.py, nf * nw)[None, :] * h
        oz = z_pupil + np.zeros_like(ox)
        dx = np.zeros_like(ox)
        dy = np.sin(theta)[None, :] + np.zeros_like(ox)
        dz = np.cos(theta)[None, :] + np.zeros_like(ox)
        return ox, oy, oz, dx, dy, dz
