"""Lens systems, the optimizable lens template and preset files.

A :class:`LensDesign` is an ordered tuple of spherical :class:`Surface` objects
(one of which is the aperture stop) together with the imaging conditions.  A
:class:`LensTemplate` fixes a topology and says which curvatures, thicknesses
and materials are free; it maps flat parameter vectors to designs and back.

Preset files are TOML::

    name = "triplet"
    epd = 10.0               # entrance pupil diameter, mm
    half_field = 15.0        # degrees
    target_efl = 50.0        # mm
    min_working_distance = 20.0

    [[surface]]
    radius = 22.0            # mm, inf for flat
    thickness = 3.26         # axial gap to the next surface, mm
    glass = "N-SK16"         # medium after the surface; omit for air
    semi_diameter = 8.0
    vary_thickness = [1.0, 8.0]

    [[surface]]
    stop = true
    ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .glass import STANDARD_LINES, LINE_D, GlassCatalog, GlassCatalogError

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


class PresetError(ValueError):
    pass


@dataclass(frozen=True)
class Surface:
    curvature: float
    semi_diameter: float
    thickness: float = 0.0
    material: int | None = None
    stop: bool = False

    @property
    def radius(self) -> float:
        return math.inf if self.curvature == 0 else 1.0 / self.curvature


@dataclass(frozen=True)
class LensDesign:
    """A complete sequential lens system.

    ``surfaces[i].thickness`` is the axial gap after surface ``i``; the gap
    after the last surface is ``image_distance`` (``None`` means: place the
    image plane at the paraxial focus of the primary wavelength).
    """

    surfaces: tuple[Surface, ...]
    catalog: GlassCatalog
    epd: float
    field_angles: tuple[float, ...] = (0.0,)
    wavelengths: tuple[float, ...] = STANDARD_LINES
    image_distance: float | None = None
    primary_wavelength: float = LINE_D

    def __post_init__(self):
        stops = [i for i, s in enumerate(self.surfaces) if s.stop]
        if len(stops) != 1:
            raise ValueError(f"a design needs exactly one stop surface, found {len(stops)}")
        for s in self.surfaces:
            if not s.semi_diameter > 0:
                raise ValueError("surface semi-diameters must be positive")
            if s.material is not None and not 0 <= s.material < len(self.catalog):
                raise ValueError(f"material index {s.material} outside catalog")

    @property
    def stop_index(self) -> int:
        return next(i for i, s in enumerate(self.surfaces) if s.stop)

    @property
    def n_surfaces(self) -> int:
        return len(self.surfaces)

    def curvatures(self) -> np.ndarray:
        return np.array([s.curvature for s in self.surfaces])

    def thicknesses(self) -> np.ndarray:
        return np.array([s.thickness for s in self.surfaces])

    def apertures(self) -> np.ndarray:
        return np.array([s.semi_diameter for s in self.surfaces])

    def media(self) -> list[int | None]:
        """Medium after each surface (``None`` for air)."""
        return [s.material for s in self.surfaces]

    def scaled(self, factor: float) -> "LensDesign":
        """Geometrically similar design with every length multiplied by ``factor``."""
        surfaces = tuple(
            replace(
                s,
                curvature=s.curvature / factor,
                semi_diameter=s.semi_diameter * factor if math.isfinite(s.semi_diameter) else s.semi_diameter,
                thickness=s.thickness * factor,
            )
            for s in self.surfaces
        )
        image = None if self.image_distance is None else self.image_distance * factor
        return replace(self, surfaces=surfaces, epd=self.epd * factor, image_distance=image)

    def with_image_distance(self, distance: float | None) -> "LensDesign":
        return replace(self, image_distance=distance)

    def with_surface(self, i: int, **changes) -> "LensDesign":
        surfaces = list(self.surfaces)
        surfaces[i] = replace(surfaces[i], **changes)
        return replace(self, surfaces=tuple(surfaces))


@dataclass(frozen=True)
class ThicknessSlot:
    surface: int
    kind: str  # "glass" or "air"
    lower: float
    upper: float


@dataclass(frozen=True)
class LensTemplate:
    """Topology plus the free-parameter layout ``[curvatures | thicknesses | materials]``."""

    name: str
    base: LensDesign
    curvature_surfaces: tuple[int, ...]
    thickness_slots: tuple[ThicknessSlot, ...]
    material_surfaces: tuple[int, ...]
    target_efl: float
    min_working_distance: float = 20.0
    max_curvature: float = 0.25
    positive_first: bool = True
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def n_c(self) -> int:
        return len(self.curvature_surfaces)

    @property
    def n_d(self) -> int:
        return len(self.thickness_slots)

    @property
    def n_m(self) -> int:
        return len(self.material_surfaces)

    @property
    def n_continuous(self) -> int:
        return self.n_c + self.n_d

    @property
    def catalog(self) -> GlassCatalog:
        return self.base.catalog

    def continuous(self, design: LensDesign | None = None) -> np.ndarray:
        design = design or self.base
        c = [design.surfaces[i].curvature for i in self.curvature_surfaces]
        t = [design.surfaces[sl.surface].thickness for sl in self.thickness_slots]
        return np.array(c + t, dtype=float)

    def materials(self, design: LensDesign | None = None) -> tuple[int, ...]:
        design = design or self.base
        return tuple(int(design.surfaces[i].material) for i in self.material_surfaces)

    def continuous_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Box of the full (descriptor-free) continuous space."""
        cmax = self.max_curvature
        lo = [-cmax] * self.n_c + [sl.lower for sl in self.thickness_slots]
        hi = [cmax] * self.n_c + [sl.upper for sl in self.thickness_slots]
        return np.array(lo, dtype=float), np.array(hi, dtype=float)

    def build(
        self,
        x: Sequence[float],
        materials: Sequence[int] | None = None,
        image_distance: float | None = None,
    ) -> LensDesign:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_continuous,):
            raise ValueError(f"expected {self.n_continuous} continuous parameters, got {x.shape}")
        surfaces = list(self.base.surfaces)
        for k, i in enumerate(self.curvature_surfaces):
            surfaces[i] = replace(surfaces[i], curvature=float(x[k]))
        for k, sl in enumerate(self.thickness_slots):
            surfaces[sl.surface] = replace(surfaces[sl.surface], thickness=float(x[self.n_c + k]))
        if materials is not None:
            if len(materials) != self.n_m:
                raise ValueError(f"expected {self.n_m} materials, got {len(materials)}")
            for k, i in enumerate(self.material_surfaces):
                surfaces[i] = replace(surfaces[i], material=int(materials[k]))
        return replace(self.base, surfaces=tuple(surfaces), image_distance=image_distance)

    def with_catalog(self, catalog: GlassCatalog) -> "LensTemplate":
        """Rebind to another catalog; base materials must exist in it."""
        mats = self.materials()
        if max(mats) >= len(catalog):
            raise GlassCatalogError(
                f"preset {self.name!r} uses material index {max(mats)} but catalog has {len(catalog)} glasses"
            )
        return replace(self, base=replace(self.base, catalog=catalog))


def _field_angles(half_field: float, fractions: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(half_field) * float(f) for f in fractions)


def parse_preset(data: dict, catalog: GlassCatalog) -> LensTemplate:
    try:
        rows = data["surface"]
        epd = float(data["epd"])
        half_field = float(data["half_field"])
        target = float(data["target_efl"])
    except KeyError as exc:
        raise PresetError(f"preset is missing key {exc}") from None
    fractions = data.get("field_fractions", [0.0, 0.7, 1.0])
    wavelengths = tuple(float(w) for w in data.get("wavelengths", STANDARD_LINES))

    surfaces, curv_idx, slots, mat_idx = [], [], [], []
    for i, row in enumerate(rows):
        stop = bool(row.get("stop", False))
        radius = float(row.get("radius", math.inf))
        curvature = 0.0 if math.isinf(radius) else 1.0 / radius
        material = None
        if "glass" in row:
            g = row["glass"]
            material = int(g) if isinstance(g, int) else catalog.by_name(g).id
            if not 0 <= material < len(catalog):
                raise PresetError(f"surface {i}: material index {material} outside catalog")
        semi = float(row.get("semi_diameter", math.inf if stop else 0.0))
        if not semi > 0:
            raise PresetError(f"surface {i} needs a positive semi_diameter")
        surfaces.append(Surface(curvature, semi, float(row.get("thickness", 0.0)), material, stop))
        if not stop:
            curv_idx.append(i)
            if material is not None:
                mat_idx.append(i)
        if "vary_thickness" in row:
            lo, hi = (float(v) for v in row["vary_thickness"])
            slots.append(ThicknessSlot(i, "glass" if material is not None else "air", lo, hi))

    base = LensDesign(
        surfaces=tuple(surfaces),
        catalog=catalog,
        epd=epd,
        field_angles=_field_angles(half_field, fractions),
        wavelengths=wavelengths,
    )
    return LensTemplate(
        name=str(data.get("name", "preset")),
        base=base,
        curvature_surfaces=tuple(curv_idx),
        thickness_slots=tuple(slots),
        material_surfaces=tuple(mat_idx),
        target_efl=target,
        min_working_distance=float(data.get("min_working_distance", 20.0)),
        max_curvature=1.0 / float(data.get("min_radius", 4.0)),
        positive_first=bool(data.get("positive_first", True)),
        extras={"half_field": half_field},
    )


PRESETS = ("triplet", "double_gauss")


def load_preset(name_or_path: str | Path, catalog: GlassCatalog) -> LensTemplate:
    """Load a bundled preset by name or a preset file by path."""
    if str(name_or_path) in PRESETS:
        text = resources.files("ldgea.data").joinpath(f"presets/{name_or_path}.toml").read_text("utf-8")
    else:
        try:
            text = Path(name_or_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise PresetError(f"cannot read preset {name_or_path}: {exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise PresetError(f"malformed preset {name_or_path}: {exc}") from None
    return parse_preset(data, catalog)
