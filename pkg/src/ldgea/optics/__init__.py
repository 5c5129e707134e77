"""Geometric optics: glasses, lens systems, real and paraxial ray tracing."""

from .glass import Glass, GlassCatalog, load_catalog, refractive_index, STANDARD_LINES, LINE_D, LINE_F, LINE_C
from .system import Surface, LensDesign, LensTemplate, ThicknessSlot, load_preset, PresetError
from .trace import Ray, RayStatus, TraceResult, refract, trace, RaySet
from .paraxial import NoPowerError, paraxial_image_distance, effective_focal_length, entrance_pupil_position
from .dual import Dual, gradient

__all__ = [
    "Glass", "GlassCatalog", "load_catalog", "refractive_index", "STANDARD_LINES", "LINE_D", "LINE_F", "LINE_C",
    "Surface", "LensDesign", "LensTemplate", "ThicknessSlot", "load_preset", "PresetError",
    "Ray", "RayStatus", "TraceResult", "refract", "trace", "RaySet",
    "NoPowerError", "paraxial_image_distance", "effective_focal_length", "entrance_pupil_position",
    "Dual", "gradient",
]
