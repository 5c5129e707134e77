"""Penalised merit function ``F = rms^2 + sum_k w_k P_k^2`` for lens systems.

Penalties, all rectified and normalised (zero inside the allowed region,
linear in the violation outside):

* ``P1`` failed-ray fraction (vignetting, total internal reflection, missed
  surfaces) times ``vignetting_magnitude``;
* ``P2`` backward (negative) ray path between consecutive surfaces, per ray,
  in units of the minimum glass thickness;
* ``P3`` axial glass thicknesses / air gaps below their minimum, relative;
* ``P4`` free working distance below its minimum, relative;
* ``P5`` relative focal-length error beyond a small dead zone.

:class:`LensProblem` is the fast batch evaluator used by the optimizers.  It
maps parameter vectors of a :class:`~ldgea.optics.system.LensTemplate` to
merit values for many points at once, and is written against the dual-number
operations so that exact gradients come from the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .optics import dual as D
from .optics import fastpath
from .optics.paraxial import efl_columns, image_distance_columns, pupil_position_columns, POWER_EPS
from .optics.system import LensDesign, LensTemplate
from .optics.trace import RaySet, RayStatus, trace_columns


class EvaluationError(ArithmeticError):
    def __init__(self, message: str, surface: int | None = None):
        super().__init__(message if surface is None else f"{message} (surface {surface})")
        self.surface = surface


@dataclass(frozen=True)
class MeritConfig:
    weights: tuple[float, float, float, float, float] = (10.0, 1.0, 1.0, 1.0, 1.0)
    target_efl: float = 95.5
    min_glass_thickness: float = 1.0
    min_air_gap: float = 0.2
    min_working_distance: float = 20.0
    vignetting_magnitude: float = 1.0
    efl_dead_zone: float = 1e-4
    quality_threshold: float = 0.5
    pupil_rings: int = 3

    def __post_init__(self):
        if len(self.weights) != 5 or any(not w > 0 for w in self.weights):
            raise ValueError("merit weights must be five positive numbers")

    @classmethod
    def for_template(cls, template: LensTemplate, **overrides) -> "MeritConfig":
        base = dict(target_efl=template.target_efl, min_working_distance=template.min_working_distance)
        base.update(overrides)
        if "weights" in base:
            base["weights"] = tuple(float(w) for w in base["weights"])
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights"] = list(self.weights)
        return d


@dataclass
class MeritBreakdown:
    rms: float
    penalties: tuple[float, float, float, float, float]
    total: float
    efl: float
    image_distance: float
    census: dict = field(default_factory=dict)

    def recompute(self, weights: Sequence[float]) -> float:
        return self.rms**2 + sum(w * p * p for w, p in zip(weights, self.penalties))

    def to_dict(self) -> dict:
        return {
            "rms": self.rms,
            "penalties": list(self.penalties),
            "total": self.total,
            "efl": self.efl,
            "image_distance": self.image_distance,
            "census": dict(self.census),
        }


def rms_spot(x, y, alive=None) -> float:
    """Field-averaged, centroid-referenced RMS spot radius.

    ``x`` and ``y`` are ``(n_fields, n_rays)`` landing coordinates; rays with
    ``alive == False`` are ignored.  Fields without alive rays contribute zero.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    alive = np.ones_like(x, dtype=bool) if alive is None else np.atleast_2d(alive)
    return float(math.sqrt(_mean_square(x, y, alive.astype(float))))


def _mean_square(x, y, w):
    """Generic (array or Dual) field-averaged centroid-referenced mean square.

    Arrays are ``(..., n_fields, n_rays)``; ``w`` is a 0/1 weight array.
    """
    cnt = np.sum(w, axis=-1)
    safe = np.maximum(cnt, 1.0)
    xw, yw = x * w, y * w
    cx = D.expand(D.total(xw, axis=-1) / safe, -1 if not isinstance(x, D.Dual) else x.val.ndim - 1)
    cy = D.expand(D.total(yw, axis=-1) / safe, -1 if not isinstance(y, D.Dual) else y.val.ndim - 1)
    ex, ey = (x - cx) * w, (y - cy) * w
    ms_field = D.total(ex * ex + ey * ey, axis=-1) / safe
    nf = np.shape(D.value(ms_field))[-1]
    return D.total(ms_field, axis=-1) / nf


class _Evaluator:
    """Shared merit machinery for a fixed topology, ray set and catalog."""

    def __init__(self, design: LensDesign, cfg: MeritConfig):
        self.design = design
        self.cfg = cfg
        self.rays = RaySet.for_design(design, rings=cfg.pupil_rings)
        self.n_fields = len(design.field_angles)
        wl = list(design.wavelengths) + [design.primary_wavelength]
        table = design.catalog.index_table(wl)  # (N+1, W+1), last row air
        self.air = len(design.catalog)
        self.table_rays = table[:, self.rays.wavelength_id]  # (N+1, R)
        self.table_primary = table[:, -1]  # (N+1,)
        self.apertures = [s.semi_diameter for s in design.surfaces]
        self.stop_flags = [s.stop for s in design.surfaces]
        stop = design.stop_index
        # gaps checked by P3: between optical surfaces, not touching the stop
        self.gap_checks = [
            (i, design.surfaces[i].material is not None)
            for i in range(design.n_surfaces - 1)
            if i != stop and i + 1 != stop
        ]

    def media_columns(self, media: Sequence):
        """Index columns for rays ``(P|1, R)`` and for the primary line ``(P|1, 1)``.

        ``media[s]`` is a glass id, ``None`` (air) or an integer array ``(P,)``.
        """
        rays = [np.ones((1, self.table_rays.shape[1]))]
        prim = [np.ones((1, 1))]
        for m in media:
            if m is None:
                gid = self.air
            else:
                gid = m
            if np.ndim(gid) == 0:
                rays.append(self.table_rays[int(gid)][None, :])
                prim.append(np.array([[self.table_primary[int(gid)]]]))
            else:
                gid = np.asarray(gid, dtype=int)
                rays.append(self.table_rays[gid])
                prim.append(self.table_primary[gid][:, None])
        return rays, prim

    def components(self, curv, thick, n_rays, n_prim, image_distance=None):
        """Merit components for columns shaped ``(P, 1)``; returns a dict."""
        cfg = self.cfg
        with np.errstate(all="ignore"):
            d_img_solved, u_out = image_distance_columns(curv, thick, n_prim)
            efl = -1.0 / u_out
            d_img = d_img_solved if image_distance is None else image_distance
            z_pupil = pupil_position_columns(curv, thick, n_prim, self.design.stop_index)
            rays = self.rays.start(z_pupil, self.design.epd)
            out = trace_columns(curv, thick, d_img, n_rays, self.apertures, self.stop_flags, *rays)
            alive = out.status == RayStatus.ALIVE
            P = alive.shape[0]
            n_r = alive.shape[1]
            w = alive.astype(float)
            nf = self.n_fields
            xs = D.where(alive, out.x, 0.0)
            ys = D.where(alive, out.y, 0.0)
            ms = _mean_square(
                D.reshape(xs, (P, nf, n_r // nf)),
                D.reshape(ys, (P, nf, n_r // nf)),
                w.reshape(P, nf, n_r // nf),
            )
            p1 = cfg.vignetting_magnitude * (1.0 - w.mean(axis=1))
            p2 = 0.0
            tref = cfg.min_glass_thickness
            for t in out.paths:
                p2 = p2 + D.total(D.relu(-t) * w, axis=1)
            p2 = p2 / (n_r * tref)
            p3 = 0.0
            for i, is_glass in self.gap_checks:
                lim = cfg.min_glass_thickness if is_glass else cfg.min_air_gap
                p3 = p3 + D.relu(lim - thick[i]) / lim
            p4 = D.relu(cfg.min_working_distance - d_img) / cfg.min_working_distance
            rel = (efl - cfg.target_efl) / cfg.target_efl
            p5 = D.relu(D.absolute(rel) - cfg.efl_dead_zone)
            # collapse (P, 1) columns to (P,)
            p3 = _flat(p3, P)
            p4 = _flat(p4, P)
            p5 = _flat(p5, P)
            p2 = _flat(p2, P)
            wk = cfg.weights
            total = ms + wk[0] * p1 * p1 + wk[1] * p2 * p2 + wk[2] * p3 * p3 + wk[3] * p4 * p4 + wk[4] * p5 * p5
        power = np.abs(D.value(u_out)).reshape(-1) >= POWER_EPS
        return dict(
            ms=ms, p1=p1, p2=p2, p3=p3, p4=p4, p5=p5, total=total,
            efl=_flat(efl, P), image_distance=_flat(d_img, P), status=out.status, power=power,
        )

    def breakdowns(self, comp) -> list[MeritBreakdown]:
        v = {k: np.asarray(D.value(comp[k]), dtype=float) for k in ("ms", "p1", "p2", "p3", "p4", "p5", "total", "efl", "image_distance")}
        res = []
        for i in range(len(v["total"])):
            st = comp["status"][i]
            census = {s.name.lower(): int(np.sum(st == s)) for s in RayStatus}
            pens = tuple(float(v[k][i]) for k in ("p1", "p2", "p3", "p4", "p5"))
            res.append(
                MeritBreakdown(
                    rms=float(math.sqrt(max(v["ms"][i], 0.0))),
                    penalties=pens,
                    total=float(v["total"][i]),
                    efl=float(v["efl"][i]),
                    image_distance=float(v["image_distance"][i]),
                    census=census,
                )
            )
        return res


def _flat(x, P):
    """Broadcast a ``(P, 1)`` column, ``(P,)`` vector or scalar to shape ``(P,)``."""
    if np.ndim(D.value(x)) == 1:
        return x
    if isinstance(x, D.Dual):
        return D.reshape(x + np.zeros((P, 1)), (P,))
    return np.reshape(np.asarray(x, dtype=float) + np.zeros((P, 1)), (P,))


def _design_media(design: LensDesign):
    return [s.material for s in design.surfaces]


def objective(design: LensDesign, cfg: MeritConfig) -> MeritBreakdown:
    """Trace the full ray set through ``design`` and assemble the merit."""
    ev = _Evaluator(design, cfg)
    n_rays, n_prim = ev.media_columns(_design_media(design))
    curv = [np.array([[s.curvature]]) for s in design.surfaces]
    thick = [np.array([[s.thickness]]) for s in design.surfaces]
    img = None if design.image_distance is None else np.array([[design.image_distance]])
    comp = ev.components(curv, thick, n_rays, n_prim, img)
    if not comp["power"][0]:
        raise EvaluationError("system has no paraxial power")
    bd = ev.breakdowns(comp)[0]
    if not math.isfinite(bd.total):
        bad = comp["status"][0]
        raise EvaluationError("non-finite merit", surface=int(np.argmax(bad)) if bad.any() else None)
    return bd


def is_feasible(design: LensDesign, template: LensTemplate | None = None, cfg: MeritConfig | None = None):
    """Domain membership test; returns ``(ok, reason)``.

    ``reason`` is one of ``"thickness"``, ``"curvature"``, ``"first-curvature"``,
    ``"bounds"`` or ``""`` when feasible.
    """
    for s in design.surfaces:
        if s.thickness < 0:
            return False, "thickness"
    if design.image_distance is not None and design.image_distance < 0:
        return False, "thickness"
    cmax = template.max_curvature if template is not None else 0.25
    optical = [s for s in design.surfaces if not s.stop]
    if any(abs(s.curvature) > cmax * (1 + 1e-12) for s in optical):
        return False, "curvature"
    positive_first = template.positive_first if template is not None else True
    if positive_first and optical and optical[0].curvature < 0:
        return False, "first-curvature"
    if template is not None:
        x = template.continuous(design)
        lo, hi = template.continuous_bounds()
        if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
            return False, "bounds"
    return True, ""


class LensProblem:
    """Batch merit evaluation over a template's parameter vectors.

    :meth:`evaluate` runs the compiled kernel; :meth:`components`,
    :meth:`breakdown` and :meth:`value_and_grad` run the array/dual reference
    implementation.

    Parameters
    ----------
    template : LensTemplate
        Topology and free-parameter layout.
    cfg : MeritConfig, optional
        Defaults to :meth:`MeritConfig.for_template`.
    """

    def __init__(self, template: LensTemplate, cfg: MeritConfig | None = None):
        self.template = template
        self.cfg = cfg or MeritConfig.for_template(template)
        self._ev = _Evaluator(template.base, self.cfg)
        base = template.base
        self._curv_src = {i: k for k, i in enumerate(template.curvature_surfaces)}
        self._thick_src = {sl.surface: template.n_c + k for k, sl in enumerate(template.thickness_slots)}
        self._mat_src = {i: k for k, i in enumerate(template.material_surfaces)}
        self._base_curv = [s.curvature for s in base.surfaces]
        self._base_thick = [s.thickness for s in base.surfaces]
        self._base_media = _design_media(base)
        # compiled-path constants
        ev, cfg = self._ev, self.cfg
        self._curv_cols = np.array(template.curvature_surfaces, dtype=np.int64)
        self._thick_cols = np.array([sl.surface for sl in template.thickness_slots], dtype=np.int64)
        self._c0 = np.array(self._base_curv, dtype=float)
        self._t0 = np.array(self._base_thick, dtype=float)
        self._apert = np.array(ev.apertures, dtype=float)
        self._is_stop = np.array(ev.stop_flags, dtype=np.bool_)
        self._gap_idx = np.array([g for g, _ in ev.gap_checks], dtype=np.int64)
        self._gap_glass = np.array([gl for _, gl in ev.gap_checks], dtype=np.bool_)
        rs = ev.rays
        nfw = len(rs.field_angles) * len(rs.wavelengths)
        theta = np.radians(np.asarray(rs.field_angles, dtype=float))[rs.field_id]
        self._ray_consts = (
            np.tile(rs.px, nfw), np.tile(rs.py, nfw), np.sin(theta), np.cos(theta),
            rs.field_id.astype(np.int64), len(rs.field_angles), float(base.epd),
        )
        w = cfg.weights
        self._params = np.array(
            [*w, cfg.target_efl, cfg.min_glass_thickness, cfg.min_air_gap,
             cfg.min_working_distance, cfg.vignetting_magnitude, cfg.efl_dead_zone], dtype=float,
        )
        self._media_cache: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return self.template.n_continuous

    def _media_arrays(self, materials):
        """Index arrays ``(P|1, S+1, R)`` and ``(P|1, S+1)`` for the compiled kernel."""
        materials = np.asarray(materials, dtype=int)
        if materials.ndim == 1:
            key = tuple(int(m) for m in materials)
            hit = self._media_cache.get(key)
            if hit is not None:
                return hit
            mats = materials[None, :]
        else:
            mats = materials
        ev = self._ev
        P = mats.shape[0]
        gid = np.empty((P, len(self._base_media)), dtype=int)
        for s, m in enumerate(self._base_media):
            k = self._mat_src.get(s)
            gid[:, s] = mats[:, k] if k is not None else (ev.air if m is None else m)
        n_rays = np.empty((P, gid.shape[1] + 1, ev.table_rays.shape[1]))
        n_rays[:, 0, :] = 1.0
        n_rays[:, 1:, :] = ev.table_rays[gid]
        n_prim = np.empty((P, gid.shape[1] + 1))
        n_prim[:, 0] = 1.0
        n_prim[:, 1:] = ev.table_primary[gid]
        if materials.ndim == 1:
            self._media_cache[key] = (n_rays, n_prim)
        return n_rays, n_prim

    def evaluate_full(self, X, materials, image_distance=None) -> np.ndarray:
        """Compiled evaluation; columns as in :mod:`ldgea.optics.fastpath`."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P = X.shape[0]
        curv = np.repeat(self._c0[None, :], P, axis=0)
        thick = np.repeat(self._t0[None, :], P, axis=0)
        nc = len(self._curv_cols)
        curv[:, self._curv_cols] = X[:, :nc]
        thick[:, self._thick_cols] = X[:, nc:]
        n_rays, n_prim = self._media_arrays(materials)
        if image_distance is None:
            img, use = np.zeros(P), False
        else:
            img, use = np.broadcast_to(np.asarray(image_distance, dtype=float).reshape(-1), (P,)).copy(), True
        return fastpath.merit_batch(
            curv, thick, n_rays, n_prim, img, use, self._apert, self._is_stop,
            self._ev.design.stop_index, self._gap_idx, self._gap_glass, *self._ray_consts, self._params,
        )

    def evaluate(self, X, materials, image_distance=None) -> np.ndarray:
        """Merit values ``(P,)`` for ``X`` of shape ``(P, dim)``; failures map to ``inf``."""
        f = self.evaluate_full(X, materials, image_distance)[:, fastpath.TOTAL]
        return np.where(np.isfinite(f), f, np.inf)

    def __call__(self, x, materials, image_distance=None) -> float:
        return float(self.evaluate(np.asarray(x, dtype=float)[None, :], materials, image_distance)[0])

    def _columns(self, X, materials):
        P = D.value(X).shape[0]
        curv, thick = [], []
        for s in range(len(self._base_curv)):
            k = self._curv_src.get(s)
            curv.append(X[:, k : k + 1] if k is not None else self._base_curv[s])
            k = self._thick_src.get(s)
            thick.append(X[:, k : k + 1] if k is not None else self._base_thick[s])
        materials = np.asarray(materials, dtype=int)
        if materials.ndim == 1:
            media = [materials[self._mat_src[s]] if s in self._mat_src else m for s, m in enumerate(self._base_media)]
        else:
            media = [materials[:, self._mat_src[s]] if s in self._mat_src else m for s, m in enumerate(self._base_media)]
        n_rays, n_prim = self._ev.media_columns(media)
        return P, curv, thick, n_rays, n_prim

    def components(self, X, materials, image_distance=None):
        P, curv, thick, n_rays, n_prim = self._columns(X, materials)
        if image_distance is not None and not isinstance(image_distance, D.Dual):
            image_distance = np.asarray(image_distance, dtype=float).reshape(-1, 1)
        return self._ev.components(curv, thick, n_rays, n_prim, image_distance)

    def evaluate_reference(self, X, materials, image_distance=None) -> np.ndarray:
        """Array-kernel twin of :meth:`evaluate`."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        comp = self.components(X, materials, image_distance)
        f = np.asarray(comp["total"], dtype=float)
        return np.where(np.isfinite(f) & comp["power"], f, np.inf)

    def breakdown(self, x, materials, image_distance=None) -> MeritBreakdown:
        comp = self.components(np.asarray(x, dtype=float)[None, :], materials, image_distance)
        return self._ev.breakdowns(comp)[0]

    def solved_image_distance(self, x, materials) -> float:
        comp = self.components(np.asarray(x, dtype=float)[None, :], materials)
        return float(D.value(comp["image_distance"])[0])

    def scalar(self, v, materials, free: Sequence[int] | None = None, base_x=None, explicit_image: bool = False):
        """Generic scalar merit of a 1-D vector ``v`` (array or Dual).

        ``free`` lists the continuous coordinates carried by ``v`` (all by
        default); the remaining ones come from ``base_x``.  With
        ``explicit_image`` the last entry of ``v`` is the image distance.
        """
        n = self.dim
        free = list(range(n)) if free is None else list(free)
        m = len(free)
        if isinstance(v, D.Dual):
            k = v.nvars
            cols = []
            pos = {j: i for i, j in enumerate(free)}
            for j in range(n):
                if j in pos:
                    cols.append(v[pos[j]])
                else:
                    cols.append(D.Dual.constant(base_x[j], k))
            X = D.reshape(D.stack(cols, axis=0), (1, n))
            img = D.reshape(v[m], (1, 1)) if explicit_image else None
        else:
            v = np.asarray(v, dtype=float)
            X = np.array(base_x if base_x is not None else np.zeros(n), dtype=float)
            X[free] = v[:m]
            X = X[None, :]
            img = np.array([[v[m]]]) if explicit_image else None
        comp = self.components(X, materials, img)
        return D.reshape(comp["total"], ()) if isinstance(comp["total"], D.Dual) else float(comp["total"][0])

    def value_and_grad(self, v, materials, free=None, base_x=None, explicit_image=False):
        return D.gradient(lambda z: self.scalar(z, materials, free, base_x, explicit_image), v)
