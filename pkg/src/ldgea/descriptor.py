"""Behaviour descriptors of lens designs and the factorised model over them.

A descriptor is the sign pattern of the optimisable curvatures followed by the
glass index of every element.  Thicknesses are not part of it.  The sampling
model is a product of one Bernoulli per sign and one categorical per element,
learned with the UMDA rule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .optics.system import LensDesign, LensTemplate

_SIGN_CHAR = {1: "+", -1: "-", 0: "0"}
_CHAR_SIGN = {v: k for k, v in _SIGN_CHAR.items()}

#: smallest |curvature| allowed inside a sign box (1/mm), keeps signs strict
SIGN_MARGIN = 1e-4


@dataclass(frozen=True, order=True)
class Descriptor:
    signs: tuple[int, ...]
    materials: tuple[int, ...]

    def __post_init__(self):
        if any(s not in (-1, 0, 1) for s in self.signs):
            raise ValueError("curvature signs must be -1, 0 or +1")
        if any(m < 0 for m in self.materials):
            raise ValueError("material indices must be non-negative")

    def key(self) -> str:
        """Compact text form ``"+-+|3,0,7"``."""
        return "".join(_SIGN_CHAR[s] for s in self.signs) + "|" + ",".join(str(m) for m in self.materials)

    @classmethod
    def parse(cls, key: str) -> "Descriptor":
        try:
            signs, mats = key.split("|")
            return cls(
                tuple(_CHAR_SIGN[c] for c in signs),
                tuple(int(m) for m in mats.split(",")) if mats else (),
            )
        except (ValueError, KeyError):
            raise ValueError(f"malformed descriptor {key!r}") from None

    def as_tuple(self) -> tuple[int, ...]:
        return self.signs + self.materials

    def __str__(self) -> str:
        return self.key()


def _sign(v: float) -> int:
    return 1 if v > 0 else (-1 if v < 0 else 0)


def describe(design: LensDesign, template: LensTemplate | None = None) -> Descriptor:
    """Descriptor of ``design``.

    Without a template every non-stop surface contributes a sign and every
    surface followed by glass contributes a material, which is the layout
    :func:`~ldgea.optics.system.parse_preset` produces.
    """
    if template is not None:
        curv = template.curvature_surfaces
        mats = template.material_surfaces
    else:
        curv = [i for i, s in enumerate(design.surfaces) if not s.stop]
        mats = [i for i, s in enumerate(design.surfaces) if not s.stop and s.material is not None]
    return Descriptor(
        tuple(_sign(design.surfaces[i].curvature) for i in curv),
        tuple(int(design.surfaces[i].material) for i in mats),
    )


def describe_vector(x: Sequence[float], materials: Sequence[int], n_c: int) -> Descriptor:
    """Descriptor from a template parameter vector (curvatures first)."""
    return Descriptor(tuple(_sign(float(v)) for v in x[:n_c]), tuple(int(m) for m in materials))


def equivalent(a: LensDesign, b: LensDesign, f_a: float, f_b: float, tol: float | None = None) -> bool:
    """Same descriptor and objective values equal within ``tol``.

    The default tolerance is ``1e-9 * max(1, |f_a|, |f_b|)``.
    """
    if tol is None:
        tol = 1e-9 * max(1.0, abs(f_a), abs(f_b))
    return describe(a) == describe(b) and abs(f_a - f_b) <= tol


@dataclass(frozen=True)
class DescriptorDistribution:
    """Fully factorised distribution over descriptors.

    Attributes
    ----------
    sign_p : ndarray, shape (n_c,)
        Probability of a ``+1`` sign per curvature.
    material_p : ndarray, shape (n_m, n_glasses)
        Categorical probabilities per element; rows sum to one.
    floor : float
        Minimum probability kept after every update.
    positive_first : bool
        Force the first sign to ``+1`` when sampling.
    """

    sign_p: np.ndarray
    material_p: np.ndarray
    floor: float = 1e-3
    positive_first: bool = True

    def __post_init__(self):
        sp = np.asarray(self.sign_p, dtype=float)
        mp = np.asarray(self.material_p, dtype=float)
        if mp.ndim != 2:
            raise ValueError("material_p must be (n_m, n_glasses)")
        if np.any(sp < 0) or np.any(sp > 1) or np.any(mp < 0):
            raise ValueError("probabilities must lie in [0, 1]")
        if mp.size and np.any(np.abs(mp.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("categorical rows must sum to one")
        object.__setattr__(self, "sign_p", sp)
        object.__setattr__(self, "material_p", mp)

    @classmethod
    def uniform(cls, n_signs: int, n_materials: int, n_glasses: int, floor: float = 1e-3, positive_first: bool = True):
        sp = np.full(n_signs, 0.5)
        if positive_first and n_signs:
            sp[0] = 1.0
        mp = np.full((n_materials, n_glasses), 1.0 / n_glasses)
        return cls(sp, mp, floor, positive_first)

    @property
    def n_signs(self) -> int:
        return self.sign_p.shape[0]

    @property
    def n_materials(self) -> int:
        return self.material_p.shape[0]

    @property
    def n_glasses(self) -> int:
        return self.material_p.shape[1]

    def _draw(self, rng: np.random.Generator) -> Descriptor:
        signs = np.where(rng.random(self.n_signs) < self.sign_p, 1, -1)
        if self.positive_first and self.n_signs:
            signs[0] = 1
        u = rng.random(self.n_materials)
        cdf = np.cumsum(self.material_p, axis=1)
        mats = np.minimum((u[:, None] >= cdf).sum(axis=1), self.n_glasses - 1)
        return Descriptor(tuple(int(s) for s in signs), tuple(int(m) for m in mats))

    def sample(self, rng: np.random.Generator, size: int = 1, max_retries: int = 10) -> list[Descriptor]:
        """Draw ``size`` descriptors, redrawing in-batch duplicates up to ``max_retries`` times."""
        out: list[Descriptor] = []
        seen: set[Descriptor] = set()
        for _ in range(size):
            d = self._draw(rng)
            for _ in range(max_retries):
                if d not in seen:
                    break
                d = self._draw(rng)
            seen.add(d)
            out.append(d)
        return out

    def update(self, selected: Sequence[Descriptor], alpha: float) -> "DescriptorDistribution":
        """UMDA step ``p <- (1 - alpha) p + alpha * empirical(selected)``, then floor."""
        if len(selected) == 0:
            raise ValueError("update needs at least one selected descriptor")
        if not 0.0 <= alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        signs = np.array([d.signs for d in selected], dtype=float).reshape(len(selected), self.n_signs)
        emp_s = (signs > 0).mean(axis=0)
        emp_m = np.zeros_like(self.material_p)
        for d in selected:
            emp_m[np.arange(self.n_materials), list(d.materials)] += 1.0
        emp_m /= len(selected)
        sp = (1 - alpha) * self.sign_p + alpha * emp_s
        mp = (1 - alpha) * self.material_p + alpha * emp_m
        fsp, fmp = _floored(sp, mp, self.floor)
        if self.positive_first and self.n_signs:
            fsp[0] = sp[0]  # forced when sampling, so never floored
        return DescriptorDistribution(fsp, fmp, self.floor, self.positive_first)

    def mode(self) -> Descriptor:
        signs = np.where(self.sign_p >= 0.5, 1, -1)
        if self.positive_first and self.n_signs:
            signs[0] = 1
        return Descriptor(tuple(int(s) for s in signs), tuple(int(m) for m in self.material_p.argmax(axis=1)))

    def probability(self, d: Descriptor) -> float:
        p = 1.0
        for j, s in enumerate(d.signs):
            if self.positive_first and j == 0:
                continue
            p *= self.sign_p[j] if s > 0 else 1.0 - self.sign_p[j]
        for j, m in enumerate(d.materials):
            p *= self.material_p[j, m]
        return float(p)

    def to_dict(self) -> dict:
        return {
            "sign_p": self.sign_p.tolist(),
            "material_p": self.material_p.tolist(),
            "floor": self.floor,
            "positive_first": self.positive_first,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DescriptorDistribution":
        n = len(d["sign_p"])
        mp = np.asarray(d["material_p"], dtype=float).reshape(len(d["material_p"]), -1)
        return cls(np.asarray(d["sign_p"], dtype=float).reshape(n), mp, d.get("floor", 1e-3), d.get("positive_first", True))


def _floored(sp: np.ndarray, mp: np.ndarray, floor: float):
    if floor <= 0:
        return sp.copy(), mp
    sp = np.clip(sp, floor, 1.0 - floor)
    mp = np.maximum(mp, floor)
    mp = mp / mp.sum(axis=1, keepdims=True)
    return sp, mp


def _xlogy_ratio(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, p * np.log(p / q), 0.0)
    return t


def kl_divergence(p: DescriptorDistribution, q: DescriptorDistribution) -> float:
    """Exact KL(p || q) of two factorised distributions (sum over factors)."""
    if p.sign_p.shape != q.sign_p.shape or p.material_p.shape != q.material_p.shape:
        raise ValueError("distributions have different shapes")
    kl = _xlogy_ratio(p.sign_p, q.sign_p).sum() + _xlogy_ratio(1 - p.sign_p, 1 - q.sign_p).sum()
    kl += _xlogy_ratio(p.material_p, q.material_p).sum()
    return float(max(kl, 0.0))


def subspace_bounds(
    x: Descriptor, template: LensTemplate, margin: float = SIGN_MARGIN
) -> tuple[np.ndarray, np.ndarray]:
    """Box over the template's continuous parameters inside the descriptor.

    Curvature ``j`` lives in ``[margin, c_max]`` for a ``+`` sign and in
    ``[-c_max, -margin]`` for ``-``; thicknesses keep the template bounds.
    """
    if len(x.signs) != template.n_c or len(x.materials) != template.n_m:
        raise ValueError("descriptor does not match the template layout")
    if any(s == 0 for s in x.signs):
        raise ValueError("flat (zero-sign) curvatures have no sign box")
    cmax = template.max_curvature
    lo, hi = template.continuous_bounds()
    for j, s in enumerate(x.signs):
        lo[j], hi[j] = (margin, cmax) if s > 0 else (-cmax, -margin)
    return lo, hi


def hamming(a: Descriptor, b: Descriptor) -> int:
    return sum(u != v for u, v in zip(a.as_tuple(), b.as_tuple()))

