"""Optical glasses, dispersion models and the catalog file format.

Catalog files are UTF-8 comma-separated text, one glass per line::

    name,model,c1,c2,c3,c4,c5,c6,wl_min,wl_max

``model`` is ``sellmeier`` (``B1,B2,B3,C1,C2,C3`` with ``C`` in um^2) or
``constant`` (``n_d,n_F,n_C`` followed by three empty fields).  Lines starting
with ``#`` are comments.  Catalog indices are the dense line order 0..N-1.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

# Fraunhofer lines (um)
LINE_F = 0.4861327
LINE_D = 0.5875618
LINE_C = 0.6562725
STANDARD_LINES = (LINE_F, LINE_D, LINE_C)

AIR = None  # medium marker used by surfaces


class GlassCatalogError(ValueError):
    pass


class WavelengthDomainError(ValueError):
    pass


@dataclass(frozen=True)
class Glass:
    id: int
    name: str
    model: str
    coefficients: tuple[float, ...]
    wl_min: float = 0.3
    wl_max: float = 2.5

    def index(self, wavelength: float) -> float:
        return refractive_index(self, wavelength)


def _sellmeier(coef: Sequence[float], wl):
    b1, b2, b3, c1, c2, c3 = coef
    l2 = np.asarray(wl, dtype=float) ** 2
    return np.sqrt(1.0 + b1 * l2 / (l2 - c1) + b2 * l2 / (l2 - c2) + b3 * l2 / (l2 - c3))


def _cauchy_through_lines(nd: float, nf: float, nc: float):
    """Coefficients of ``n = A + B/l^2 + C/l^4`` matching n_F, n_d, n_C exactly."""
    x = np.array([LINE_F, LINE_D, LINE_C]) ** -2.0
    m = np.stack([np.ones(3), x, x * x], axis=1)
    return np.linalg.solve(m, np.array([nf, nd, nc]))


def refractive_index(glass: Glass | None, wavelength):
    """Refractive index of ``glass`` at ``wavelength`` (um); ``None`` is air."""
    if glass is None:
        return np.ones_like(np.asarray(wavelength, dtype=float)) if np.ndim(wavelength) else 1.0
    wl = np.asarray(wavelength, dtype=float)
    if np.any(wl < glass.wl_min) or np.any(wl > glass.wl_max):
        raise WavelengthDomainError(
            f"wavelength {wavelength} um outside validity range "
            f"[{glass.wl_min}, {glass.wl_max}] of glass {glass.name!r}"
        )
    if glass.model == "sellmeier":
        n = _sellmeier(glass.coefficients, wl)
    elif glass.model == "constant":
        nd, nf, nc = glass.coefficients[:3]
        if nd == nf == nc:
            n = np.full_like(wl, nd)
        else:
            a, b, c = _cauchy_through_lines(nd, nf, nc)
            n = a + b / wl**2 + c / wl**4
    else:
        raise GlassCatalogError(f"unknown dispersion model {glass.model!r}")
    return float(n) if n.ndim == 0 else n


class GlassCatalog:
    """Ordered, indexable collection of glasses."""

    def __init__(self, glasses: Sequence[Glass], name: str = "catalog"):
        self.name = name
        self._glasses = list(glasses)
        for i, g in enumerate(self._glasses):
            if g.id != i:
                raise GlassCatalogError(f"catalog ids must be dense; {g.name} has id {g.id} at {i}")
        names = [g.name for g in self._glasses]
        if len(set(names)) != len(names):
            raise GlassCatalogError("duplicate glass names in catalog")
        self._by_name = {g.name: g for g in self._glasses}

    def __len__(self) -> int:
        return len(self._glasses)

    def __getitem__(self, i: int) -> Glass:
        return self._glasses[i]

    def __iter__(self) -> Iterator[Glass]:
        return iter(self._glasses)

    def by_name(self, name: str) -> Glass:
        try:
            return self._by_name[name]
        except KeyError:
            raise GlassCatalogError(f"glass {name!r} not in catalog {self.name!r}") from None

    def index_table(self, wavelengths: Sequence[float]) -> np.ndarray:
        """``(N + 1, W)`` table of indices; the last row is air."""
        table = np.ones((len(self) + 1, len(wavelengths)))
        for g in self._glasses:
            table[g.id] = refractive_index(g, np.asarray(wavelengths, dtype=float))
        return table

    def nd_rank(self) -> np.ndarray:
        """Rank of each glass by its d-line index (0 = lowest)."""
        nd = np.array([refractive_index(g, LINE_D) for g in self._glasses])
        return np.argsort(np.argsort(nd, kind="stable"), kind="stable")

    def subset(self, n: int) -> "GlassCatalog":
        return GlassCatalog(self._glasses[:n], name=f"{self.name}[:{n}]")


def parse_catalog(text: str, name: str = "catalog") -> GlassCatalog:
    glasses = []
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        row = [c.strip() for c in row]
        if len(row) != 10:
            raise GlassCatalogError(f"line {lineno}: expected 10 fields, got {len(row)}")
        gname, model = row[0], row[1].lower()
        try:
            if model == "sellmeier":
                coef = tuple(float(c) for c in row[2:8])
            elif model == "constant":
                coef = tuple(float(c) for c in row[2:5])
            else:
                raise GlassCatalogError(f"line {lineno}: unknown model {row[1]!r}")
            wl_min, wl_max = float(row[8]), float(row[9])
        except ValueError as exc:
            raise GlassCatalogError(f"line {lineno}: {exc}") from None
        glass = Glass(len(glasses), gname, model, coef, wl_min, wl_max)
        for wl in (wl_min, 0.5 * (wl_min + wl_max), wl_max):
            n = refractive_index(glass, wl)
            if not (math.isfinite(n) and n > 1.0):
                raise GlassCatalogError(f"glass {gname!r} has invalid index {n} at {wl} um")
        glasses.append(glass)
    if not glasses:
        raise GlassCatalogError("catalog is empty")
    return GlassCatalog(glasses, name=name)


def load_catalog(path: str | Path | None = None) -> GlassCatalog:
    """Load a catalog file; ``None`` loads the bundled catalog."""
    if path is None:
        text = resources.files("ldgea.data").joinpath("catalog.csv").read_text(encoding="utf-8")
        return parse_catalog(text, name="bundled")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise GlassCatalogError(f"cannot read catalog {path}: {exc}") from None
    return parse_catalog(text, name=path.stem)
