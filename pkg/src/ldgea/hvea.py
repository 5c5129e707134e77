"""Hill-valley niching inside one descriptor's box.

Uniform samples are clustered against the best point of every known niche
with the hill-valley test; a sample that belongs to no niche founds a new one
and a CMSA-ES instance is started from it.  Each instance first gets a fixed
slice of the budget; whatever remains after exploration is handed out
round-robin to instances that were cut short.  The final best of every niche
goes into a quality-window archive.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Hashable

import numpy as np

from .evostrat.budget import BudgetExhausted, CountingObjective
from .evostrat.cmsa import CMSA, EsConfig


class NicheArchive:
    """Entries ``(value, x)`` kept sorted and within ``window`` of the best value.

    Parameters
    ----------
    window : float
        Quality window ``w``.
    tag : hashable, optional
        Descriptor shared by every entry; inserts with another tag are refused.
    """

    def __init__(self, window: float, tag: Hashable = None):
        if not window >= 0:
            raise ValueError("window must be non-negative")
        self.window = window
        self.tag = tag
        self._values: list[float] = []
        self._points: list = []

    def __len__(self) -> int:
        return len(self._values)

    @property
    def values(self) -> list[float]:
        return list(self._values)

    @property
    def points(self) -> list:
        return list(self._points)

    def entries(self) -> list[tuple[float, object]]:
        return list(zip(self._values, self._points))

    @property
    def best(self) -> float:
        return self._values[0] if self._values else math.inf

    def insert(self, x, value: float, tag: Hashable = None) -> bool:
        """Insert unless ``value`` exceeds the current best by more than the window."""
        if tag is not None and self.tag is not None and tag != self.tag:
            raise ValueError(f"candidate descriptor {tag} does not match archive {self.tag}")
        value = float(value)
        if not math.isfinite(value):
            return False
        if self._values and value > self._values[0] + self.window:
            return False
        i = bisect.bisect_right(self._values, value)
        self._values.insert(i, value)
        self._points.insert(i, x)
        limit = self._values[0] + self.window
        k = bisect.bisect_right(self._values, limit)
        del self._values[k:]
        del self._points[k:]
        return True

    def merge(self, other: "NicheArchive") -> int:
        """Insert every entry of ``other``; returns the number accepted."""
        return sum(self.insert(x, v, other.tag) for v, x in other.entries())


def hill_valley_test(a, b, f_a: float, f_b: float, n_test: int, evaluate: Callable[[np.ndarray], np.ndarray]) -> bool:
    """``True`` when ``a`` and ``b`` appear to share a basin.

    Tests ``n_test`` equally spaced interior points of the segment, one at a
    time, and stops at the first point higher than both ends (plus a small
    tie tolerance).  Every tested point is an evaluation.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.array_equal(a, b) or n_test <= 0:
        return True
    top = max(f_a, f_b)
    eps = 1e-12 * max(1.0, abs(top)) if math.isfinite(top) else 0.0
    for k in range(1, n_test + 1):
        x = a + (b - a) * (k / (n_test + 1))
        f = float(evaluate(x[None, :])[0])
        if not f <= top + eps:
            return False
    return True


@dataclass
class HveaConfig:
    window: float = 0.5
    niche_cap: int = 16
    max_test: int = 5
    stall_limit: int = 25
    es: EsConfig = field(default_factory=EsConfig)


@dataclass
class Niche:
    x: np.ndarray
    f: float
    es: CMSA | None
    evaluations: int = 0

    @property
    def converged(self) -> bool:
        return self.es is not None and self.es.stopped and self.es.reason != "budget"


@dataclass
class HveaResult:
    archive: NicheArchive
    best_x: np.ndarray | None
    best_f: float
    evaluations: int
    n_niches: int
    niches: list[tuple[np.ndarray, float, str]] = field(default_factory=list)


def hvea_run(
    objective: Callable[[np.ndarray], np.ndarray],
    lower,
    upper,
    budget: int,
    rng: np.random.Generator,
    cfg: HveaConfig | None = None,
    tag: Hashable = None,
    describe: Callable[[np.ndarray], Hashable] | None = None,
) -> HveaResult:
    """Hill-valley EA with CMSA-ES niches in the box ``[lower, upper]``.

    ``objective`` is a batch function.  ``describe``, if given, maps a point to
    its descriptor and is checked against ``tag`` on every archive insert.
    """
    cfg = cfg or HveaConfig()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    n = lower.shape[0]
    width = np.where(upper > lower, upper - lower, 1.0)
    es_cfg = cfg.es.resolved(n)
    lam = es_cfg.lam
    counter = CountingObjective(objective, budget)
    slice_ = max(lam + 1, budget // cfg.niche_cap)
    niches: list[Niche] = []
    stall = 0

    def run_niche(nc: Niche, allowance: int):
        nc.es.reason = None
        end = nc.es.evaluations + allowance
        while nc.es.step(counter, end - nc.es.evaluations):
            pass
        nc.x, nc.f, nc.evaluations = nc.es.best_x, nc.es.best_f, nc.es.evaluations

    def resumable():
        # "budget" here means the niche used up its slice, not that it converged
        return [nc for nc in niches if nc.es is not None and nc.es.reason == "budget"]

    try:
        while counter.remaining > 0:
            waiting = resumable()
            if niches and (stall >= cfg.stall_limit or counter.remaining <= lam) and waiting:
                if counter.remaining < lam:
                    break
                for nc in waiting:
                    run_niche(nc, int(min(slice_, counter.remaining)))
                    if counter.remaining < lam:
                        break
                stall = 0
                continue
            if niches and counter.remaining <= lam:
                break
            x = lower + rng.random(n) * width
            fx = float(counter(x[None, :])[0])
            if not math.isfinite(fx):
                stall += 1
                continue
            u = (x - lower) / width
            spacing = (1.0 / max(1, len(niches))) ** (1.0 / n)
            order = sorted(niches, key=lambda nc: float(np.linalg.norm((nc.x - lower) / width - u)))
            joined = False
            for nc in order:
                dist = float(np.linalg.norm((nc.x - lower) / width - u))
                n_test = min(cfg.max_test, 1 + int(math.floor(dist / spacing)))
                if hill_valley_test(x, nc.x, fx, nc.f, n_test, counter):
                    joined = True
                    break
            if joined:
                stall += 1
                continue
            stall = 0
            nc = Niche(x, fx, None)
            niches.append(nc)
            if counter.remaining >= lam:
                nc.es = CMSA(x, fx, lower, upper, es_cfg, rng)
                run_niche(nc, int(min(slice_, counter.remaining)))
    except BudgetExhausted:
        pass
    for nc in niches:
        if nc.es is not None:
            nc.x, nc.f = nc.es.best_x, nc.es.best_f

    archive = NicheArchive(cfg.window, tag)
    for nc in niches:
        t = describe(nc.x) if describe is not None else None
        archive.insert(nc.x, nc.f, t)
    if niches:
        best = min(niches, key=lambda nc: nc.f)
        best_x, best_f = best.x, best.f
    else:
        best_x, best_f = None, math.inf
    summary = [(nc.x, nc.f, nc.es.reason if nc.es is not None and nc.es.reason else "budget") for nc in niches]
    return HveaResult(archive, best_x, best_f, counter.used, len(niches), summary)
