"""The descriptor-guided outer loop.

Every iteration samples ``lam`` descriptors, runs a hill-valley search inside
each descriptor's box (concurrently, one thread per slot up to the cap),
selects the ``mu`` best descriptors and moves the factorised distribution
toward them.  The ablated variant draws descriptors uniformly instead.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig, build_problem
from .descriptor import Descriptor, DescriptorDistribution, describe_vector, kl_divergence, subspace_bounds
from .hvea import HveaConfig, HveaResult, NicheArchive, hvea_run
from .merit import LensProblem
from .optics.system import LensTemplate

# spawn-key prefixes keep the sampler and the slot streams disjoint
_SAMPLER_KEY = 0
_SLOT_KEY = 1


def slot_rng(seed: int, t: int, i: int) -> np.random.Generator:
    """Generator of slot ``i`` in iteration ``t``; independent of scheduling."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SLOT_KEY, t, i)))


def sampler_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_SAMPLER_KEY,)))


@dataclass
class SlotResult:
    descriptor: Descriptor
    best_f: float
    archive: NicheArchive
    evaluations: int
    n_niches: int
    error: str | None = None


@dataclass
class GenerationRecord:
    iteration: int
    descriptors: list[str]
    values: list[float]
    selected: list[str]
    distribution: dict
    kl: float
    evaluations: int
    wall_time: float
    niches: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "descriptors": self.descriptors,
            "values": self.values,
            "selected": self.selected,
            "distribution": self.distribution,
            "kl": self.kl,
            "evaluations": self.evaluations,
            "wall_time": self.wall_time,
            "niches": self.niches,
        }


@dataclass
class ArchiveEntry:
    iteration: int
    slot: int
    descriptor: str
    x: list[float]
    value: float


@dataclass
class RunResult:
    generations: list[GenerationRecord]
    archive: dict[str, NicheArchive]
    reason: str
    evaluations: int
    entries: list[ArchiveEntry] = field(default_factory=list)

    @property
    def distinct(self) -> int:
        return sum(1 for a in self.archive.values() if len(a))

    @property
    def candidates(self) -> int:
        return sum(len(a) for a in self.archive.values())

    def best(self) -> tuple[str | None, object, float]:
        key, x, f = None, None, math.inf
        for k in sorted(self.archive):
            a = self.archive[k]
            if len(a) and a.best < f:
                key, x, f = k, a.points[0], a.best
        return key, x, f

    def ranked(self) -> list[tuple[float, str, object]]:
        """All archived candidates ordered by value, then descriptor."""
        rows = [(v, k, x) for k, a in self.archive.items() for v, x in a.entries()]
        rows.sort(key=lambda r: (r[0], r[1]))
        return rows


def select_top(keys: Sequence[str], values: Sequence[float], mu: int) -> list[int]:
    """Indices of the ``mu`` smallest values; ties go to the smaller descriptor key."""
    if not 1 <= mu <= len(keys):
        raise ValueError(f"cannot select {mu} of {len(keys)} records")
    order = sorted(range(len(keys)), key=lambda i: (values[i], keys[i]))
    return order[:mu]


SlotFn = Callable[[Descriptor, int, int, np.random.Generator], SlotResult]


def stage1_evaluate(descriptors: Sequence[Descriptor], t: int, slot_fn: SlotFn, seed: int, threads: int = 1) -> list[SlotResult]:
    """Evaluate every descriptor; results come back in input order.

    A slot that raises yields ``best_f = inf`` and an empty archive.
    """

    def one(i: int) -> SlotResult:
        d = descriptors[i]
        try:
            return slot_fn(d, t, i, slot_rng(seed, t, i))
        except Exception as exc:  # a failed slot must not abort the batch
            return SlotResult(d, math.inf, NicheArchive(0.0, d.key()), 0, 0, error=f"{type(exc).__name__}: {exc}")

    if not descriptors:
        return []
    if threads <= 1 or len(descriptors) == 1:
        return [one(i) for i in range(len(descriptors))]
    with ThreadPoolExecutor(max_workers=min(threads, len(descriptors))) as pool:
        return list(pool.map(one, range(len(descriptors))))


class LensSearch:
    """Binds a lens problem to the per-descriptor hill-valley search."""

    def __init__(self, template: LensTemplate, problem: LensProblem, budget: int, hvea_cfg: HveaConfig):
        self.template = template
        self.problem = problem
        self.budget = budget
        self.hvea_cfg = hvea_cfg

    def __call__(self, d: Descriptor, t: int, i: int, rng: np.random.Generator) -> SlotResult:
        lo, hi = subspace_bounds(d, self.template)
        mats = np.array(d.materials, dtype=int)
        n_c = self.template.n_c
        key = d.key()
        res: HveaResult = hvea_run(
            lambda X: self.problem.evaluate(X, mats),
            lo, hi, self.budget, rng, self.hvea_cfg, tag=key,
            describe=lambda x: describe_vector(x, mats, n_c).key(),
        )
        return SlotResult(d, res.best_f, res.archive, res.evaluations, res.n_niches)


def initial_distribution(template: LensTemplate, cfg: RunConfig) -> DescriptorDistribution:
    return DescriptorDistribution.uniform(
        template.n_c, template.n_m, len(template.catalog), floor=cfg.prob_floor, positive_first=template.positive_first
    )


def ldgea_loop(
    cfg: RunConfig,
    dist: DescriptorDistribution,
    slot_fn: SlotFn,
    on_generation: Callable[[GenerationRecord, list[SlotResult]], None] | None = None,
) -> RunResult:
    """Outer loop over any per-descriptor evaluator (see :func:`ldgea_run`)."""
    rng = sampler_rng(cfg.seed)
    uniform = DescriptorDistribution.uniform(dist.n_signs, dist.n_materials, dist.n_glasses, dist.floor, dist.positive_first)
    threads = cfg.thread_cap()
    archive: dict[str, NicheArchive] = {}
    entries: list[ArchiveEntry] = []
    generations: list[GenerationRecord] = []
    best_trace: list[float] = []
    evaluations = 0
    reason = "iteration-cap"
    for t in range(1, cfg.iterations + 1):
        start = time.perf_counter()
        source = uniform if cfg.ablated else dist
        descriptors = source.sample(rng, cfg.lam)
        results = stage1_evaluate(descriptors, t, slot_fn, cfg.seed, threads)
        keys = [d.key() for d in descriptors]
        values = [float(r.best_f) for r in results]
        picked = select_top(keys, values, cfg.mu)
        used = sum(r.evaluations for r in results)
        evaluations += used
        for i, r in enumerate(results):
            key = keys[i]
            target = archive.setdefault(key, NicheArchive(cfg.window, key))
            for v, x in r.archive.entries():
                entries.append(ArchiveEntry(t, i, key, [float(c) for c in np.asarray(x)], float(v)))
                target.insert(x, v, key)
        prev = dist
        kl = 0.0
        if not cfg.ablated:
            dist = dist.update([descriptors[i] for i in picked], cfg.alpha)
            kl = kl_divergence(dist, prev)
        rec = GenerationRecord(
            t, keys, values, [keys[i] for i in picked], dist.to_dict(), kl, used,
            time.perf_counter() - start, [r.n_niches for r in results],
        )
        generations.append(rec)
        if on_generation is not None:
            on_generation(rec, results)
        best_trace.append(min([a.best for a in archive.values()] + [math.inf]))
        if t >= cfg.iterations:
            reason = "iteration-cap"
            break
        L = cfg.stagnation_window
        if len(best_trace) >= L:
            gain = best_trace[-L] - best_trace[-1]
            if not gain >= cfg.stagnation_tol:  # also stops when nothing finite was found
                reason = "stagnation"
                break
        if not cfg.ablated and kl < cfg.kl_threshold:
            reason = "kl-converged"
            break
    return RunResult(generations, archive, reason, evaluations, entries)


def ldgea_run(cfg: RunConfig, on_generation=None, built: tuple[LensTemplate, LensProblem] | None = None) -> RunResult:
    """Full descriptor-guided (or ablated) search on the configured lens preset.

    ``built`` passes an already assembled ``(template, problem)`` pair.
    """
    template, problem = built or build_problem(cfg)
    search = LensSearch(template, problem, cfg.budget, cfg.hvea_config())
    return ldgea_loop(cfg, initial_distribution(template, cfg), search, on_generation)
