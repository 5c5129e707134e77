"""Equal-budget CMA-ES baseline on the full mixed parameter vector."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .config import RunConfig, build_problem
from .descriptor import SIGN_MARGIN, describe_vector
from .evostrat.cmaes import BaselineResult, ConvergedPoint, cma_es_baseline_run
from .merit import LensProblem
from .optics.system import LensTemplate


def mixed_bounds(template: LensTemplate) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Box ``[curvatures | thicknesses | materials]`` and the integer mask.

    With the positive-first rule the first curvature lives in ``[margin, c_max]``.
    """
    lo, hi = template.continuous_bounds()
    if template.positive_first and template.n_c:
        lo[0] = SIGN_MARGIN
    n_glass = len(template.catalog)
    lo = np.concatenate([lo, np.zeros(template.n_m)])
    hi = np.concatenate([hi, np.full(template.n_m, n_glass - 1.0)])
    mask = np.r_[np.zeros(template.n_continuous, bool), np.ones(template.n_m, bool)]
    return lo, hi, mask


def mixed_objective(template: LensTemplate, problem: LensProblem) -> Callable[[np.ndarray], np.ndarray]:
    k = template.n_continuous

    def f(X):
        X = np.atleast_2d(X)
        return problem.evaluate(X[:, :k], X[:, k:].astype(int))

    return f


def point_descriptor(template: LensTemplate, x) -> str:
    k = template.n_continuous
    return describe_vector(x[:k], [int(m) for m in x[k:]], template.n_c).key()


def baseline_run(
    cfg: RunConfig,
    on_converged: Callable[[ConvergedPoint], None] | None = None,
    built: tuple[LensTemplate, LensProblem] | None = None,
) -> BaselineResult:
    """CMA-ES with BIPOP restarts under ``lam * budget * iterations`` evaluations."""
    template, problem = built or build_problem(cfg)
    lo, hi, mask = mixed_bounds(template)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2,)))
    return cma_es_baseline_run(
        mixed_objective(template, problem), lo, hi, mask, len(template.catalog),
        cfg.baseline_budget, rng, cfg.baseline, on_converged,
    )
