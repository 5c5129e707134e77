"""Gradient refinement of archived candidates.

Projected BFGS with Armijo backtracking over the surface curvatures and the
image distance, with thicknesses and glasses held fixed.  Curvatures are
projected onto their descriptor sign box so that refinement never changes a
candidate's descriptor.  Gradients are exact (forward-mode dual numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .descriptor import SIGN_MARGIN, Descriptor, describe_vector, subspace_bounds
from .merit import LensProblem


@dataclass
class BfgsResult:
    x: np.ndarray
    f: float
    iterations: int
    grad_norm: float
    reason: str
    f_trace: list[float] = field(default_factory=list)
    projected_steps: int = 0


def _project(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def bfgs_minimize(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x0,
    lower=None,
    upper=None,
    max_iter: int = 1000,
    gtol: float = 1e-6,
    c1: float = 1e-4,
    shrink: float = 0.5,
    min_step: float = 1e-20,
    scale=None,
) -> BfgsResult:
    """Minimise ``fun`` with gradient ``grad`` inside a box.

    The line search only calls ``fun``; ``grad`` is evaluated at accepted
    points.

    The stopping test uses the projected gradient ``x - P(x - g)``, which is
    the plain gradient away from active bounds.  Accepted steps satisfy the
    Armijo condition, so the value never increases.  When the search runs in
    rescaled variables ``u = x / scale``, pass ``scale`` so that the stopping
    test is applied to the gradient in the original units.
    """
    x = np.asarray(x0, dtype=float).copy()
    n = x.shape[0]
    lo = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    hi = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
    x = _project(x, lo, hi)
    f, g = float(fun(x)), np.asarray(grad(x), dtype=float)
    if not math.isfinite(f):
        raise ValueError("objective is not finite at the start point")
    trace = [f]
    H = np.eye(n)
    scaled = False
    projected = 0

    sc = np.ones(n) if scale is None else np.asarray(scale, dtype=float)

    def pg_norm(u, g):
        xr, gr = u * sc, g / sc
        return float(np.linalg.norm(xr - _project(xr - gr, lo * sc, hi * sc)))

    it = 0
    reason = "max-iter"
    while True:
        gn = pg_norm(x, g)
        if gn < gtol:
            reason = "gradient"
            break
        if it >= max_iter:
            break
        # variables pinned at a bound with the gradient pushing outward stay fixed
        active = ((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0))
        free = ~active
        d = np.zeros(n)
        d[free] = -H[np.ix_(free, free)] @ g[free]
        if not g @ d < 0:  # not a descent direction: fall back to steepest descent
            H = np.eye(n)
            scaled = False
            d = np.where(free, -g, 0.0)
        step = 1.0
        accepted = False
        while step >= min_step:
            trial = _project(x + step * d, lo, hi)
            s = trial - x
            if not np.any(s):
                break
            try:
                ft = float(fun(trial))
            except (FloatingPointError, ArithmeticError):
                ft = math.inf
            if math.isfinite(ft) and ft <= f + c1 * float(g @ s):
                accepted = True
                break
            step *= shrink
        if not accepted:
            reason = "line-search"
            break
        if np.any(trial != x + step * d):
            projected += 1
        try:
            gt = np.asarray(grad(trial), dtype=float)
        except (FloatingPointError, ArithmeticError):
            reason = "gradient-error"
            break
        y = gt - g
        sy = float(s @ y)
        if sy > 1e-300:
            if not scaled:
                H = np.eye(n) * (sy / float(y @ y))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ y
            H = H + ((sy + y @ Hy) * rho * rho) * np.outer(s, s) - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        x, f, g = trial, ft, gt
        trace.append(f)
        it += 1
    return BfgsResult(x, f, it, pg_norm(x, g), reason, trace, projected)


@dataclass
class RefineReport:
    descriptor: str
    x_before: np.ndarray
    image_before: float
    f_before: float
    x_after: np.ndarray
    image_after: float
    f_after: float
    iterations: int
    grad_norm: float
    reason: str
    projected_steps: int
    f_trace: list[float] = field(default_factory=list)

    @property
    def improvement(self) -> float:
        """``F_before / F_after`` (1 when nothing changed)."""
        if self.f_after == self.f_before:
            return 1.0
        return self.f_before / self.f_after if self.f_after > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "descriptor": self.descriptor,
            "x_before": [float(v) for v in self.x_before],
            "image_before": self.image_before,
            "f_before": self.f_before,
            "x_after": [float(v) for v in self.x_after],
            "image_after": self.image_after,
            "f_after": self.f_after,
            "improvement": self.improvement,
            "iterations": self.iterations,
            "grad_norm": self.grad_norm,
            "reason": self.reason,
            "projected_steps": self.projected_steps,
        }


def bfgs_refine(
    problem: LensProblem,
    x,
    materials,
    max_iter: int = 1000,
    gtol: float = 1e-6,
    margin: float = SIGN_MARGIN,
) -> RefineReport:
    """Refine curvatures and image distance of one candidate.

    The image plane starts at the paraxial focus and then becomes a free
    variable.  Variables are rescaled (curvatures by ``c_max``, the image
    distance by its start value) before BFGS runs.
    """
    template = problem.template
    x = np.asarray(x, dtype=float)
    mats = np.asarray(materials, dtype=int)
    n_c = template.n_c
    desc: Descriptor = describe_vector(x, mats, n_c)
    if any(s == 0 for s in desc.signs):
        raise ValueError("flat curvatures have no sign box; cannot refine")
    lo_c, hi_c = subspace_bounds(desc, template, margin)
    img0 = problem.solved_image_distance(x, mats)
    if not math.isfinite(img0):
        raise ValueError("candidate has no finite image distance")
    scale = np.r_[np.full(n_c, template.max_curvature), max(abs(img0), 1.0)]
    free = list(range(n_c))
    lo = np.r_[lo_c[:n_c], 0.0] / scale
    hi = np.r_[hi_c[:n_c], np.inf] / scale
    v0 = np.r_[x[:n_c], img0] / scale

    idx = np.array(free)

    def fun(u):
        v = u * scale
        xx = x.copy()
        xx[idx] = v[:n_c]
        return float(problem.evaluate(xx[None, :], mats, image_distance=v[n_c])[0])

    def grad(u):
        _, g = problem.value_and_grad(u * scale, mats, free=free, base_x=x, explicit_image=True)
        return np.asarray(g, dtype=float) * scale

    f0 = fun(v0)
    res = bfgs_minimize(fun, grad, v0, lo, hi, max_iter=max_iter, gtol=gtol, scale=scale)
    v = res.x * scale
    x_after = x.copy()
    x_after[:n_c] = v[:n_c]
    return RefineReport(
        desc.key(), x, float(img0), float(f0), x_after, float(v[n_c]), float(res.f),
        res.iterations, res.grad_norm, res.reason, res.projected_steps, res.f_trace,
    )
