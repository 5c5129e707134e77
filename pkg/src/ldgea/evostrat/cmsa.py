"""Covariance Matrix Self-Adaptation Evolution Strategy (CMSA-ES).

Each offspring draws its own step size ``sigma_l = sigma * exp(tau N(0, 1))``
and a direction ``s_l ~ N(0, C)``.  The mean, the step size and the
covariance are recombined from the ``mu`` best offspring; the covariance uses
the rank-mu rule with learning time ``tau_c``.  The box is enforced by
reflection, and the repaired offspring replaces the sampled one in the update.

:class:`CMSA` is resumable (one :meth:`CMSA.step` per generation) so that a
caller can interleave several instances under one budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .budget import BudgetExhausted, CountingObjective, reflect

REASONS = ("budget", "param-tol", "fun-tol", "hist-tol", "external-stop")


@dataclass
class EsConfig:
    """Settings of one evolution-strategy run.

    ``None`` entries take dimension-dependent defaults: ``lam = 4 + floor(3 ln n)``,
    ``mu = max(1, floor(lam / 4))``, ``hist_window = 10 + ceil(30 n / lam)``.
    With ``mu = lam / 2`` the rank-mu covariance estimate keeps shrinking
    faster than the step size can recover, and the strategy stalls even on a
    sphere.  The initial step is ``sigma0_fraction`` of the box width per coordinate.
    """

    lam: int | None = None
    mu: int | None = None
    sigma0_fraction: float = 0.3
    budget: int | float = math.inf
    tol_param: float = 1e-10
    tol_fun: float = 1e-10
    tol_hist: float = 1e-5
    hist_window: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.budget is None:  # stored files write an unlimited budget as null
            self.budget = math.inf

    def resolved(self, n: int) -> "EsConfig":
        lam = self.lam or 4 + int(math.floor(3 * math.log(n)))
        mu = self.mu or max(1, lam // 4)
        if not 1 <= mu <= lam:
            raise ValueError("need 1 <= mu <= lambda")
        if not self.sigma0_fraction > 0:
            raise ValueError("sigma0_fraction must be positive")
        if min(self.tol_param, self.tol_fun, self.tol_hist) <= 0:
            raise ValueError("tolerances must be positive")
        hist = self.hist_window or 10 + int(math.ceil(30 * n / lam))
        return EsConfig(lam, mu, self.sigma0_fraction, self.budget, self.tol_param, self.tol_fun, self.tol_hist, hist, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EsRunResult:
    x: np.ndarray
    f: float
    evaluations: int
    reason: str
    trace: list[float] = field(default_factory=list)


class CMSA:
    """One CMSA-ES instance inside the box ``[lower, upper]``.

    Parameters
    ----------
    x0 : ndarray
        Initial mean (inside the box).
    f0 : float
        Objective value at ``x0``; it seeds the incumbent and the history.
    lower, upper : ndarray
        Box bounds.
    cfg : EsConfig
    rng : numpy.random.Generator
    """

    def __init__(self, x0, f0: float, lower, upper, cfg: EsConfig, rng: np.random.Generator):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.mean = np.asarray(x0, dtype=float).copy()
        n = self.n = self.mean.shape[0]
        self.cfg = cfg.resolved(n)
        self.rng = rng
        width = self.upper - self.lower
        scale = np.where(width > 0, width, 1.0)
        self.sigma = self.cfg.sigma0_fraction
        self.C = np.diag(scale**2)
        self.tau = 1.0 / math.sqrt(2.0 * n)
        self.tau_c = 1.0 + n * (n + 1) / (2.0 * self.cfg.mu)
        self.best_x = self.mean.copy()
        self.best_f = float(f0)
        self.gen_best = [float(f0)]
        self.trace: list[float] = []
        self.evaluations = 0
        self.reason: str | None = None

    @property
    def stopped(self) -> bool:
        return self.reason is not None

    def _sqrt_cov(self):
        w, B = np.linalg.eigh(0.5 * (self.C + self.C.T))
        return B * np.sqrt(np.maximum(w, 1e-300))

    def step(self, objective: CountingObjective, budget_left: int | float = math.inf) -> bool:
        """Run one generation; returns ``False`` once a stopping rule fired."""
        if self.stopped:
            return False
        lam, mu = self.cfg.lam, self.cfg.mu
        left = min(budget_left, objective.remaining, self.cfg.budget - self.evaluations)
        if left < lam:
            self.reason = "budget"
            return False
        A = self._sqrt_cov()
        sig = self.sigma * np.exp(self.tau * self.rng.standard_normal(lam))
        S = self.rng.standard_normal((lam, self.n)) @ A.T
        Y = reflect(self.mean + sig[:, None] * S, self.lower, self.upper)
        S = (Y - self.mean) / sig[:, None]
        try:
            f = objective(Y)
        except BudgetExhausted:
            self.reason = "budget"
            return False
        self.evaluations += lam
        order = np.argsort(f, kind="stable")[:mu]
        old = self.mean
        self.mean = Y[order].mean(axis=0)
        self.sigma = float(sig[order].mean())
        Ss = S[order]
        self.C = (1.0 - 1.0 / self.tau_c) * self.C + (Ss.T @ Ss) / (mu * self.tau_c)
        g_best = float(f[order[0]])
        if g_best < self.best_f:
            self.best_f, self.best_x = g_best, Y[order[0]].copy()
        self.trace.append(self.best_f)
        prev = self.gen_best[-1]
        self.gen_best.append(g_best)
        if np.linalg.norm(self.mean - old) <= self.cfg.tol_param:
            self.reason = "param-tol"
        elif abs(g_best - prev) <= self.cfg.tol_fun:
            self.reason = "fun-tol"
        elif len(self.gen_best) >= self.cfg.hist_window:
            recent = self.gen_best[-self.cfg.hist_window :]
            if max(recent) - min(recent) <= self.cfg.tol_hist:
                self.reason = "hist-tol"
        return not self.stopped

    def result(self) -> EsRunResult:
        return EsRunResult(self.best_x.copy(), self.best_f, self.evaluations, self.reason or "external-stop", list(self.trace))


def cmsa_es_run(objective, cfg: EsConfig, x0, lower, upper, rng: np.random.Generator | None = None) -> EsRunResult:
    """Minimise the batch ``objective`` from ``x0`` until a stopping rule fires.

    ``objective`` maps ``(P, n)`` to ``(P,)``.  Evaluating ``x0`` counts
    against ``cfg.budget``; a zero budget returns ``x0`` untouched.
    """
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise ValueError("initial point lies outside the box")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    if cfg.budget < 1:
        return EsRunResult(x0.copy(), math.nan, 0, "budget", [])
    counter = objective if isinstance(objective, CountingObjective) else CountingObjective(objective, cfg.budget)
    f0 = float(counter(x0[None, :])[0])
    if not math.isfinite(f0):
        raise ValueError("objective is not finite at the initial point")
    es = CMSA(x0, f0, lower, upper, cfg, rng)
    while es.step(counter, cfg.budget - 1 - es.evaluations):
        pass
    res = es.result()
    res.evaluations += 1
    return res
