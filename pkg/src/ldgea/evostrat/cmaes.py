"""CMA-ES with BIPOP restarts and rounding of integer coordinates.

The strategy runs in box-normalised coordinates ``u = (x - lower) / width``
and starts every restart from the identity covariance.  Integer coordinates
stay continuous inside the strategy; they are rounded to the nearest valid
index (and clamped) only for evaluation.  Their marginal standard deviation is
kept above ``int_min_std`` (in index units) by raising the corresponding
diagonal entry of ``C``, so rounding cannot freeze them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .budget import BudgetExhausted, CountingObjective, reflect


def round_integers(X, mask, n_values: int) -> np.ndarray:
    """Round masked coordinates to the nearest index and clamp to ``[0, n_values - 1]``."""
    X = np.array(X, dtype=float, copy=True)
    mask = np.asarray(mask, dtype=bool)
    X[..., mask] = np.clip(np.floor(X[..., mask] + 0.5), 0, n_values - 1)
    return X


@dataclass
class CmaConfig:
    lam: int | None = None
    sigma0: float = 0.3
    int_min_std: float = 0.2
    tol_param: float = 1e-10
    tol_fun: float = 1e-10
    tol_hist: float = 1e-5
    max_condition: float = 1e14
    max_iter: int | None = None

    def to_dict(self) -> dict:
        return asdict(self)


class CMAES:
    """One (mu/mu_w, lambda)-CMA-ES run with ask/tell.

    Parameters
    ----------
    u0 : ndarray
        Initial mean in normalised coordinates.
    sigma : float
        Initial step size in normalised coordinates.
    lam : int
        Population size.
    rng : numpy.random.Generator
    int_min_std : ndarray, optional
        Per-coordinate lower bound of ``sigma * sqrt(C_ii)`` (0 for continuous).
    """

    def __init__(self, u0, sigma: float, lam: int, rng: np.random.Generator, int_min_std=None, cfg: CmaConfig | None = None):
        self.cfg = cfg or CmaConfig()
        self.mean = np.asarray(u0, dtype=float).copy()
        n = self.n = self.mean.shape[0]
        self.lam = lam
        self.mu = lam // 2
        w = math.log((lam + 1) / 2) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights**2)
        mueff = self.mueff
        self.cs = (mueff + 2) / (n + mueff + 5)
        self.ds = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + self.cs
        self.cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        self.c1 = 2 / ((n + 1.3) ** 2 + mueff)
        self.cmu = min(1 - self.c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.sigma = float(sigma)
        self.C = np.eye(n)
        self.ps = np.zeros(n)
        self.pc = np.zeros(n)
        self.rng = rng
        self.min_std = np.zeros(n) if int_min_std is None else np.asarray(int_min_std, dtype=float)
        self.generation = 0
        self.gen_best: list[float] = []
        self.hist_window = 10 + int(math.ceil(30 * n / lam))
        self.max_iter = self.cfg.max_iter or int(100 + 150 * (n + 3) ** 2 / math.sqrt(lam))
        self.last_shift = math.inf
        self._decompose()

    def _decompose(self):
        # integer safeguard: keep sigma^2 C_ii >= min_std^2
        need = (self.min_std / self.sigma) ** 2
        d = np.diag(self.C)
        low = need > d
        if np.any(low):
            self.C[np.diag_indices(self.n)] = np.where(low, need, d)
        self.C = 0.5 * (self.C + self.C.T)
        ev, B = np.linalg.eigh(self.C)
        ev = np.maximum(ev, 1e-300)
        self.B, self.D = B, np.sqrt(ev)
        self.condition = float(ev.max() / ev.min())

    def ask(self) -> np.ndarray:
        Z = self.rng.standard_normal((self.lam, self.n))
        return self.mean + self.sigma * (Z * self.D) @ self.B.T

    def tell(self, U: np.ndarray, f: np.ndarray):
        """Update from the (repaired) samples ``U`` and their values ``f``."""
        order = np.argsort(f, kind="stable")[: self.mu]
        old = self.mean
        Y = (U[order] - old) / self.sigma
        yw = self.weights @ Y
        self.mean = old + self.sigma * yw
        self.last_shift = float(np.linalg.norm(self.mean - old))
        inv_sqrt = (self.B / self.D) @ self.B.T
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (inv_sqrt @ yw)
        self.generation += 1
        norm_ps = np.linalg.norm(self.ps)
        hsig = norm_ps / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) < (1.4 + 2 / (self.n + 1)) * self.chi_n
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * yw
        rank_mu = (Y.T * self.weights) @ Y
        delta = (1 - hsig) * self.cc * (2 - self.cc)
        self.C = (1 - self.c1 - self.cmu) * self.C + self.c1 * (np.outer(self.pc, self.pc) + delta * self.C) + self.cmu * rank_mu
        self.sigma *= math.exp((self.cs / self.ds) * (norm_ps / self.chi_n - 1))
        self.sigma = min(self.sigma, 1e3)
        self.gen_best.append(float(f[order[0]]))
        self._decompose()

    def stop(self) -> str | None:
        cfg = self.cfg
        if self.generation == 0:
            return None
        if self.last_shift <= cfg.tol_param:
            return "param-tol"
        if len(self.gen_best) >= 2 and abs(self.gen_best[-1] - self.gen_best[-2]) <= cfg.tol_fun:
            return "fun-tol"
        if len(self.gen_best) >= self.hist_window:
            recent = self.gen_best[-self.hist_window :]
            if max(recent) - min(recent) <= cfg.tol_hist:
                return "hist-tol"
        if self.condition > cfg.max_condition:
            return "condition"
        if self.generation >= self.max_iter:
            return "max-iter"
        return None


@dataclass
class ConvergedPoint:
    x: np.ndarray
    f: float
    restart: int
    regime: str
    lam: int
    evaluations: int
    reason: str


@dataclass
class BaselineResult:
    archive: list[ConvergedPoint]
    evaluations: int
    budget: int
    best_x: np.ndarray
    best_f: float
    restarts: int = 0
    log: list[dict] = field(default_factory=list)


def cma_es_baseline_run(
    objective: Callable[[np.ndarray], np.ndarray],
    lower,
    upper,
    integer_mask,
    n_values: int,
    budget: int,
    rng: np.random.Generator,
    cfg: CmaConfig | None = None,
    on_converged: Callable[[ConvergedPoint], None] | None = None,
) -> BaselineResult:
    """BIPOP-restart CMA-ES over a mixed continuous/integer box.

    ``objective`` receives batches whose integer coordinates are already
    rounded.  Exactly ``budget`` evaluations are spent: the last generation is
    truncated if needed.  The best point of every run (converged or cut by the
    budget) is archived and passed to ``on_converged``.
    """
    cfg = cfg or CmaConfig()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mask = np.asarray(integer_mask, dtype=bool)
    width = np.where(upper > lower, upper - lower, 1.0)
    n = lower.shape[0]
    lam_def = cfg.lam or 4 + int(math.floor(3 * math.log(n)))
    min_std = np.where(mask, cfg.int_min_std / width, 0.0)
    counter = CountingObjective(objective, budget)
    zeros, ones = np.zeros(n), np.ones(n)

    def to_x(U):
        return round_integers(lower + U * width, mask, n_values)

    archive: list[ConvergedPoint] = []
    log: list[dict] = []
    best_x, best_f = None, math.inf
    used = {"large": 0, "small": 0}
    large_lam = lam_def
    n_large = 0
    restart = 0
    while counter.remaining > 0:
        if restart == 0:
            regime, lam, sigma = "large", lam_def, cfg.sigma0
        elif used["small"] < used["large"]:
            regime = "small"
            u1, u2 = rng.random(2)
            lam = max(2, int(math.floor(lam_def * (0.5 * large_lam / lam_def) ** (u1**2))))
            sigma = cfg.sigma0 * 10 ** (-2 * u2)
        else:
            regime = "large"
            n_large += 1
            large_lam = lam_def * 2**n_large
            lam, sigma = large_lam, cfg.sigma0
        es = CMAES(rng.random(n), sigma, lam, rng, min_std, cfg)
        run_best_x, run_best_f = None, math.inf
        start = counter.used
        reason = None
        while reason is None:
            U = reflect(es.ask(), zeros, ones)
            k = int(min(lam, counter.remaining))
            X = to_x(U[:k])
            f = counter(X)
            i = int(np.argmin(f))
            if run_best_x is None or f[i] < run_best_f:
                run_best_x, run_best_f = X[i].copy(), float(f[i])
            if k < lam:
                reason = "budget"
                break
            es.tell(U, f)
            reason = es.stop()
            if reason is None and counter.remaining == 0:
                reason = "budget"
        spent = counter.used - start
        used[regime] += spent
        point = ConvergedPoint(run_best_x, run_best_f, restart, regime, lam, spent, reason)
        archive.append(point)
        log.append({"restart": restart, "regime": regime, "lam": lam, "evaluations": spent, "reason": reason, "f": run_best_f})
        if on_converged is not None:
            on_converged(point)
        if run_best_f < best_f or best_x is None:
            best_x, best_f = run_best_x, run_best_f
        restart += 1
    return BaselineResult(archive, counter.used, budget, best_x, best_f, restart, log)
