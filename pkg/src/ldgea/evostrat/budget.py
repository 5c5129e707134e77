"""Evaluation counting shared by every optimizer."""

from __future__ import annotations

from typing import Callable

import numpy as np


class BudgetExhausted(RuntimeError):
    """Raised when a batch would exceed the evaluation budget."""


class CountingObjective:
    """Batch objective ``f(X) -> (P,)`` with a hard evaluation budget.

    Every row of every batch counts as one evaluation.  A batch that does not
    fit in the remaining budget raises :class:`BudgetExhausted` without calling
    the objective.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], budget: int | float = np.inf):
        self.fn = fn
        self.budget = budget
        self.used = 0

    @property
    def remaining(self) -> int | float:
        return self.budget - self.used

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] > self.remaining:
            raise BudgetExhausted(f"{X.shape[0]} evaluations requested, {self.remaining} left")
        self.used += X.shape[0]
        f = np.asarray(self.fn(X), dtype=float).reshape(-1)
        return np.where(np.isnan(f), np.inf, f)


def as_batch(fn: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], np.ndarray]:
    """Lift a point-wise objective to the batch interface."""

    def batch(X):
        return np.array([fn(x) for x in np.atleast_2d(X)], dtype=float)

    return batch


def reflect(x: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> np.ndarray:
    """Mirror coordinates back into ``[lower, upper]`` (repeatedly if needed)."""
    width = upper - lower
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.mod(x - lower, 2.0 * width)
        t = np.where(t > width, 2.0 * width - t, t)
        out = np.where(width > 0, lower + t, lower)
    inside = (x >= lower) & (x <= upper)
    return np.where(inside, x, np.clip(out, lower, upper))
