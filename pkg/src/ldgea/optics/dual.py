"""Forward-mode dual numbers over numpy arrays.

A :class:`Dual` carries a value array of shape ``S`` and a derivative array of
shape ``S + (K,)`` holding the partial derivatives with respect to ``K`` seed
directions.  The ray-trace kernel is written against the small set of
operations below so that the same code runs on plain ``ndarray`` inputs (fast
path) and on ``Dual`` inputs (gradient path).
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class Dual:
    __slots__ = ("val", "der")
    __array_ufunc__ = None  # ndarray <op> Dual defers to the reflected Dual method

    def __init__(self, val, der):
        self.val = np.asarray(val, dtype=float)
        self.der = np.asarray(der, dtype=float)

    @classmethod
    def variables(cls, x) -> "Dual":
        """Seed a 1-D vector so that ``der`` is the identity."""
        x = np.asarray(x, dtype=float)
        return cls(x, np.eye(x.size))

    @classmethod
    def constant(cls, x, n: int) -> "Dual":
        x = np.asarray(x, dtype=float)
        return cls(x, np.zeros(x.shape + (n,)))

    @property
    def shape(self):
        return self.val.shape

    @property
    def nvars(self) -> int:
        return self.der.shape[-1]

    def __repr__(self):
        return f"Dual(val={self.val!r}, nvars={self.nvars})"

    def __len__(self):
        return len(self.val)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.val[idx], self.der[idx])

    def __neg__(self):
        return Dual(-self.val, -self.der)

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.val + other.val, self.der + other.der)
        other = np.asarray(other, dtype=float)
        val = self.val + other
        return Dual(val, np.broadcast_to(self.der, val.shape + (self.nvars,)))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.val * other.val,
                self.der * other.val[..., None] + other.der * self.val[..., None],
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.val * other, self.der * other[..., None])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.val / other.val
            return Dual(q, (self.der - other.der * q[..., None]) / other.val[..., None])
        other = np.asarray(other, dtype=float)
        return Dual(self.val / other, self.der / other[..., None])

    def __rtruediv__(self, other):
        other = np.asarray(other, dtype=float)
        q = other / self.val
        return Dual(q, -self.der * (q / self.val)[..., None])

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponent not supported")
        if p == 2:
            return self * self
        v = self.val ** p
        return Dual(v, self.der * (p * self.val ** (p - 1))[..., None])

    # comparisons act on values only
    def __lt__(self, other):
        return self.val < value(other)

    def __le__(self, other):
        return self.val <= value(other)

    def __gt__(self, other):
        return self.val > value(other)

    def __ge__(self, other):
        return self.val >= value(other)


def value(x):
    return x.val if isinstance(x, Dual) else x


def sqrt(x):
    if isinstance(x, Dual):
        r = np.sqrt(x.val)
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0, 0.5 / np.where(r > 0, r, 1.0), 0.0)
        return Dual(r, x.der * scale[..., None])
    return np.sqrt(x)


def absolute(x):
    if isinstance(x, Dual):
        s = np.sign(x.val)
        return Dual(np.abs(x.val), x.der * s[..., None])
    return np.abs(x)


def relu(x):
    """``max(x, 0)`` with zero derivative on the inactive side."""
    if isinstance(x, Dual):
        on = x.val > 0
        return Dual(np.where(on, x.val, 0.0), x.der * on[..., None])
    return np.maximum(x, 0.0)


def where(mask, a, b):
    mask = np.asarray(mask)
    if isinstance(a, Dual) or isinstance(b, Dual):
        n = a.nvars if isinstance(a, Dual) else b.nvars
        a = a if isinstance(a, Dual) else Dual.constant(np.broadcast_to(a, mask.shape), n)
        b = b if isinstance(b, Dual) else Dual.constant(np.broadcast_to(b, mask.shape), n)
        val = np.where(mask, a.val, b.val)
        der = np.where(mask[..., None], a.der, b.der)
        return Dual(val, der)
    return np.where(mask, a, b)


def total(x, axis=None):
    """Sum over ``axis`` (value axes only)."""
    if isinstance(x, Dual):
        if axis is None:
            axis = tuple(range(x.val.ndim))
        elif isinstance(axis, int):
            axis = (axis % x.val.ndim,)
        else:
            axis = tuple(a % x.val.ndim for a in axis)
        return Dual(x.val.sum(axis=axis), x.der.sum(axis=axis))
    return np.sum(x, axis=axis)


def expand(x, axis: int):
    """Insert a length-1 value axis at ``axis`` (non-negative)."""
    if isinstance(x, Dual):
        return Dual(np.expand_dims(x.val, axis), np.expand_dims(x.der, axis))
    return np.expand_dims(x, axis)


def reshape(x, shape):
    """Reshape the value dimensions."""
    if isinstance(x, Dual):
        return Dual(x.val.reshape(shape), x.der.reshape(tuple(shape) + (x.nvars,)))
    return np.reshape(x, shape)


def cumsum(x, axis: int):
    if isinstance(x, Dual):
        axis = axis % x.val.ndim
        return Dual(np.cumsum(x.val, axis=axis), np.cumsum(x.der, axis=axis))
    return np.cumsum(x, axis=axis)


def stack(items, axis: int = -1):
    """Stack along a new value axis; ``axis`` counts value dimensions only."""
    if any(isinstance(it, Dual) for it in items):
        n = next(it.nvars for it in items if isinstance(it, Dual))
        duals = [it if isinstance(it, Dual) else Dual.constant(it, n) for it in items]
        ndim = duals[0].val.ndim + 1
        axis = axis % ndim
        return Dual(
            np.stack([d.val for d in duals], axis=axis),
            np.stack([np.broadcast_to(d.der, d.val.shape + (n,)) for d in duals], axis=axis),
        )
    return np.stack(items, axis=axis)


def gradient(fn: Callable, x) -> tuple[float, np.ndarray]:
    """Value and exact gradient of a scalar function of a 1-D vector.

    ``fn`` must be written with the operations of this module (or plain
    arithmetic) so that it accepts a :class:`Dual` argument.
    """
    out = fn(Dual.variables(x))
    if not isinstance(out, Dual):
        n = np.asarray(x).size
        return float(out), np.zeros(n)
    v = float(np.asarray(out.val).reshape(()))
    g = np.asarray(out.der, dtype=float).reshape(-1)
    if not np.isfinite(v):
        raise FloatingPointError("objective is not finite at the evaluation point")
    return v, g
