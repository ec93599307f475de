"""Vectorized forward-mode AD with tagged, nestable dual numbers.

A ``Dual`` carries a primal value and a tuple of partials; both may be numpy
arrays (one entry per sample point) or lower-level Duals.  Every call to
:func:`partials` opens a fresh tag, so nesting gives higher derivatives
without perturbation confusion: a Dual with a lower tag is a constant at a
higher level.
"""
from __future__ import annotations

import itertools

import numpy as np

_TAGS = itertools.count(1)


class Dual:
    __slots__ = ("val", "eps", "tag")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, val, eps, tag: int):
        self.val = val
        self.eps = tuple(eps)
        self.tag = tag

    def __repr__(self) -> str:
        return f"Dual(tag={self.tag}, val={self.val!r}, eps={self.eps!r})"

    # -- arithmetic ---------------------------------------------------
    def __add__(self, other):
        tag, a, da, b, db = _align(self, other)
        return _make(tag, a + b, da, db, lambda x, y: x + y)

    __radd__ = __add__

    def __sub__(self, other):
        tag, a, da, b, db = _align(self, other)
        return _make(tag, a - b, da, db, lambda x, y: x - y)

    def __rsub__(self, other):
        tag, a, da, b, db = _align(other, self)
        return _make(tag, a - b, da, db, lambda x, y: x - y)

    def __neg__(self):
        return Dual(-self.val, tuple(-e for e in self.eps), self.tag)

    def __mul__(self, other):
        tag, a, da, b, db = _align(self, other)
        if da is None:
            return Dual(a * b, tuple(a * e for e in db), tag)
        if db is None:
            return Dual(a * b, tuple(e * b for e in da), tag)
        return Dual(a * b, tuple(x * b + a * y for x, y in zip(da, db)), tag)

    __rmul__ = __mul__

    def __truediv__(self, other):
        tag, a, da, b, db = _align(self, other)
        return _div(tag, a, da, b, db)

    def __rtruediv__(self, other):
        tag, a, da, b, db = _align(other, self)
        return _div(tag, a, da, b, db)

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        if n == 0:
            return 1.0
        fac = n * self.val ** (n - 1)
        return Dual(self.val**n, tuple(fac * e for e in self.eps), self.tag)


def _tag(x) -> int:
    return x.tag if isinstance(x, Dual) else 0


def _split(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.val, x.eps
    return x, None


def _align(x, y):
    tag = max(_tag(x), _tag(y))
    a, da = _split(x, tag)
    b, db = _split(y, tag)
    return tag, a, da, b, db


def _make(tag, val, da, db, op):
    if da is None:
        return Dual(val, tuple(op(0.0, y) for y in db), tag)
    if db is None:
        return Dual(val, da, tag)
    return Dual(val, tuple(op(x, y) for x, y in zip(da, db)), tag)


def _div(tag, a, da, b, db):
    q = a / b
    if db is None:
        return Dual(q, tuple(x / b for x in da), tag)
    if da is None:
        return Dual(q, tuple(-q * y / b for y in db), tag)
    return Dual(q, tuple((x - q * y) / b for x, y in zip(da, db)), tag)


def sqrt(x):
    if isinstance(x, Dual):
        s = sqrt(x.val)
        return Dual(s, tuple(e / (2.0 * s) for e in x.eps), x.tag)
    return np.sqrt(x)


def partials(f, *args):
    """Evaluate ``f(*args)`` with a fresh tag seeded on every argument.

    Returns ``(value, derivs)`` where ``value`` mirrors the (nested list/tuple)
    structure of the output and ``derivs[k]`` is the same structure holding
    d/d args[k].
    """
    tag = next(_TAGS)
    n = len(args)
    seeds = [Dual(a, tuple(1.0 if j == k else 0.0 for j in range(n)), tag) for k, a in enumerate(args)]
    out = f(*seeds)
    value = _primal(out, tag)
    derivs = [_tangent(out, tag, k) for k in range(n)]
    return value, derivs


def _primal(out, tag):
    if isinstance(out, (list, tuple)):
        return type(out)(_primal(o, tag) for o in out)
    return out.val if isinstance(out, Dual) and out.tag == tag else out


def _tangent(out, tag, k):
    if isinstance(out, (list, tuple)):
        return type(out)(_tangent(o, tag, k) for o in out)
    if isinstance(out, Dual) and out.tag == tag:
        return out.eps[k]
    return 0.0
