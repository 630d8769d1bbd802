"""Truncated multivariate Taylor arithmetic ("jets").

A :class:`Jet` holds the Taylor coefficients of a tensor-valued function of
``nvars`` variables up to total degree ``order``, stored along a trailing
coefficient axis.  Arithmetic, elementary functions and tensor contractions
propagate the coefficients exactly, so every derivative that is read back
(via :meth:`Jet.partial`) is exact to rounding.  Taking a partial lowers the
number of trustworthy orders by one; jets track that in ``Jet.order``.

Coefficients are Taylor coefficients (``d^m f / m!``), not raw derivatives.
"""

from __future__ import annotations

import itertools
import math
import string
from functools import lru_cache
from typing import Any, Sequence

import numpy as np


class JetOrderError(ValueError):
    """A derivative was requested beyond the jet's truncation order."""


class JetSpace:
    """Monomial bookkeeping for jets in ``nvars`` variables up to ``order``."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        monos = [
            m
            for m in itertools.product(range(order + 1), repeat=nvars)
            if sum(m) <= order
        ]
        monos.sort(key=lambda m: (sum(m), tuple(-e for e in m)))
        self.monomials = monos
        self.index = {m: i for i, m in enumerate(monos)}
        self.size = len(monos)
        self.degree = np.array([sum(m) for m in monos])

        pi, pj, pk = [], [], []
        for i, a in enumerate(monos):
            for j, b in enumerate(monos):
                s = tuple(x + y for x, y in zip(a, b))
                k = self.index.get(s)
                if k is not None:
                    pi.append(i)
                    pj.append(j)
                    pk.append(k)
        self.pair_i = np.array(pi)
        self.pair_j = np.array(pj)
        reduce = np.zeros((len(pk), self.size))
        reduce[np.arange(len(pk)), pk] = 1.0
        self.pair_reduce = reduce

        # d/dv maps coefficient of m + e_v (times m_v + 1) onto m
        self.d_src = []
        self.d_fac = []
        for v in range(nvars):
            src = np.zeros(self.size, dtype=int)
            fac = np.zeros(self.size)
            for i, m in enumerate(monos):
                up = list(m)
                up[v] += 1
                k = self.index.get(tuple(up))
                if k is not None:
                    src[i] = k
                    fac[i] = m[v] + 1
            self.d_src.append(src)
            self.d_fac.append(fac)

        self.masks = [(self.degree <= k).astype(float) for k in range(order + 1)]

    def __repr__(self) -> str:
        return f"JetSpace(nvars={self.nvars}, order={self.order})"


@lru_cache(maxsize=None)
def jet_space(nvars: int, order: int) -> JetSpace:
    return JetSpace(nvars, order)


class Jet:
    """Tensor-valued truncated Taylor polynomial.

    ``c`` has shape ``tensor_shape + (space.size,)``; ``order`` is the highest
    degree whose coefficients are exact.
    """

    __slots__ = ("space", "c", "order")
    __array_priority__ = 1000

    def __init__(self, space: JetSpace, c: np.ndarray, order: int | None = None):
        self.space = space
        self.order = space.order if order is None else order
        if self.order < 0:
            raise JetOrderError("jet differentiated beyond its order; seed with a higher order")
        if self.order < space.order:
            c = c * space.masks[max(self.order, 0)]
        self.c = c

    # -- construction -------------------------------------------------------

    @classmethod
    def constant(cls, space: JetSpace, value: Any, order: int | None = None) -> Jet:
        v = np.asarray(value, dtype=float)
        c = np.zeros(v.shape + (space.size,))
        c[..., 0] = v
        return cls(space, c, space.order if order is None else order)

    # -- views --------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.c.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        return self.c[..., 0]

    def __float__(self) -> float:
        return float(self.c[..., 0])

    def __getitem__(self, idx) -> Jet:
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Jet(self.space, self.c[idx + (Ellipsis, slice(None))], self.order)

    def __len__(self) -> int:
        return self.c.shape[0]

    def transpose(self, *axes: int) -> Jet:
        nd = len(self.shape)
        return Jet(self.space, self.c.transpose(*axes, nd), self.order)

    def sum(self, axis: int | tuple[int, ...]) -> Jet:
        return Jet(self.space, self.c.sum(axis=axis), self.order)

    def trace(self) -> Jet:
        return Jet(self.space, np.trace(self.c, axis1=0, axis2=1), self.order)

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, order={self.order}, value={self.value!r})"

    # -- differentiation ----------------------------------------------------

    def partial(self, v: int) -> Jet:
        sp = self.space
        c = self.c[..., sp.d_src[v]] * sp.d_fac[v]
        return Jet(sp, c, self.order - 1)

    def gradient(self, variables: Sequence[int]) -> Jet:
        """Stack partials along a new trailing tensor axis."""
        parts = [self.partial(v).c for v in variables]
        return Jet(self.space, np.stack(parts, axis=-2), self.order - 1)

    def derivative(self, multi: Sequence[int]) -> np.ndarray:
        """Raw mixed partial ``d^multi`` at the expansion point."""
        m = [0] * self.space.nvars
        for v in multi:
            m[v] += 1
        k = self.space.index[tuple(m)]
        return self.c[..., k] * float(np.prod([math.factorial(e) for e in m]))

    # -- arithmetic ---------------------------------------------------------

    def _coerce(self, other: Any) -> Jet | None:
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jets from different spaces")
            return other
        return None

    def __add__(self, other: Any) -> Jet:
        o = self._coerce(other)
        if o is None:
            c = self.c.copy() if np.ndim(other) == 0 else np.broadcast_to(
                self.c, np.broadcast_shapes(np.shape(other), self.shape) + (self.space.size,)
            ).copy()
            c[..., 0] += other
            return Jet(self.space, c, self.order)
        return Jet(self.space, self.c + o.c, min(self.order, o.order))

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(self.space, -self.c, self.order)

    def __sub__(self, other: Any) -> Jet:
        return self + (-other)

    def __rsub__(self, other: Any) -> Jet:
        return (-self) + other

    def __mul__(self, other: Any) -> Jet:
        o = self._coerce(other)
        if o is None:
            return Jet(self.space, self.c * np.expand_dims(np.asarray(other, float), -1), self.order)
        sp = self.space
        prod = self.c[..., sp.pair_i] * o.c[..., sp.pair_j]
        return Jet(sp, prod @ sp.pair_reduce, min(self.order, o.order))

    __rmul__ = __mul__

    def reciprocal(self) -> Jet:
        a = self.value
        k = np.arange(self.order + 1)
        derivs = [((-1.0) ** i) * math.factorial(i) / a ** (i + 1) for i in k]
        return _compose(self, derivs)

    def __truediv__(self, other: Any) -> Jet:
        o = self._coerce(other)
        if o is None:
            return self * (1.0 / np.asarray(other, float))
        return self * o.reciprocal()

    def __rtruediv__(self, other: Any) -> Jet:
        return self.reciprocal() * other

    def __pow__(self, p: Any) -> Jet:
        if isinstance(p, Jet):
            return exp(p * log(self))
        if float(p).is_integer() and abs(p) <= 16:
            n = int(p)
            base = self if n >= 0 else self.reciprocal()
            return _int_power(base, abs(n))
        a = self.value
        derivs = []
        coef = 1.0
        for i in range(self.order + 1):
            derivs.append(coef * a ** (p - i))
            coef *= p - i
        return _compose(self, derivs)

    def __rpow__(self, base: Any) -> Jet:
        return exp(self * math.log(base))


def _int_power(x: Jet, n: int) -> Jet:
    result = Jet.constant(x.space, np.ones(x.shape), x.order)
    while n:
        if n & 1:
            result = result * x
        n >>= 1
        if n:
            x = x * x
    return result


def _compose(x: Jet, derivs: Sequence[np.ndarray]) -> Jet:
    """f(x) from the derivatives ``f^(k)(x0)``, k = 0..x.order (Horner form)."""
    K = x.order
    h = Jet(x.space, x.c.copy(), K)
    h.c[..., 0] = 0.0
    r = Jet.constant(x.space, derivs[K] / math.factorial(K), K)
    for k in range(K - 1, -1, -1):
        r = r * h + derivs[k] / math.factorial(k)
    return r


# -- elementary functions (dispatch on Jet vs plain numbers) -----------------


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.value)
    return _compose(x, [e] * (x.order + 1))


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    a = x.value
    derivs = [np.log(a)]
    for i in range(1, x.order + 1):
        derivs.append(((-1.0) ** (i - 1)) * math.factorial(i - 1) / a**i)
    return _compose(x, derivs)


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cyc = [s, c, -s, -c]
    return _compose(x, [cyc[i % 4] for i in range(x.order + 1)])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.value), np.cos(x.value)
    cyc = [c, -s, -c, s]
    return _compose(x, [cyc[i % 4] for i in range(x.order + 1)])


def tan(x):
    if not isinstance(x, Jet):
        return np.tan(x)
    return sin(x) / cos(x)


def sinh(x):
    if not isinstance(x, Jet):
        return np.sinh(x)
    s, c = np.sinh(x.value), np.cosh(x.value)
    return _compose(x, [s if i % 2 == 0 else c for i in range(x.order + 1)])


def cosh(x):
    if not isinstance(x, Jet):
        return np.cosh(x)
    s, c = np.sinh(x.value), np.cosh(x.value)
    return _compose(x, [c if i % 2 == 0 else s for i in range(x.order + 1)])


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    return x**0.5


# -- construction helpers ----------------------------------------------------


def variables(point: Sequence[float], order: int, nvars: int | None = None,
              offset: int = 0) -> list[Jet]:
    """Seed jets ``x_i = point_i + e_{offset+i}``."""
    point = np.asarray(point, dtype=float)
    sp = jet_space(len(point) if nvars is None else nvars, order)
    out = []
    for i, p in enumerate(point):
        c = np.zeros(sp.size)
        c[0] = p
        if order > 0:
            e = [0] * sp.nvars
            e[offset + i] = 1
            c[sp.index[tuple(e)]] = 1.0
        out.append(Jet(sp, c, order))
    return out


def variable_index(x: Jet) -> int:
    """Index of the seed variable that ``x`` is (x must be a pure seed)."""
    sp = x.space
    lin = [sp.index[tuple(1 if j == v else 0 for j in range(sp.nvars))] for v in range(sp.nvars)]
    hits = [v for v, k in enumerate(lin) if x.c[..., k] == 1.0]
    if len(hits) != 1:
        raise ValueError("jet is not a seeded coordinate variable")
    return hits[0]


def lift(obj: Any, space: JetSpace, order: int | None = None) -> Jet:
    """Convert numbers / Jets / nested sequences thereof into one tensor Jet."""
    if isinstance(obj, Jet):
        return obj
    if isinstance(obj, (list, tuple)):
        parts = [lift(o, space, order) for o in obj]
        return stack(parts)
    arr = np.asarray(obj, dtype=float)
    return Jet.constant(space, arr, order)


def stack(parts: Sequence[Jet], axis: int = 0) -> Jet:
    sp = parts[0].space
    nd = len(parts[0].shape)
    if axis < 0:
        axis += nd + 1
    c = np.stack([p.c for p in parts], axis=axis)
    return Jet(sp, c, min(p.order for p in parts))


def _pair_letter(*subs: str) -> str:
    used = set("".join(subs))
    for ch in string.ascii_letters:
        if ch not in used:
            return ch
    raise ValueError("no free index letter")


def contract(subscripts: str, a: Any, b: Any) -> Jet:
    """``np.einsum`` over tensor indices with Taylor products on coefficients.

    Either operand may be a plain ndarray (treated as a constant).
    """
    lhs, out = subscripts.split("->")
    sa, sb = lhs.split(",")
    p = _pair_letter(subscripts)
    if isinstance(a, Jet) and isinstance(b, Jet):
        sp = a.space
        ap = a.c[..., sp.pair_i]
        bp = b.c[..., sp.pair_j]
        res = np.einsum(f"{sa}{p},{sb}{p}->{out}{p}", ap, bp)
        return Jet(sp, res @ sp.pair_reduce, min(a.order, b.order))
    if isinstance(a, Jet):
        res = np.einsum(f"{sa}{p},{sb}->{out}{p}", a.c, np.asarray(b, float))
        return Jet(a.space, res, a.order)
    if isinstance(b, Jet):
        res = np.einsum(f"{sa},{sb}{p}->{out}{p}", np.asarray(a, float), b.c)
        return Jet(b.space, res, b.order)
    return np.einsum(subscripts, a, b)


def inverse(a: Jet) -> Jet:
    """Matrix inverse of a square ``(n, n)`` jet via a truncated Neumann series."""
    g0inv = np.linalg.inv(a.value)
    h = Jet(a.space, a.c.copy(), a.order)
    h.c[..., 0] = 0.0
    n_mat = -contract("ab,bc->ac", g0inv, h)
    g0 = Jet.constant(a.space, g0inv, a.order)
    r = g0
    for _ in range(a.order):
        r = g0 + contract("ab,bc->ac", n_mat, r)
    return r
