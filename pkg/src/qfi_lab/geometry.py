"""Differentiable fields, metrics and pointwise Riemannian geometry.

Fields are plain Python callables of the coordinates.  They are evaluated on
:class:`~qfi_lab.jet.Jet` seeds, which makes every partial derivative exact,
including derivatives of derived quantities such as Christoffel symbols.
Covariant components are stored throughout; ``T[a, b, c]`` for a covariant
derivative means ``T_{ab;c}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import qmc

from .errors import DimensionMismatch, SingularMetric
from .jet import Jet, JetOrderError, contract, inverse, lift, variable_index, variables

ARITIES = ("scalar", "covector", "sym2tensor")

# Jet order used by pointwise evaluators.  Derived fields (connection-based
# vectors and tensors) consume one order per nested derivative, so the
# headroom is deliberate.
EVAL_ORDER = 4
MAX_ORDER = 8


def with_order(fn: Callable[[int], Any], start: int = 1) -> Any:
    """Call ``fn(order)`` with the smallest order in [start, MAX_ORDER] that suffices."""
    for order in range(start, MAX_ORDER + 1):
        try:
            return fn(order)
        except JetOrderError:
            continue
    raise JetOrderError(f"derivative depth exceeds {MAX_ORDER}")

Locus = tuple[str, Callable[[np.ndarray], float]]


@dataclass(frozen=True)
class Domain:
    """Validity region: a sampling box plus excluded loci.

    Each locus is ``(name, distance)`` where ``distance(point)`` is zero on
    the excluded set.  Points outside the box are still valid; the box only
    drives sampling.
    """

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    loci: tuple[Locus, ...] = ()

    def distance_to_loci(self, point) -> float:
        p = np.asarray(point, dtype=float)
        if not self.loci:
            return np.inf
        return min(abs(float(fn(p))) for _, fn in self.loci)

    def contains(self, point, margin: float = 0.0) -> bool:
        p = np.asarray(point, dtype=float)
        if not np.all(np.isfinite(p)):
            return False
        return self.distance_to_loci(p) > margin

    def sample(self, n: int, seed: int = 0, margin: float = 1e-2) -> np.ndarray:
        """``n`` scrambled-Halton points in the box, at least ``margin`` from every locus."""
        lo = np.asarray(self.lo, float)
        hi = np.asarray(self.hi, float)
        sampler = qmc.Halton(d=len(lo), scramble=True, seed=seed)
        out: list[np.ndarray] = []
        for _ in range(100):
            pts = qmc.scale(sampler.random(2 * n), lo, hi)
            out.extend(p for p in pts if self.contains(p, margin))
            if len(out) >= n:
                return np.array(out[:n])
        raise ValueError("could not draw enough in-domain sample points")

    def merged(self, other: Domain | None) -> Domain:
        if other is None:
            return self
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        return Domain(lo, hi, self.loci + tuple(l for l in other.loci if l not in self.loci))


def plane(lo: float = -2.0, hi: float = 2.0, loci: tuple[Locus, ...] = ()) -> Domain:
    return Domain((lo, lo), (hi, hi), loci)


@dataclass(frozen=True)
class Field:
    """Scalar, covector or symmetric 2-tensor field on R^n.

    ``fn`` receives the coordinates (preceded by ``t`` when
    ``time_dependent``) as floats or jets and returns a number, a length-n
    sequence, or an n x n nested sequence.  ``fn`` must only use arithmetic
    and the functions from :mod:`qfi_lab.jet`.
    """

    arity: str
    dim: int
    fn: Callable[..., Any]
    domain: Domain | None = None
    time_dependent: bool = False
    name: str = ""

    def __post_init__(self):
        if self.arity not in ARITIES:
            raise ValueError(f"unknown arity {self.arity!r}")

    @property
    def shape(self) -> tuple[int, ...]:
        return {"scalar": (), "covector": (self.dim,), "sym2tensor": (self.dim, self.dim)}[self.arity]

    def jet(self, args: Sequence[Jet]) -> Jet:
        out = lift(self.fn(*args), args[0].space)
        if out.shape != self.shape:
            out = Jet(out.space, np.broadcast_to(out.c, self.shape + (out.space.size,)).copy(), out.order)
        return out

    def _args(self, point, t, order):
        p = np.asarray(point, dtype=float)
        if len(p) != self.dim:
            raise DimensionMismatch(f"point has {len(p)} coordinates, field dim is {self.dim}")
        if self.time_dependent:
            return variables(np.concatenate([[0.0 if t is None else t], p]), order)
        return variables(p, order)

    def eval(self, point, t: float | None = None):
        val = self.jet(self._args(point, t, EVAL_ORDER)).value
        return float(val) if self.arity == "scalar" else np.array(val)

    def partial(self, point, index: int, t: float | None = None):
        """First partial wrt argument ``index`` (``t`` is argument 0 if time-dependent)."""
        val = self.jet(self._args(point, t, EVAL_ORDER)).partial(index).value
        return float(val) if self.arity == "scalar" else np.array(val)

    def partial2(self, point, i: int, j: int, t: float | None = None):
        val = self.jet(self._args(point, t, EVAL_ORDER)).partial(i).partial(j).value
        return float(val) if self.arity == "scalar" else np.array(val)

    # convenience constructors

    @classmethod
    def scalar(cls, fn, dim: int = 2, **kw) -> Field:
        return cls("scalar", dim, fn, **kw)

    @classmethod
    def covector(cls, fn, dim: int = 2, **kw) -> Field:
        return cls("covector", dim, fn, **kw)

    @classmethod
    def sym2(cls, fn, dim: int = 2, **kw) -> Field:
        return cls("sym2tensor", dim, fn, **kw)

    @classmethod
    def zero(cls, arity: str = "scalar", dim: int = 2, time_dependent: bool = False) -> Field:
        shape = {"scalar": (), "covector": (dim,), "sym2tensor": (dim, dim)}[arity]
        return cls(arity, dim, lambda *args: np.zeros(shape), time_dependent=time_dependent, name="0")


@dataclass(frozen=True)
class Metric:
    """Kinetic metric: a sym2tensor field plus dimension and signature hint."""

    g: Field
    n: int
    signature_hint: str = "unknown"
    name: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.g.arity != "sym2tensor" or self.g.dim != self.n:
            raise DimensionMismatch("metric must be an n x n sym2tensor field")

    @property
    def domain(self) -> Domain | None:
        return self.g.domain

    def value(self, point) -> np.ndarray:
        return self.g.eval(point)


@dataclass(frozen=True)
class ConnectionEval:
    point: np.ndarray
    gamma: np.ndarray  # gamma[a, b, c] = Gamma^a_{bc}
    dgamma: np.ndarray  # dgamma[a, b, c, d] = d_d Gamma^a_{bc}


def _check_det(g0: np.ndarray, point=None) -> None:
    scale = max(1.0, float(np.max(np.abs(g0)))) ** g0.shape[0]
    det = np.linalg.det(g0)
    if not np.isfinite(det) or abs(det) <= 1e-14 * scale:
        raise SingularMetric(f"metric is singular (det={det:.3e}) at {point}")


class Frame:
    """Metric, inverse and connection at a jet-valued point.

    ``q`` are seeded coordinate jets; they may live in a larger jet space
    (e.g. together with time and velocities).  All outputs are jets in the
    same space, so their partials are exact.
    """

    def __init__(self, metric: Metric, q: Sequence[Jet]):
        if len(q) != metric.n:
            raise DimensionMismatch(f"expected {metric.n} coordinates, got {len(q)}")
        self.metric = metric
        self.n = metric.n
        self.q = list(q)
        self.qvars = [variable_index(x) for x in q]
        self.g = metric.g.jet(self.q)
        _check_det(self.g.value, [float(x.value) for x in q])
        self.ginv = inverse(self.g)
        dg = self.g.gradient(self.qvars)  # dg[b, c, d] = g_bc,d
        low = 0.5 * (dg + dg.transpose(0, 2, 1) - dg.transpose(2, 0, 1))  # [d, b, c]
        self.gamma = contract("ad,dbc->abc", self.ginv, low)

    def d(self, T: Jet) -> Jet:
        """Partial derivatives appended as the last index."""
        return T.gradient(self.qvars)

    def cov(self, T: Jet) -> Jet:
        """Covariant derivative of a covariant tensor of rank 0, 1 or 2."""
        dT = self.d(T)
        rank = len(T.shape)
        if rank == 0:
            return dT
        if rank == 1:
            return dT - contract("cab,c->ab", self.gamma, T)
        if rank == 2:
            return (dT - contract("dac,db->abc", self.gamma, T)
                    - contract("dbc,ad->abc", self.gamma, T))
        raise DimensionMismatch("covariant derivative implemented up to rank 2")

    def sym_cov(self, L: Jet) -> Jet:
        """L_(a;b)."""
        dL = self.d(L)
        return 0.5 * (dL + dL.transpose(1, 0)) - contract("cab,c->ab", self.gamma, L)

    def raise_index(self, v: Jet) -> Jet:
        return contract("ab,b->a", self.ginv, v)

    def trace(self, T: Jet) -> Jet:
        return contract("ab,ab->", self.ginv, T)

    def grad_up(self, s: Jet) -> Jet:
        """Contravariant gradient s^{,a}."""
        return self.raise_index(self.d(s))


def frame_at(metric: Metric, point, order: int, nvars: int | None = None, offset: int = 0) -> Frame:
    return Frame(metric, variables(point, order, nvars=nvars, offset=offset))


def christoffel(metric: Metric, point) -> ConnectionEval:
    """Christoffel symbols and their first partials at ``point``."""
    fr = frame_at(metric, point, EVAL_ORDER)
    return ConnectionEval(np.asarray(point, float), fr.gamma.value.copy(), fr.d(fr.gamma).value.copy())


def sym_cov_derivative(metric: Metric, L: Field, point) -> np.ndarray:
    fr = frame_at(metric, point, EVAL_ORDER)
    return fr.sym_cov(L.jet(fr.q)).value.copy()


def cov_derivative_tensor2(metric: Metric, C: Field, point) -> np.ndarray:
    """``out[a, b, c] = C_{ab;c}``."""
    fr = frame_at(metric, point, EVAL_ORDER)
    return fr.cov(C.jet(fr.q)).value.copy()


def riemann_jet(fr: Frame) -> Jet:
    """R^a_{bcd} = d_c G^a_db - d_d G^a_cb + G^a_ce G^e_db - G^a_de G^e_cb."""
    dG = fr.d(fr.gamma)  # [a, b, c, d] = d_d Gamma^a_bc
    G = fr.gamma
    term1 = dG.transpose(0, 2, 3, 1)  # [a, b, c, d] <- d_c Gamma^a_{db}
    term2 = dG.transpose(0, 2, 1, 3)  # [a, b, c, d] <- d_d Gamma^a_{cb}
    quad1 = contract("ace,edb->abcd", G, G)
    quad2 = contract("ade,ecb->abcd", G, G)
    return term1 - term2 + quad1 - quad2


def ricci_scalar_2d_jet(fr: Frame) -> Jet:
    if fr.n != 2:
        raise DimensionMismatch("ricci_scalar_2d needs a 2-dimensional metric")
    R = riemann_jet(fr)
    R1212 = contract("a,abcd->bcd", fr.g[0], R)[1, 0, 1]
    g = fr.g
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    return 2.0 * R1212 / det


def ricci_scalar_2d(metric: Metric, point) -> float:
    """Ricci scalar of a 2-metric with R_{1212} = (R/2)(g11 g22 - g12 g21).

    One sign convention serves every metric: with it the catalog family
    f = k/(x + y)^2 has R = -4/k.
    """
    if metric.n != 2:
        raise DimensionMismatch("ricci_scalar_2d needs a 2-dimensional metric")
    fr = frame_at(metric, point, EVAL_ORDER)
    return float(ricci_scalar_2d_jet(fr).value)
