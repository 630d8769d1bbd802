"""Built-in metrics and potentials used by the worked examples.

Off-diagonal metrics ``g = f(x, y) [[0, 1], [1, 0]]`` keep their conformal
function in ``metric.params["f"]`` so that symmetry routines can use it
directly.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import jet as J
from .geometry import Domain, Field, Metric

SQRT2 = math.sqrt(2.0)


def _dist_r(p):
    return math.hypot(p[0], p[1])


def _dist_x(p):
    return p[0]


def _dist_diag(p):
    return (p[0] + p[1]) / SQRT2


def euclidean(n: int = 2) -> Metric:
    eye = np.eye(n)
    dom = Domain((-2.0,) * n, (2.0,) * n)
    return Metric(Field("sym2tensor", n, lambda *q: eye, domain=dom), n, "riemannian",
                  name=f"E{n}", params={"family": f"E{n}"})


def offdiag(f: Callable, domain: Domain, name: str, **params) -> Metric:
    """Metric ``f(x, y) * [[0, 1], [1, 0]]``; Lorentzian wherever f != 0."""

    def g(x, y):
        fv = f(x, y)
        return [[0.0 * fv, fv], [fv, 0.0 * fv]]

    return Metric(Field.sym2(g, domain=domain, name=name), 2, "lorentzian", name=name,
                  params={"family": "offdiag", "f": f, **params})


def constant_curvature(k: float = 1.0) -> Metric:
    """f = k/(x+y)^2, Ricci scalar -4/k."""
    f = lambda x, y: k / (x + y) ** 2
    dom = Domain((0.2, 0.2), (2.0, 2.0), (("x+y=0", _dist_diag),))
    return offdiag(f, dom, f"constant_curvature(k={k:g})", k=k, curved_family="constant_curvature")


def flat_lorentzian() -> Metric:
    """f = x; flat, brought to diag(-1, 1) by u = y - x^2/4, v = y + x^2/4."""
    dom = Domain((0.5, -1.0), (2.0, 1.0), (("x=0", _dist_x),))
    return offdiag(lambda x, y: x, dom, "flat_lorentzian")


def no_kv() -> Metric:
    """f = -x^3 e^y (x + e^y): admits no Killing vectors."""
    f = lambda x, y: -x ** 3 * J.exp(y) * (x + J.exp(y))
    dom = Domain((0.5, -1.0), (2.0, 1.0),
                 (("x=0", _dist_x), ("x+e^y=0", lambda p: p[0] + math.exp(p[1]))))
    return offdiag(f, dom, "no_kv")


def toda_f(k1: float, k2: float, b1: float, b2: float, b3: float) -> Callable:
    def f(x, y):
        return (k1 * J.exp(SQRT2 * (b1 * x + (b2 - b1) * y))
                + k2 * J.exp((b1 * x + b3 * y) / SQRT2))
    return f


def toda(k1: float = 1.0, k2: float = 1.0, b1: float = 1.0, b2: float = 2.0, b3: float = 1.0) -> Metric:
    f = toda_f(k1, k2, b1, b2, b3)
    fnum = lambda p: f(p[0], p[1])
    dom = Domain((-1.0, -1.0), (1.0, 1.0), (("f=0", fnum),))
    return offdiag(f, dom, f"toda(k1={k1:g},k2={k2:g},b1={b1:g},b2={b2:g},b3={b3:g})",
                   k1=k1, k2=k2, b1=b1, b2=b2, b3=b3)


# potentials

# Sampling box for the central-type potentials: 0.5 away from r = 0 so that
# absolute residual thresholds stay meaningful.
_RIGHT_HALF = Domain((0.5, -1.5), (2.0, 1.5), (("r=0", _dist_r),))


def zero_potential(n: int = 2) -> Field:
    return Field("scalar", n, lambda *q: 0.0, name="0")


def inverse_square(k: float) -> Field:
    """V = k / r^2."""
    return Field.scalar(lambda x, y: k / (x * x + y * y), domain=_RIGHT_HALF, name=f"{k:g}/r^2")


def ermakov(F: Callable, c: float = 0.0) -> Field:
    """V = F(y/x)/r^2 + c/2 for a one-variable jet function F."""
    dom = Domain(_RIGHT_HALF.lo, _RIGHT_HALF.hi, (("r=0", _dist_r), ("x=0", _dist_x)))
    return Field.scalar(lambda x, y: F(y / x) / (x * x + y * y) + 0.5 * c, domain=dom, name="ermakov")


def sckv_potential(M: Callable) -> Field:
    """V = M(y/r^2)/r^4 for a one-variable jet function M."""
    def V(x, y):
        r2 = x * x + y * y
        return M(y / r2) / (r2 * r2)

    return Field.scalar(V, domain=_RIGHT_HALF, name="sckv")


def inverted_oscillator(lam: float) -> Field:
    """1D V = -lam^2 x^2 / 2."""
    return Field("scalar", 1, lambda x: -0.5 * lam * lam * x * x,
                 domain=Domain((-2.0,), (2.0,)), name="inverted_oscillator")


METRICS = {
    "E2": euclidean,
    "constant_curvature": constant_curvature,
    "flat_lorentzian": flat_lorentzian,
    "no_kv": no_kv,
    "toda": toda,
}
