"""Quadratic first integrals of energy-constrained conservative systems.

A candidate integral is stored in the generic form

    I(t, q, qdot) = K_ab(t, q) qdot^a qdot^b + K_a(t, q) qdot^a + K(t, q)

with the three coefficients as time-dependent fields.  The builders assemble
the coefficients of each integral family from its symmetry data and sample
the family's defining conditions; the result keeps the sampled residuals as
its certificate.

Families (``L_k`` are vectors whose symmetrized covariant derivatives are
conformal Killing tensors with associated vectors ``Y_k``):

* ``integral1`` (odd time powers)::

      K_ab = C0_ab - sum_k t^{2k}/(2k) L_k(a;b),  K_a = sum_k t^{2k-1} L_k a,
      K = sum_k t^{2k}/(2k) L_k . grad V + G

* ``integral2`` (even time powers)::

      K_ab = -sum_k t^{2k+1}/(2k+1) L_k(a;b),  K_a = sum_k t^{2k} L_k a,
      K = sum_k t^{2k+1}/(2k+1) L_k . grad V

* ``integral3``: ``e^{lam t} (-L_(a;b) qdot qdot + lam L.qdot + L.grad V)``
* ``J1 = C qdot qdot + G`` and ``J2 = L.qdot + c t`` (autonomous cases).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import jet as J
from .dynamics import quadrature
from .errors import (ConditionViolated, NonIntegrable, NonzeroPotential, OutOfDomain,
                     UncertifiedSymmetry, UnknownFamily, ZeroLambda)
from .geometry import Domain, Field, Frame, Metric, with_order
from .jet import Jet, contract
from .symmetry import (SymmetryObject, associated_vector_field, ckt, ckt_vector_jet,
                       sample_points, sym3, sym_cov_field, vector_times_metric)

DEFAULT_TOL = 1e-9
DEFAULT_SAMPLES = 200
MAX_ELL = 8
FAMILIES = ("integral1", "integral2", "integral3", "J1", "J2", "geodesic-P1", "geodesic-P2")


@dataclass(frozen=True)
class ConstrainedSystem:
    """Kinetic metric, potential and fixed energy level E0."""

    metric: Metric
    potential: Field
    energy: float = 0.0

    @property
    def n(self) -> int:
        return self.metric.n

    @property
    def domain(self) -> Domain:
        dom = self.metric.domain
        if dom is None:
            dom = Domain((-2.0,) * self.n, (2.0,) * self.n)
        return dom.merged(self.potential.domain) if self.potential.domain else dom

    def hamiltonian(self, q, qdot) -> float:
        g = self.metric.g.eval(q)
        v = np.asarray(qdot, float)
        return 0.5 * float(v @ g @ v) + self.potential.eval(q)

    def on_shell(self, q, qdot, tol: float = 1e-10) -> bool:
        return abs(self.hamiltonian(q, qdot) - self.energy) <= tol

    def is_geodesic(self, samples: int = 20) -> bool:
        pts = self.domain.sample(samples, seed=1)
        for p in pts:
            x = J.variables(p, 1)
            Vj = self.potential.jet(x)
            if np.any(np.abs(Vj.c) > 0.0):
                return False
        return True


@dataclass(frozen=True)
class QfiSpec:
    family: str
    system: ConstrainedSystem
    Kab: Field
    Ka: Field
    K: Field
    ell: int | None = None
    lam: float | None = None
    tensors: dict = field(default_factory=dict, compare=False)
    condition_residuals: dict = field(default_factory=dict, compare=False)
    tol: float = DEFAULT_TOL
    c: float = 0.0
    name: str = ""

    @property
    def certified(self) -> bool:
        return all(np.isfinite(v) and v <= self.tol for v in self.condition_residuals.values())

    @property
    def max_residual(self) -> float:
        return max(self.condition_residuals.values(), default=0.0)

    def coefficients(self, t: float, q) -> tuple[np.ndarray, np.ndarray, float]:
        """(K_ab, K_a, K) at (t, q)."""
        def run(order):
            args = J.variables(np.concatenate([[t], np.asarray(q, float)]), order)
            return (self.Kab.jet(args).value.copy(), self.Ka.jet(args).value.copy(),
                    float(self.K.jet(args).value))
        return with_order(run, 1)

    def evaluate(self, t: float, q, qdot) -> float:
        q = np.asarray(q, float)
        if not self.system.domain.contains(q):
            raise OutOfDomain(f"{q} lies outside the system's domain")
        A, B, C = self.coefficients(t, q)
        v = np.asarray(qdot, float)
        return float(v @ A @ v + B @ v + C)


def evaluate(spec: QfiSpec, t: float, state) -> float:
    """I(t, q, qdot) for ``state = (q, qdot)``."""
    q, qdot = state
    return spec.evaluate(t, q, qdot)


def _td_field(system: ConstrainedSystem, arity: str, fn: Callable, name: str) -> Field:
    return Field(arity, system.n, fn, domain=system.domain, time_dependent=True, name=name)


def _zero_td(system: ConstrainedSystem, arity: str) -> Field:
    shape = {"scalar": (), "covector": (system.n,), "sym2tensor": (system.n, system.n)}[arity]
    return _td_field(system, arity, lambda t, *q: np.zeros(shape), "0")


def _as_td(system: ConstrainedSystem, f: Field) -> Field:
    if f.time_dependent:
        return f
    return _td_field(system, f.arity, lambda t, *q: f.jet(q), f.name)


# PDE system and integrability conditions

@dataclass(frozen=True)
class PdeResiduals:
    ckt: float       # K_(ab;c) - X_(a g_bc)
    vector: float    # K_(a;b) - psi g_ab + K_ab,t
    gradient: float  # K_,a - 2 K_ab V^,b - 2 (V - E0) X_a + K_a,t
    time: float      # K_,t - K_a V^,a - 2 (V - E0) psi

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.ckt, self.vector, self.gradient, self.time)


class _Pieces:
    """Jets of the coefficients, the multiplier data and the system at (t, q)."""

    def __init__(self, system: ConstrainedSystem, Kab: Field, Ka: Field, K: Field, args: Sequence[Jet]):
        self.t, self.q = args[0], list(args[1:])
        self.tvar = J.variable_index(self.t)
        self.fr = fr = Frame(system.metric, self.q)
        self.Kab, self.Ka, self.K = Kab.jet(args), Ka.jet(args), K.jet(args)
        self.V = system.potential.jet(self.q)
        self.Vm = self.V - system.energy
        self.dV_up = fr.grad_up(self.V)
        self.X = ckt_vector_jet(fr, self.Kab)
        self.psi = (fr.trace(fr.cov(self.Ka)) + fr.trace(self.Kab.partial(self.tvar))) / fr.n


def _seed(t: float, point, order: int, extra: int = 0):
    base = np.concatenate([[t], np.asarray(point, float)])
    return J.variables(base, order, nvars=len(base) + extra)


def _norm(j: Jet) -> float:
    return float(np.linalg.norm(j.value))


def pde_residuals(system: ConstrainedSystem, Kab: Field, Ka: Field, K: Field, t: float, point) -> PdeResiduals:
    """Residual norms of the four PDEs equivalent to the multiplier condition."""
    Kab, Ka, K = (_as_td(system, f) for f in (Kab, Ka, K))

    def run(order):
        p = _Pieces(system, Kab, Ka, K, _seed(t, point, order))
        fr = p.fr
        r1 = sym3(fr.cov(p.Kab)) - vector_times_metric(p.X, fr.g)
        r2 = fr.sym_cov(p.Ka) - p.psi * fr.g + p.Kab.partial(p.tvar)
        r3 = (fr.d(p.K) - 2.0 * contract("ab,b->a", p.Kab, p.dV_up) - 2.0 * p.Vm * p.X
              + p.Ka.partial(p.tvar))
        r4 = p.K.partial(p.tvar) - contract("a,a->", p.Ka, p.dV_up) - 2.0 * p.Vm * p.psi
        return PdeResiduals(_norm(r1), _norm(r2), _norm(r3), _norm(r4))

    return with_order(run, 2)


def fi_integrability_residuals(system: ConstrainedSystem, Kab: Field, Ka: Field, K: Field, t: float,
                               point) -> tuple[float, float]:
    """Norms of the mixed-partial conditions K_,[at] = 0 and K_;[ab] = 0.

    The time-space condition carries the term ``2 psi V_,a`` that appears when
    the time equation is differentiated in space (it vanishes whenever
    psi = 0, which holds for every built-in family).
    """
    Kab, Ka, K = (_as_td(system, f) for f in (Kab, Ka, K))

    def run(order):
        p = _Pieces(system, Kab, Ka, K, _seed(t, point, order))
        fr, tv = p.fr, p.tvar
        KdV = contract("ab,b->a", p.Kab, p.dV_up)
        r1 = (p.Ka.partial(tv).partial(tv) - 2.0 * contract("ab,b->a", p.Kab.partial(tv), p.dV_up)
              + fr.d(contract("a,a->", p.Ka, p.dV_up))
              + 2.0 * p.Vm * (fr.d(p.psi) - p.X.partial(tv)) + 2.0 * p.psi * fr.d(p.V))
        w = 2.0 * KdV + 2.0 * p.Vm * p.X
        dw = fr.d(w)
        dKa = fr.d(p.Ka).partial(tv)
        r2 = 0.5 * (dw - dw.transpose(1, 0)) - 0.5 * (dKa - dKa.transpose(1, 0))
        return _norm(r1), _norm(r2)

    return with_order(run, 3)


def multiplier_identity_residual(spec: QfiSpec, t: float, q, qdot) -> float:
    """|dI/dt - (psi + X_c qdot^c)(g qdot qdot + 2(V - E0))| at an arbitrary state.

    dI/dt is the total derivative along the equations of motion, taken by
    differentiating the jet of I in (t, q, qdot).
    """
    system = spec.system
    n = system.n
    q = np.asarray(q, float)
    v = np.asarray(qdot, float)

    def run(order):
        args = J.variables(np.concatenate([[t], q, v]), order)
        targs, qd = args[: n + 1], args[n + 1:]
        p = _Pieces(system, spec.Kab, spec.Ka, spec.K, targs)
        qdj = J.stack(qd)
        I = contract("b,b->", contract("ab,a->b", p.Kab, qdj), qdj) + contract("a,a->", p.Ka, qdj) + p.K
        dI_dt = I.partial(0).value
        gamma = p.fr.gamma.value
        acc = -np.einsum("abc,b,c->a", gamma, v, v) - p.dV_up.value
        dI_dt = float(dI_dt + sum(v[a] * I.partial(1 + a).value + acc[a] * I.partial(1 + n + a).value
                                  for a in range(n)))
        g = p.fr.g.value
        mult = float(p.psi.value + p.X.value @ v) * float(v @ g @ v + 2.0 * p.Vm.value)
        return abs(dI_dt - mult)

    return with_order(run, 2)


# builders

def _sample(system: ConstrainedSystem, n: int, seed: int) -> np.ndarray:
    return sample_points(system.metric, system.domain, n, seed)


def _sup(fn: Callable[[int, np.ndarray], float], pts) -> float:
    worst = 0.0
    for p in pts:
        r = with_order(lambda order: fn(order, p), 2)
        if not np.isfinite(r):
            return float("inf")
        worst = max(worst, r)
    return worst


@dataclass(frozen=True)
class _VectorData:
    L: Field
    symcov: Field
    Y: Field


def _vector_data(system: ConstrainedSystem, L: Field, Y: Field | None, pts, sym_tol: float) -> _VectorData:
    metric = system.metric
    sc = sym_cov_field(metric, L)
    Y = Y if Y is not None else associated_vector_field(metric, sc)
    obj = ckt(metric, sc, Y, certify=False)
    worst = max(with_order(lambda order: obj.residual_at(p), 1) for p in pts)
    if not worst <= sym_tol:
        raise UncertifiedSymmetry(f"L_(a;b) of {L.name or 'vector'} is not a CKT (residual {worst:.2e})")
    return _VectorData(L, sc, Y)


def _require_ckt(obj: SymmetryObject | None, **kw) -> SymmetryObject | None:
    if obj is None:
        return None
    if obj.kind != "ckt2":
        raise UncertifiedSymmetry(f"{obj.name!r} is not a second-order tensor")
    if obj.certificate is None:
        obj = obj.certify(**kw)
    if not obj.certified:
        raise UncertifiedSymmetry(f"{obj.name!r} failed certification ({obj.certificate.max_residual:.2e})")
    return obj


def _vector_condition(system: ConstrainedSystem, d: _VectorData, extra: Callable | None) -> Callable:
    """(L.grad V)_,a + 2 L_(a;b) V^,b + 2 (V - E0) Y_a [+ extra(q)]."""

    def fn(order, p):
        q = J.variables(p, order)
        fr = Frame(system.metric, q)
        V = system.potential.jet(q)
        dVu = fr.grad_up(V)
        L = d.L.jet(q)
        r = (fr.d(contract("a,a->", L, fr.d(V))) + 2.0 * contract("ab,b->a", fr.sym_cov(L), dVu)
             + 2.0 * (V - system.energy) * d.Y.jet(q))
        if extra is not None:
            r = r + extra(q)
        return _norm(r)

    return fn


def _finish(family, system, Kab, Ka, K, residuals, tol, strict, **kw) -> QfiSpec:
    spec = QfiSpec(family, system, Kab, Ka, K, condition_residuals=residuals, tol=tol, **kw)
    if strict and not spec.certified:
        bad = {k: v for k, v in residuals.items() if not v <= tol}
        raise ConditionViolated(f"{family}: conditions violated {bad}", residuals)
    return spec


def _check_ell(ell: int, count: int, expected: int) -> None:
    if ell < 0 or ell > MAX_ELL:
        raise ValueError(f"ell must lie in [0, {MAX_ELL}]")
    if count != expected:
        raise ValueError(f"expected {expected} vectors for ell={ell}, got {count}")


def build_integral1(system: ConstrainedSystem, C0: SymmetryObject | None, Ls: Sequence[Field], G: Field,
                    ell: int, Ys: Sequence[Field | None] | None = None, tol: float = DEFAULT_TOL,
                    samples: int = DEFAULT_SAMPLES, seed: int = 0, strict: bool = True,
                    sym_tol: float = 1e-10, family: str = "integral1") -> QfiSpec:
    """Odd-time-power family.  ``Ls[k-1]`` is the vector multiplying t^{2k-1}."""
    _check_ell(ell, len(Ls), ell)
    pts = _sample(system, samples, seed)
    C0 = _require_ckt(C0, n=samples, seed=seed)
    Ys = list(Ys) if Ys is not None else [None] * ell
    data = [_vector_data(system, L, Y, pts, sym_tol) for L, Y in zip(Ls, Ys)]
    metric, pot, E0 = system.metric, system.potential, system.energy

    def Kab(t, *q):
        out = C0.field.jet(q) if C0 is not None else 0.0 * metric.g.jet(q)
        for k, d in enumerate(data, start=1):
            out = out - (t ** (2 * k) / (2 * k)) * d.symcov.jet(q)
        return out

    def Ka(t, *q):
        out = J.lift(np.zeros(system.n), t.space)
        for k, d in enumerate(data, start=1):
            out = out + t ** (2 * k - 1) * d.L.jet(q)
        return out

    def K(t, *q):
        out = G.jet(q)
        if data:
            fr = Frame(metric, q)
            dV = fr.d(pot.jet(q))
            for k, d in enumerate(data, start=1):
                out = out + (t ** (2 * k) / (2 * k)) * contract("a,a->", d.L.jet(q), dV)
        return out

    residuals = {}
    for k, d in enumerate(data, start=1):
        extra = None
        if k < ell:
            nxt, coef = data[k].L, 2.0 * k * (2 * k + 1)
            extra = lambda q, nxt=nxt, coef=coef: coef * nxt.jet(q)
        residuals[f"vector[{2 * k - 1}]"] = _sup(_vector_condition(system, d, extra), pts)

    def g_condition(order, p):
        q = J.variables(p, order)
        w = g_rhs_jet(system, C0, data[0].L if data else None, q)
        return _norm(Frame(metric, q).d(G.jet(q)) - w)

    residuals["G"] = _sup(g_condition, pts)
    return _finish(family, system, _td_field(system, "sym2tensor", Kab, "K_ab"),
                   _td_field(system, "covector", Ka, "K_a"), _td_field(system, "scalar", K, "K"),
                   residuals, tol, strict, ell=ell,
                   tensors={"C0": C0, "Ls": [d.L for d in data], "Ys": [d.Y for d in data], "G": G})


def g_rhs_jet(system: ConstrainedSystem, C0: SymmetryObject | None, L1: Field | None, q) -> Jet:
    """2 C0_ab V^,b + 2 (V - E0) X0_a - L1_a: the gradient G must have."""
    fr = Frame(system.metric, q)
    V = system.potential.jet(q)
    out = J.lift(np.zeros(system.n), q[0].space)
    if C0 is not None:
        X0 = C0.associated_vector.jet(q) if C0.associated_vector else ckt_vector_jet(fr, C0.field.jet(q))
        out = out + 2.0 * contract("ab,b->a", C0.field.jet(q), fr.grad_up(V)) + 2.0 * (V - system.energy) * X0
    if L1 is not None:
        out = out - L1.jet(q)
    return out


def g_rhs_field(system: ConstrainedSystem, C0: SymmetryObject | None, Ls: Sequence[Field] = ()) -> Field:
    L1 = Ls[0] if Ls else None
    return Field("covector", system.n, lambda *q: g_rhs_jet(system, C0, L1, q),
                 domain=system.domain, name="grad G")


def build_integral2(system: ConstrainedSystem, Ls: Sequence[Field], ell: int,
                    Ys: Sequence[Field | None] | None = None, tol: float = DEFAULT_TOL,
                    samples: int = DEFAULT_SAMPLES, seed: int = 0, strict: bool = True,
                    sym_tol: float = 1e-10, family: str = "integral2") -> QfiSpec:
    """Even-time-power family.  ``Ls[k]`` is the vector multiplying t^{2k}, k = 0..ell."""
    _check_ell(ell, len(Ls), ell + 1)
    pts = _sample(system, samples, seed)
    Ys = list(Ys) if Ys is not None else [None] * (ell + 1)
    data = [_vector_data(system, L, Y, pts, sym_tol) for L, Y in zip(Ls, Ys)]
    metric, pot = system.metric, system.potential

    def Kab(t, *q):
        out = 0.0 * metric.g.jet(q)
        for k, d in enumerate(data):
            out = out - (t ** (2 * k + 1) / (2 * k + 1)) * d.symcov.jet(q)
        return out

    def Ka(t, *q):
        out = J.lift(np.zeros(system.n), t.space)
        for k, d in enumerate(data):
            out = out + t ** (2 * k) * d.L.jet(q)
        return out

    def K(t, *q):
        fr = Frame(metric, q)
        dV = fr.d(pot.jet(q))
        out = 0.0 * t
        for k, d in enumerate(data):
            out = out + (t ** (2 * k + 1) / (2 * k + 1)) * contract("a,a->", d.L.jet(q), dV)
        return out

    residuals = {}
    for k, d in enumerate(data):
        extra = None
        if k < ell:
            nxt, coef = data[k + 1].L, 2.0 * (k + 1) * (2 * k + 1)
            extra = lambda q, nxt=nxt, coef=coef: coef * nxt.jet(q)
        residuals[f"vector[{2 * k}]"] = _sup(_vector_condition(system, d, extra), pts)
    return _finish(family, system, _td_field(system, "sym2tensor", Kab, "K_ab"),
                   _td_field(system, "covector", Ka, "K_a"), _td_field(system, "scalar", K, "K"),
                   residuals, tol, strict, ell=ell,
                   tensors={"Ls": [d.L for d in data], "Ys": [d.Y for d in data]})


def build_integral3(system: ConstrainedSystem, lam: float, L: Field, Y: Field | None = None,
                    tol: float = DEFAULT_TOL, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                    strict: bool = True, sym_tol: float = 1e-10, family: str = "integral3") -> QfiSpec:
    """Exponential family e^{lam t}(-L_(a;b) qdot qdot + lam L.qdot + L.grad V)."""
    if lam == 0.0 or not math.isfinite(lam):
        raise ZeroLambda("integral3 needs a finite nonzero lambda")
    pts = _sample(system, samples, seed)
    d = _vector_data(system, L, Y, pts, sym_tol)
    metric, pot = system.metric, system.potential

    def Kab(t, *q):
        return -J.exp(lam * t) * d.symcov.jet(q)

    def Ka(t, *q):
        return (lam * J.exp(lam * t)) * d.L.jet(q)

    def K(t, *q):
        fr = Frame(metric, q)
        return J.exp(lam * t) * contract("a,a->", d.L.jet(q), fr.d(pot.jet(q)))

    extra = lambda q: (lam * lam) * d.L.jet(q)
    residuals = {"vector": _sup(_vector_condition(system, d, extra), pts)}
    return _finish(family, system, _td_field(system, "sym2tensor", Kab, "K_ab"),
                   _td_field(system, "covector", Ka, "K_a"), _td_field(system, "scalar", K, "K"),
                   residuals, tol, strict, lam=lam, tensors={"L": L, "Y": d.Y})


def build_J1(system: ConstrainedSystem, C: SymmetryObject, G: Field, **kw) -> QfiSpec:
    """Autonomous QFI C_ab qdot qdot + G."""
    return build_integral1(system, C, [], G, 0, family="J1", **kw)


def build_J2(system: ConstrainedSystem, L: SymmetryObject, tol: float = DEFAULT_TOL,
             samples: int = DEFAULT_SAMPLES, seed: int = 0, strict: bool = True) -> QfiSpec:
    """Linear integral L.qdot + c t for a conformal Killing vector L.

    ``c`` is the sampled mean of L.grad V + 2 (V - E0) psi; its sampled
    standard deviation is the certificate.  The integral is conserved on the
    energy surface.
    """
    if L.kind != "ckv":
        raise UncertifiedSymmetry("J2 needs a conformal Killing vector")
    if L.certificate is None:
        L = L.certify(n=samples, seed=seed)
    if not L.certified:
        raise UncertifiedSymmetry(f"{L.name!r} failed certification")
    metric, pot, E0 = system.metric, system.potential, system.energy
    pts = _sample(system, samples, seed)

    def source(p):
        def run(order):
            q = J.variables(p, order)
            fr = Frame(metric, q)
            V = pot.jet(q)
            val = contract("a,a->", L.field.jet(q), fr.d(V)) + 2.0 * (V - E0) * L.conformal_factor.jet(q)
            return float(val.value)
        return with_order(run, 1)

    vals = np.array([source(p) for p in pts])
    c = float(np.mean(vals))
    spread = float(np.std(vals))
    Kab = _zero_td(system, "sym2tensor")
    Ka = _td_field(system, "covector", lambda t, *q: L.field.jet(q), "L")
    K = _td_field(system, "scalar", lambda t, *q: c * t, "c t")
    return _finish("J2", system, Kab, Ka, K, {"c_spread": spread}, tol, strict, ell=0, c=c,
                   tensors={"L": L})


def hamiltonian(system: ConstrainedSystem) -> QfiSpec:
    """H - E0 as a J1 instance with C = g/2 and G = V - E0."""
    metric = system.metric
    half_g = Field("sym2tensor", system.n, lambda *q: 0.5 * metric.g.jet(q), domain=metric.domain, name="g/2")
    zero_u = Field("covector", system.n, lambda *q: np.zeros(system.n), name="0")
    C = ckt(metric, half_g, zero_u, name="g/2")
    G = Field("scalar", system.n, lambda *q: system.potential.jet(q) - system.energy,
              domain=system.domain, name="V-E0")
    return build_J1(system, C, G)


def geodesic_specialize(system: ConstrainedSystem, family: str, data: dict, **kw) -> QfiSpec:
    """Integrals of constrained geodesics (V = 0).

    ``family`` is one of:

    * ``"C"``: ``data = {"C": ckt}`` gives C_ab qdot qdot (+ G when E0 != 0,
      ``data["G"]`` required then);
    * ``"G"``: ``data = {"G": scalar}`` gives
      (t^2/2) G_;ab qdot qdot - t G_,a qdot^a + G;
    * ``"L"``: ``data = {"L": vector}`` gives -t L_(a;b) qdot qdot + L.qdot;
    * ``"integral1" | "integral2" | "integral3"``: keyword data forwarded to
      the matching builder.

    The conditions of each builder evaluated at V = 0 are exactly the
    geodesic ones, so E0 = 0 accepts any conformal Killing tensors and
    E0 != 0 forces the relations between associated vectors and vectors.
    """
    if not system.is_geodesic():
        raise NonzeroPotential("geodesic specialization needs V = 0")
    tag = "geodesic-P1" if system.energy == 0.0 else "geodesic-P2"
    if family == "C":
        G = data.get("G")
        if G is None:
            G = Field("scalar", system.n, lambda *q: 0.0, name="0")
        return build_integral1(system, data["C"], [], G, 0, family=tag, **kw)
    if family == "G":
        G = data["G"]
        mgrad = Field("covector", system.n, lambda *q: -Frame(system.metric, q).d(G.jet(q)),
                      domain=G.domain, name=f"-grad {G.name}")
        return build_integral1(system, None, [mgrad], G, 1, family=tag, **kw)
    if family == "L":
        return build_integral2(system, [data["L"]], 0, family=tag, **kw)
    if family == "integral1":
        return build_integral1(system, data.get("C0"), data.get("Ls", []), data["G"], data["ell"],
                               family=tag, **kw)
    if family == "integral2":
        return build_integral2(system, data["Ls"], data["ell"], family=tag, **kw)
    if family == "integral3":
        return build_integral3(system, data["lam"], data["L"], family=tag, **kw)
    raise UnknownFamily(f"unknown geodesic family {family!r}")


def qfi_fields(spec: QfiSpec) -> tuple[Field, Field, Field]:
    return spec.Kab, spec.Ka, spec.K


# potential function G

def check_G_integrability(system: ConstrainedSystem, C0: SymmetryObject | None, Ls: Sequence[Field],
                          point) -> float:
    """Norm of the antisymmetrized gradient of the required dG (zero iff G exists locally)."""
    rhs = g_rhs_field(system, C0, Ls)

    def run(order):
        q = J.variables(point, order)
        dw = rhs.jet(q).gradient(list(range(system.n)))
        return _norm(dw - dw.transpose(1, 0))

    return with_order(run, 1)


def bertrand_darboux_2d1(metric: Metric, A1: Callable, A2: Callable, point) -> float:
    """The second-order PDE for A1(y), A2(x) making G integrable on f [[0,1],[1,0]]::

        f_yy A1 - f_xx A2 + 3/2 (f_y A1' - f_x A2') + f/2 (A1'' - A2'')
    """
    f = metric.params["f"]
    x, y = J.variables(point, 2)
    fj = f(x, y)
    a1, a2 = J.lift(A1(y), x.space), J.lift(A2(x), x.space)
    fx, fy = fj.partial(0), fj.partial(1)
    a1p, a2p = a1.partial(1), a2.partial(0)
    val = (fy.partial(1) * a1 - fx.partial(0) * a2 + 1.5 * (fy * a1p - fx * a2p)
           + 0.5 * fj * (a1p.partial(1) - a2p.partial(0)))
    return float(val.value)


def no_kv_condition(A1: Callable, point) -> float:
    """The same PDE specialised to f = -x^3 e^y (x + e^y) and A2 = 0::

        (A1 + 3/2 A1' + 1/2 A1'') x + e^y (4 A1 + 3 A1' + 1/2 A1'')
    """
    x, y = J.variables(point, 2)
    a = J.lift(A1(y), x.space)
    a1, a2 = a.partial(1), a.partial(1).partial(1)
    val = (a + 1.5 * a1 + 0.5 * a2) * x + J.exp(y) * (4.0 * a + 3.0 * a1 + 0.5 * a2)
    return float(val.value)


def solve_G_by_quadrature(system: ConstrainedSystem, rhs: Field, base, target, tol: float = 1e-9) -> float:
    """G(target) - G(base) as a line integral of ``rhs`` along axis-parallel paths.

    Both coordinate orderings are integrated; disagreement beyond ``tol``
    (relative to the magnitude) raises NonIntegrable.
    """
    base = np.asarray(base, float)
    target = np.asarray(target, float)
    n = len(base)

    def path_integral(axes):
        total, cur = 0.0, base.copy()
        for ax in axes:
            a, b = cur[ax], target[ax]
            if a != b:
                def integrand(s, ax=ax, cur=cur.copy()):
                    p = cur.copy()
                    p[ax] = s
                    return float(rhs.eval(p)[ax])
                total += quadrature(integrand, (a, b), tol=tol * 1e-2)
            cur[ax] = b
        return total

    forward = path_integral(range(n))
    backward = path_integral(reversed(range(n)))
    if abs(forward - backward) > tol * max(1.0, abs(forward)):
        raise NonIntegrable(f"path dependence {abs(forward - backward):.3e}")
    return 0.5 * (forward + backward)
