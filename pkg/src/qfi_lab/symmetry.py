"""Conformal Killing vectors and second-order conformal Killing tensors.

Every check is a pointwise residual.  An object counts as certified when the
largest residual over a low-discrepancy sample of its domain stays below a
threshold (default: 200 points, 1e-10).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import jet as J
from .errors import MixedMetric, UnknownFamily
from .geometry import EVAL_ORDER, Domain, Field, Frame, Metric, frame_at
from .jet import Jet, contract

DEFAULT_SAMPLES = 200
DEFAULT_TOL = 1e-10


# jet-level kernels

def ckv_factor_jet(fr: Frame, L: Jet) -> Jet:
    """psi = L^a_{;a} / n."""
    return fr.trace(fr.sym_cov(L)) / fr.n


def ckv_residual_jet(fr: Frame, L: Jet) -> tuple[Jet, Jet]:
    psi = ckv_factor_jet(fr, L)
    return psi, fr.sym_cov(L) - psi * fr.g


def sym3(T: Jet) -> Jet:
    """Full symmetrization over three indices."""
    perms = list(itertools.permutations(range(3)))
    out = T.transpose(*perms[0])
    for p in perms[1:]:
        out = out + T.transpose(*p)
    return out / len(perms)


def ckt_vector_jet(fr: Frame, U: Jet) -> Jet:
    """u_a = (U_{;a} + 2 U^b_{a;b}) / (n + 2)."""
    dU = fr.cov(U)
    div = contract("bc,cab->a", fr.ginv, dU)
    return (fr.d(fr.trace(U)) + 2.0 * div) / (fr.n + 2)


def vector_times_metric(u: Jet, g: Jet) -> Jet:
    """u_(a g_bc)."""
    return sym3(contract("a,bc->abc", u, g))


def ckt_residual_jet(fr: Frame, U: Jet, u: Jet | None = None) -> Jet:
    """U_(ab;c) - u_(a g_bc); ``u`` defaults to the associated vector of U."""
    if u is None:
        u = ckt_vector_jet(fr, U)
    return sym3(fr.cov(U)) - vector_times_metric(u, fr.g)


def curl_jet(fr: Frame, u: Jet) -> Jet:
    du = fr.d(u)
    return du - du.transpose(1, 0)


# pointwise evaluators

def _norm(a) -> float:
    return float(np.linalg.norm(np.asarray(a)))


def ckv_residual(metric: Metric, L: Field, point) -> tuple[float, np.ndarray]:
    """(psi, L_(a;b) - psi g_ab) at ``point``."""
    fr = frame_at(metric, point, EVAL_ORDER)
    psi, res = ckv_residual_jet(fr, L.jet(fr.q))
    return float(psi.value), res.value.copy()


def ckt_associated_vector(metric: Metric, U: Field, point) -> np.ndarray:
    fr = frame_at(metric, point, EVAL_ORDER)
    return ckt_vector_jet(fr, U.jet(fr.q)).value.copy()


def ckt_residual(metric: Metric, U: Field, point, u: Field | None = None) -> float:
    """Frobenius norm of U_(ab;c) - u_(a g_bc)."""
    fr = frame_at(metric, point, EVAL_ORDER)
    uj = None if u is None else u.jet(fr.q)
    return _norm(ckt_residual_jet(fr, U.jet(fr.q), uj).value)


# derived fields

def _derived(metric: Metric, arity: str, fn: Callable[[Frame], Jet], domain, name: str) -> Field:
    return Field(arity, metric.n, lambda *q: fn(Frame(metric, q)), domain=domain, name=name)


def conformal_factor_field(metric: Metric, L: Field) -> Field:
    return _derived(metric, "scalar", lambda fr: ckv_factor_jet(fr, L.jet(fr.q)),
                    L.domain or metric.domain, f"psi[{L.name}]")


def associated_vector_field(metric: Metric, U: Field) -> Field:
    return _derived(metric, "covector", lambda fr: ckt_vector_jet(fr, U.jet(fr.q)),
                    U.domain or metric.domain, f"u[{U.name}]")


def sym_cov_field(metric: Metric, L: Field) -> Field:
    """The reducible tensor L_(a;b) as a field."""
    return _derived(metric, "sym2tensor", lambda fr: fr.sym_cov(L.jet(fr.q)),
                    L.domain or metric.domain, f"sym_cov[{L.name}]")


def covariant_hessian_field(metric: Metric, s: Field) -> Field:
    """s_{;ab}."""
    return _derived(metric, "sym2tensor", lambda fr: fr.cov(fr.d(s.jet(fr.q))),
                    s.domain or metric.domain, f"hess[{s.name}]")


def linear_combination(terms: Sequence[tuple[float, Field]], name: str = "") -> Field:
    first = terms[0][1]

    def fn(*args):
        out = None
        for coef, fld in terms:
            piece = coef * fld.jet(args)
            out = piece if out is None else out + piece
        return out

    return Field(first.arity, first.dim, fn, domain=first.domain,
                 time_dependent=first.time_dependent, name=name)


# certification

@dataclass(frozen=True)
class ResidualCertificate:
    max_residual: float
    points_sampled: int
    tol: float = DEFAULT_TOL

    @property
    def certified(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tol)


def sample_points(metric: Metric, domain: Domain | None, n: int, seed: int) -> np.ndarray:
    dom = metric.domain if domain is None else domain.merged(metric.domain) if metric.domain else domain
    if dom is None:
        dom = Domain((-2.0,) * metric.n, (2.0,) * metric.n)
    return dom.sample(n, seed=seed)


def sup_residual(fn: Callable[[np.ndarray], float], points) -> float:
    worst = 0.0
    for p in points:
        r = fn(p)
        if not np.isfinite(r):
            return float("inf")
        worst = max(worst, r)
    return worst


@dataclass(frozen=True)
class SymmetryObject:
    """A certified (or candidate) CKV or second-order CKT of ``metric``."""

    kind: str  # "ckv" or "ckt2"
    field: Field
    metric: Metric
    conformal_factor: Field | None = None
    associated_vector: Field | None = None
    certificate: ResidualCertificate | None = None
    name: str = ""

    def residual_at(self, point) -> float:
        if self.kind == "ckv":
            fr = frame_at(self.metric, point, EVAL_ORDER)
            L = self.field.jet(fr.q)
            psi = self.conformal_factor.jet(fr.q) if self.conformal_factor else ckv_factor_jet(fr, L)
            return _norm((fr.sym_cov(L) - psi * fr.g).value)
        return ckt_residual(self.metric, self.field, point, self.associated_vector)

    def certify(self, n: int = DEFAULT_SAMPLES, tol: float = DEFAULT_TOL, seed: int = 0) -> SymmetryObject:
        pts = sample_points(self.metric, self.field.domain, n, seed)
        cert = ResidualCertificate(sup_residual(self.residual_at, pts), len(pts), tol)
        return replace(self, certificate=cert)

    @property
    def certified(self) -> bool:
        return self.certificate is not None and self.certificate.certified


def ckv(metric: Metric, L: Field, psi: Field | None = None, name: str = "", certify: bool = True,
        **kw) -> SymmetryObject:
    psi = psi if psi is not None else conformal_factor_field(metric, L)
    obj = SymmetryObject("ckv", L, metric, conformal_factor=psi, name=name or L.name)
    return obj.certify(**kw) if certify else obj


def ckt(metric: Metric, U: Field, u: Field | None = None, name: str = "", certify: bool = True,
        **kw) -> SymmetryObject:
    u = u if u is not None else associated_vector_field(metric, U)
    obj = SymmetryObject("ckt2", U, metric, associated_vector=u, name=name or U.name)
    return obj.certify(**kw) if certify else obj


def reducible_ckt(metric: Metric, L: Field, **kw) -> SymmetryObject:
    """The CKT L_(a;b) built from a vector field L."""
    return ckt(metric, sym_cov_field(metric, L), name=f"sym_cov[{L.name}]", **kw)


@dataclass(frozen=True)
class CkvCatalogEntry:
    name: str
    metric_family: str
    vector: Field
    conformal_factor: Field


def ckt_from_ckvs(metric: Metric, f: Field | None, ckvs: Sequence[CkvCatalogEntry], c,
                  **kw) -> SymmetryObject:
    """U = f g + c^{KL} X_K(a X_L b), u = f_,a + c^{KL}(psi_K X_L + psi_L X_K), K <= L."""
    for e in ckvs:
        if e.metric_family != metric.name:
            raise MixedMetric(f"entry {e.name!r} belongs to {e.metric_family!r}, not {metric.name!r}")
    c = np.triu(np.atleast_2d(np.asarray(c, dtype=float)))
    m = len(ckvs)
    if m and c.shape != (m, m):
        raise ValueError(f"coefficient matrix must be {m}x{m}")
    pairs = [(K, L, c[K, L]) for K in range(m) for L in range(K, m) if c[K, L] != 0.0]

    def U(*q):
        fr_g = metric.g.jet(q)
        out = fr_g * f.jet(q) if f is not None else 0.0 * fr_g
        for K, L, ckl in pairs:
            XK, XL = ckvs[K].vector.jet(q), ckvs[L].vector.jet(q)
            prod = contract("a,b->ab", XK, XL)
            out = out + ckl * 0.5 * (prod + prod.transpose(1, 0))
        return out

    def u(*q):
        out = f.jet(q).gradient([J.variable_index(x) for x in q]) if f is not None else None
        for K, L, ckl in pairs:
            term = ckl * (ckvs[K].conformal_factor.jet(q) * ckvs[L].vector.jet(q)
                          + ckvs[L].conformal_factor.jet(q) * ckvs[K].vector.jet(q))
            out = term if out is None else out + term
        if out is None:
            return np.zeros(metric.n)
        return out

    dom = metric.domain
    Uf = Field("sym2tensor", metric.n, U, domain=dom, name="ckt_from_ckvs")
    uf = Field("covector", metric.n, u, domain=dom, name="u[ckt_from_ckvs]")
    return ckt(metric, Uf, uf, **kw)


# classification

@dataclass(frozen=True)
class CktClassification:
    is_KT: bool
    is_proper: bool
    is_HKT: bool
    is_tracefree: bool
    is_gradient_type: bool
    maxima: dict = field(default_factory=dict)


def classify_ckt(metric: Metric, obj: SymmetryObject, samples, tol: float = 1e-9) -> CktClassification:
    """Flags from sampled tests: u = 0, u a Killing vector, trace = 0, curl u = 0."""
    u_max = trace_max = kv_max = curl_max = 0.0
    for p in samples:
        fr = frame_at(metric, p, EVAL_ORDER + 1)
        U = obj.field.jet(fr.q)
        u = obj.associated_vector.jet(fr.q) if obj.associated_vector else ckt_vector_jet(fr, U)
        u_max = max(u_max, _norm(u.value))
        trace_max = max(trace_max, abs(float(fr.trace(U).value)))
        kv_max = max(kv_max, _norm(fr.sym_cov(u).value))
        curl_max = max(curl_max, _norm(curl_jet(fr, u).value))
    is_kt = u_max <= tol
    return CktClassification(
        is_KT=is_kt,
        is_proper=not is_kt,
        is_HKT=(not is_kt) and kv_max <= tol,
        is_tracefree=trace_max <= tol,
        is_gradient_type=curl_max <= tol,
        maxima={"u": u_max, "trace": trace_max, "sym_cov_u": kv_max, "curl_u": curl_max},
    )


def is_sckv(metric: Metric, psi: Field, samples, tol: float = 1e-9) -> bool:
    """psi_{;ab} = 0 everywhere with psi nonconstant."""
    hess = covariant_hessian_field(metric, psi)
    vals = [psi.eval(p) for p in samples]
    flat = all(_norm(hess.eval(p)) <= tol for p in samples)
    return flat and (max(vals) - min(vals)) > tol


# catalogs

def _e2_entries(metric: Metric) -> list[CkvCatalogEntry]:
    fam = metric.name
    one = lambda x, y: 1.0
    zero = lambda x, y: 0.0

    def entry(name, vec, psi):
        return CkvCatalogEntry(name, fam, Field.covector(vec, domain=metric.domain, name=name),
                               Field.scalar(psi, domain=metric.domain, name=f"psi[{name}]"))

    return [
        entry("translation_x", lambda x, y: [1.0, 0.0], zero),
        entry("translation_y", lambda x, y: [0.0, 1.0], zero),
        entry("rotation", lambda x, y: [-y, x], zero),
        entry("homothety", lambda x, y: [x, y], one),
        entry("sckv_x", lambda x, y: [(x * x - y * y) / 2, x * y], lambda x, y: x),
        entry("sckv_y", lambda x, y: [x * y, (y * y - x * x) / 2], lambda x, y: y),
    ]


def offdiag_ckv(metric: Metric, F1: Callable, F2: Callable, name: str = "B") -> CkvCatalogEntry:
    """B_a = f (F1(y), F2(x)) with psi = (F2 f_x + F1 f_y + f (F1' + F2')) / (2 f)."""
    f = _offdiag_f(metric)

    def vec(x, y):
        fv = f(x, y)
        return [fv * F1(y), fv * F2(x)]

    def psi(x, y):
        fj = f(x, y)
        ix, iy = J.variable_index(x), J.variable_index(y)
        f1, f2 = F1(y), F2(x)
        return (f2 * fj.partial(ix) + f1 * fj.partial(iy)
                + fj * (_d1(f1, iy) + _d1(f2, ix))) / (2.0 * fj)

    return CkvCatalogEntry(name, metric.name, Field.covector(vec, domain=metric.domain, name=name),
                           Field.scalar(psi, domain=metric.domain, name=f"psi[{name}]"))


def _d1(s, v):
    return s.partial(v) if isinstance(s, Jet) else 0.0


def _offdiag_f(metric: Metric) -> Callable:
    if metric.params.get("family") != "offdiag":
        raise UnknownFamily(f"{metric.name!r} is not an off-diagonal metric")
    return metric.params["f"]


def ckv_catalog(family: str, metric: Metric | None = None, F1: Callable | None = None,
                F2: Callable | None = None) -> list[CkvCatalogEntry]:
    """Known CKVs of the built-in families.

    ``family`` is one of ``"E2"``, ``"offdiag"`` (needs ``metric``, ``F1``,
    ``F2``) or ``"constant_curvature"`` (needs a constant-curvature ``metric``).
    """
    from . import catalog

    if family == "E2":
        return _e2_entries(metric or catalog.euclidean(2))
    if family == "offdiag":
        if metric is None or F1 is None or F2 is None:
            raise ValueError("offdiag family needs metric, F1 and F2")
        return [offdiag_ckv(metric, F1, F2)]
    if family == "constant_curvature":
        metric = metric or catalog.constant_curvature(1.0)
        k = metric.params["k"]
        basis = [
            ("kv_rotation", lambda y: y * y, lambda x: -x * x),
            ("kv_dilation", lambda y: y, lambda x: x),
            ("kv_translation", lambda y: 1.0 + 0.0 * y, lambda x: -1.0 + 0.0 * x),
        ]
        out = []
        for name, F1_, F2_ in basis:
            def vec(x, y, F1_=F1_, F2_=F2_):
                w = k / (x + y) ** 2
                return [w * F1_(y), w * F2_(x)]
            out.append(CkvCatalogEntry(name, metric.name,
                                       Field.covector(vec, domain=metric.domain, name=name),
                                       Field.scalar(lambda x, y: 0.0, domain=metric.domain)))
        return out
    raise UnknownFamily(f"no CKV catalog for family {family!r}")


def offdiag_ckt(metric: Metric, A1: Callable, A2: Callable, name: str = "C") -> SymmetryObject:
    """C = f^2 diag(A1(y), A2(x)) with u = (f_y A1 + f A1'/2, f_x A2 + f A2'/2), uncertified."""
    f = _offdiag_f(metric)

    def C(x, y):
        fv = f(x, y)
        a1, a2 = A1(y), A2(x)
        return [[fv * fv * a1, 0.0 * fv], [0.0 * fv, fv * fv * a2]]

    def u(x, y):
        fj = f(x, y)
        ix, iy = J.variable_index(x), J.variable_index(y)
        a1, a2 = A1(y), A2(x)
        return [fj.partial(iy) * a1 + 0.5 * fj * _d1(a1, iy),
                fj.partial(ix) * a2 + 0.5 * fj * _d1(a2, ix)]

    return SymmetryObject("ckt2", Field.sym2(C, domain=metric.domain, name=name), metric,
                          associated_vector=Field.covector(u, domain=metric.domain, name=f"u[{name}]"),
                          name=name)


def kv_condition_residual(metric: Metric, F1: Callable, F2: Callable, point) -> float:
    """F2 f_x + F1 f_y + f (F1' + F2'): vanishes iff B = f (F1, F2) is a Killing vector."""
    f = _offdiag_f(metric)
    x, y = J.variables(point, EVAL_ORDER)
    fj = f(x, y)
    f1, f2 = F1(y), F2(x)
    out = f2 * fj.partial(0) + f1 * fj.partial(1) + fj * (_d1(f1, 1) + _d1(f2, 0))
    return float(out.value) if isinstance(out, Jet) else float(out)


def kv_polynomial_rank(metric: Metric, points, degree: int = 2) -> tuple[int, np.ndarray]:
    """Rank of the linear map from polynomial (F1, F2) coefficients to KV-condition values.

    Full rank ``2 * (degree + 1)`` means no nonzero polynomial pair of that
    degree satisfies the Killing condition at all the given points.
    """
    cols = []
    for side in (0, 1):
        for p in range(degree + 1):
            if side == 0:
                F1, F2 = (lambda y, p=p: y ** p if p else 1.0 + 0.0 * y), (lambda x: 0.0 * x)
            else:
                F1, F2 = (lambda y: 0.0 * y), (lambda x, p=p: x ** p if p else 1.0 + 0.0 * x)
            cols.append([kv_condition_residual(metric, F1, F2, pt) for pt in points])
    A = np.array(cols).T
    A = A / np.maximum(np.linalg.norm(A, axis=0), 1e-300)
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > sv[0] * 1e-10))
    return rank, sv
