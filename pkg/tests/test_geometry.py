import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import christoffel_fd, cov_tensor2_fd, fd_partial, ricci_offdiag
from qfi_lab import catalog, jet as J
from qfi_lab.errors import DimensionMismatch, SingularMetric
from qfi_lab.geometry import (Domain, Field, christoffel, cov_derivative_tensor2, ricci_scalar_2d,
                              sym_cov_derivative)
from qfi_lab.symmetry import ckv_catalog, offdiag_ckt

BUILTIN = {
    "E2": catalog.euclidean(),
    "constant_curvature": catalog.constant_curvature(1.0),
    "flat_lorentzian": catalog.flat_lorentzian(),
    "no_kv": catalog.no_kv(),
    "toda": catalog.toda(),
}


def generic_offdiag():
    f = lambda x, y: x * x + J.exp(y) + 1.0
    return catalog.offdiag(f, Domain((-1.0, -1.0), (1.0, 1.0)), "generic")


def test_offdiag_christoffels_are_log_derivatives_of_f():
    G = christoffel(generic_offdiag(), [1.0, 2.0]).gamma
    f, fx, fy = 1.0 + np.exp(2.0) + 1.0, 2.0, np.exp(2.0)
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = fx / f
    expected[1, 1, 1] = fy / f
    assert np.allclose(G, expected, atol=1e-15)


def test_euclidean_christoffels_vanish():
    assert not np.any(christoffel(catalog.euclidean(), [0.3, -1.1]).gamma)


def test_constant_curvature_christoffel_at_one_one():
    G = christoffel(catalog.constant_curvature(1.0), [1.0, 1.0]).gamma
    assert G[0, 0, 0] == pytest.approx(-1.0, rel=1e-14)
    assert G[1, 1, 1] == pytest.approx(-1.0, rel=1e-14)


def test_singular_metric_is_reported():
    with pytest.raises(SingularMetric):
        christoffel(catalog.flat_lorentzian(), [0.0, 0.3])


def test_connection_derivatives_match_difference_quotients():
    metric = BUILTIN["no_kv"]
    p = np.array([1.2, 0.1])
    conn = christoffel(metric, p)
    for d in range(2):
        fd = fd_partial(lambda q: christoffel(metric, q).gamma, p, d, 1e-6)
        assert np.allclose(conn.dgamma[..., d], fd, rtol=1e-6, atol=1e-7)


@pytest.mark.parametrize("name", list(BUILTIN))
def test_christoffels_match_finite_difference_oracle(name):
    metric = BUILTIN[name]
    worst = 0.0
    for p in metric.domain.sample(200, seed=1):
        G = christoffel(metric, p).gamma
        ref = christoffel_fd(metric.value, p)
        assert np.allclose(G, G.transpose(0, 2, 1), atol=0.0)
        worst = max(worst, np.linalg.norm(G - ref) / max(1.0, np.linalg.norm(ref)))
    assert worst <= 1e-6


@pytest.mark.parametrize("name", list(BUILTIN))
def test_metric_compatibility(name):
    metric = BUILTIN[name]
    for p in metric.domain.sample(200, seed=2):
        nabla = cov_derivative_tensor2(metric, metric.g, p)
        scale = max(1.0, float(np.max(np.abs(metric.value(p)))))
        assert np.max(np.abs(nabla)) <= 1e-12 * scale


def test_sym_cov_of_homothety_and_sckv():
    E2 = catalog.euclidean()
    entries = {e.name: e for e in ckv_catalog("E2", E2)}
    assert np.allclose(sym_cov_derivative(E2, entries["homothety"].vector, [0.4, 1.3]), np.eye(2), atol=0)
    assert np.allclose(sym_cov_derivative(E2, entries["sckv_x"].vector, [2.0, 3.0]), 2 * np.eye(2), atol=1e-14)
    zero = Field.zero("covector")
    assert not np.any(sym_cov_derivative(BUILTIN["toda"], zero, [0.2, 0.1]))


def test_cov_derivative_of_x_times_identity_in_the_plane():
    E2 = catalog.euclidean()
    C = Field.sym2(lambda x, y: [[x, 0.0 * x], [0.0 * x, x]])
    nabla = cov_derivative_tensor2(E2, C, [0.5, -0.7])
    expected = np.zeros((2, 2, 2))
    expected[0, 0, 0] = expected[1, 1, 0] = 1.0
    assert np.allclose(nabla, expected, atol=1e-15)


def test_cov_derivative_of_offdiag_ckt_matches_fourth_order_oracle():
    metric = BUILTIN["no_kv"]
    C = offdiag_ckt(metric, lambda y: J.exp(-2.0 * y), lambda x: 0.0 * x).field
    p = np.array([1.0, 0.0])
    got = cov_derivative_tensor2(metric, C, p)
    ref = cov_tensor2_fd(metric.value, C.eval, p)
    assert np.allclose(got, ref, rtol=1e-7, atol=1e-7 * np.max(np.abs(got)))


def test_ricci_scalar_values():
    assert ricci_scalar_2d(catalog.constant_curvature(2.0), [0.7, 1.1]) == pytest.approx(-2.0, rel=1e-12)
    assert ricci_scalar_2d(BUILTIN["no_kv"], [1.0, 0.0]) == pytest.approx(-0.25, rel=1e-12)
    assert ricci_scalar_2d(BUILTIN["E2"], [0.1, 0.2]) == 0.0


def test_ricci_scalar_needs_two_dimensions():
    with pytest.raises(DimensionMismatch):
        ricci_scalar_2d(catalog.euclidean(3), [0.0, 0.0, 0.0])


def test_constant_curvature_ricci_has_negligible_variance():
    metric = catalog.constant_curvature(1.0)
    R = [ricci_scalar_2d(metric, p) for p in metric.domain.sample(200, seed=3)]
    assert np.mean(R) == pytest.approx(-4.0, rel=1e-12)
    assert np.var(R) <= 1e-18


@pytest.mark.parametrize("name", ["no_kv", "toda", "flat_lorentzian"])
def test_ricci_matches_offdiag_oracle(name):
    metric = BUILTIN[name]
    f = metric.params["f"]
    for p in metric.domain.sample(20, seed=4):
        ref = ricci_offdiag(f, p)
        assert ricci_scalar_2d(metric, p) == pytest.approx(ref, rel=1e-5, abs=1e-6)


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.integers(0, 1), st.integers(0, 1))
@settings(max_examples=50, deadline=None)
def test_partial2_is_symmetric_and_matches_differences(x, y, i, j):
    F = Field.scalar(lambda x, y: J.sin(x * y) + x ** 3 * J.exp(0.5 * y))
    assert F.partial2([x, y], i, j) == pytest.approx(F.partial2([x, y], j, i), rel=1e-12, abs=1e-12)
    fd = fd_partial(lambda q: F.partial(q, i), np.array([x, y]), j, 1e-6)
    assert F.partial2([x, y], i, j) == pytest.approx(float(fd), rel=1e-5, abs=1e-6)


@given(st.sampled_from(list(BUILTIN)), st.integers(0, 50))
@settings(max_examples=30, deadline=None)
def test_metric_values_are_symmetric(name, k):
    metric = BUILTIN[name]
    p = metric.domain.sample(51, seed=5)[k]
    g = metric.value(p)
    assert np.array_equal(g, g.T)
    assert abs(np.linalg.det(g)) > 0


def test_sampler_is_deterministic_and_respects_margin():
    dom = catalog.no_kv().domain
    a, b = dom.sample(100, seed=7), dom.sample(100, seed=7)
    assert np.array_equal(a, b)
    assert all(dom.distance_to_loci(p) > 1e-2 for p in a)
    assert np.all(a >= np.array(dom.lo)) and np.all(a <= np.array(dom.hi))
