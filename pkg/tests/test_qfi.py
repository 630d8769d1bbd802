import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qfi_lab import catalog, jet as J, qfi as Q, symmetry as S
from qfi_lab.dynamics import initial_state_on_shell, integrate, monitor_report
from qfi_lab.errors import (ConditionViolated, NonIntegrable, NonzeroPotential, OutOfDomain,
                            UncertifiedSymmetry, ZeroLambda)
from qfi_lab.geometry import Domain, Field

SQRT2 = math.sqrt(2.0)
E2 = catalog.euclidean()
E2_CAT = {e.name: e for e in S.ckv_catalog("E2", E2)}
NO_KV = catalog.no_kv()


def field_td(arity, fn):
    return Field(arity, 2, fn, time_dependent=True)


def spiral_system(k=-1.0, c=0.0):
    # with c != 0 the constant c/2 in V needs E0 > c/2 for every direction to be feasible
    if c:
        return Q.ConstrainedSystem(E2, catalog.ermakov(lambda s: k - 0.3 * s * s, c), 1.0)
    return Q.ConstrainedSystem(E2, catalog.inverse_square(k), 0.0)


def on_shell_states(system, n, seed):
    rng = np.random.default_rng(seed)
    pts = system.domain.sample(n, seed=seed)
    out = []
    for p in pts:
        d = rng.normal(size=system.n)
        out.append(initial_state_on_shell(system, p, d))
    return out


def test_hamiltonian_pde_residuals_vanish():
    system = spiral_system()
    half = field_td("sym2tensor", lambda t, x, y: 0.5 * np.eye(2) + 0.0 * t)
    zero = field_td("covector", lambda t, x, y: [0.0 * t, 0.0 * t])
    K = field_td("scalar", lambda t, x, y: system.potential.fn(x, y) - system.energy + 0.0 * t)
    for p in system.domain.sample(10, seed=0):
        assert max(Q.pde_residuals(system, half, zero, K, 0.7, p).as_tuple()) <= 1e-14
        assert max(Q.fi_integrability_residuals(system, half, zero, K, 0.7, p)) <= 1e-13


def test_integral2_instance_of_homothety_has_zero_pde_residuals():
    system = spiral_system(c=0.4)
    hv = E2_CAT["homothety"].vector
    spec = Q.build_integral2(system, [hv], 0)
    for p in system.domain.sample(10, seed=1):
        assert max(Q.pde_residuals(system, spec.Kab, spec.Ka, spec.K, 1.3, p).as_tuple()) <= 1e-12
        assert max(Q.fi_integrability_residuals(system, spec.Kab, spec.Ka, spec.K, 1.3, p)) <= 1e-12


def test_pde_residual_detects_a_non_integral():
    system = spiral_system()
    eye = field_td("sym2tensor", lambda t, x, y: np.eye(2) + 0.0 * t)
    zero = field_td("covector", lambda t, x, y: [0.0 * t, 0.0 * t])
    zs = field_td("scalar", lambda t, x, y: 0.0 * t)
    p = np.array([1.0, 0.5])
    res = Q.pde_residuals(system, eye, zero, zs, 0.0, p)
    grad_V = 2.0 / (p @ p) ** 2 * p  # V = -1/r^2
    assert res.gradient == pytest.approx(2 * np.linalg.norm(grad_V), rel=1e-12)
    assert res.ckt == 0.0


def test_integrability_residuals_flag_random_coefficients():
    system = spiral_system()
    Kab = field_td("sym2tensor", lambda t, x, y: [[x * y + t, J.sin(x)], [J.sin(x), y * y]])
    Ka = field_td("covector", lambda t, x, y: [J.exp(y) * t, x * x])
    K = field_td("scalar", lambda t, x, y: x * y * y + t * t)
    assert max(Q.fi_integrability_residuals(system, Kab, Ka, K, 0.5, [1.1, 0.4])) > 1e-3


def test_integral1_with_ell_zero_is_j1():
    system = spiral_system(c=0.4)
    C = S.ckt_from_ckvs(E2, None, [E2_CAT["rotation"]], [[1.0]])
    F2 = Field.scalar(lambda x, y: 2.0 * (-1.0 - 0.3 * (y / x) ** 2))
    a = Q.build_integral1(system, C, [], F2, 0)
    b = Q.build_J1(system, C, F2)
    rng = np.random.default_rng(0)
    for p in system.domain.sample(20, seed=2):
        v, t = rng.normal(size=2), rng.uniform(-2, 2)
        assert a.evaluate(t, p, v) == b.evaluate(t, p, v)


def test_integral2_with_ell_zero_agrees_with_j2_on_shell():
    system = spiral_system(c=0.4)
    hv = S.ckv(E2, E2_CAT["homothety"].vector, E2_CAT["homothety"].conformal_factor)
    j2 = Q.build_J2(system, hv)
    i2 = Q.build_integral2(system, [hv.field], 0)
    c = 0.4 - 2.0 * system.energy  # L.grad V + 2 (V - E0) psi for the homothety
    assert j2.c == pytest.approx(c, abs=1e-12)
    rng = np.random.default_rng(1)
    for s in on_shell_states(system, 20, 3):
        t = rng.uniform(0, 2)
        r_rdot = float(s.q @ s.qdot)
        assert j2.evaluate(t, s.q, s.qdot) == pytest.approx(r_rdot + c * t, abs=1e-12)
        assert i2.evaluate(t, s.q, s.qdot) == pytest.approx(r_rdot + c * t, abs=1e-12)


def test_sckv_lfi_condition_for_circle_potential():
    system = Q.ConstrainedSystem(E2, catalog.sckv_potential(lambda s: -0.5 + 0.2 * s), 0.0)
    spec = Q.build_integral2(system, [E2_CAT["sckv_x"].vector], 0)
    assert spec.max_residual <= 1e-10


def test_no_kv_integral_from_integral1():
    system = Q.ConstrainedSystem(NO_KV, catalog.zero_potential(), -0.5)
    C = S.offdiag_ckt(NO_KV, lambda y: J.exp(-2.0 * y), lambda x: 0.0 * x)
    G = Field.scalar(lambda x, y: -0.25 * x ** 4 + 0.0 * y)
    spec = Q.build_integral1(system, C, [], G, 0)
    assert spec.max_residual <= 1e-9


def test_hamiltonian_as_integral1():
    spec = Q.hamiltonian(spiral_system())
    assert spec.certified
    assert spec.max_residual <= 1e-12


def test_wrong_potential_function_violates_conditions():
    system = spiral_system(c=0.4)
    C = S.ckt_from_ckvs(E2, None, [E2_CAT["rotation"]], [[1.0]])
    with pytest.raises(ConditionViolated) as info:
        Q.build_J1(system, C, Field.scalar(lambda x, y: 0.0))
    assert info.value.residuals["G"] > 1e-3


def test_non_ckt_input_is_rejected():
    system = spiral_system()
    U = S.ckt(E2, Field.sym2(lambda x, y: [[x * y, 0.0 * x], [0.0 * x, x]]))
    with pytest.raises(UncertifiedSymmetry):
        Q.build_J1(system, U, Field.scalar(lambda x, y: 0.0))


def test_integral3_geodesic_condition_is_proportionality():
    # 1D, V = 0, E0 = 1, lambda = 1: L = exp(x / sqrt 2) has Y = L'' = L / 2 = (lambda^2 / 2 E0) L
    line = Domain((-2.0,), (2.0,))
    metric = catalog.Metric(Field("sym2tensor", 1, lambda x: [[1.0 + 0.0 * x]], domain=line), 1, "riemannian",
                            name="E1")
    L = Field("covector", 1, lambda x: [J.exp(x / SQRT2)], name="L")
    good = Q.ConstrainedSystem(metric, catalog.zero_potential(1), 1.0)
    spec = Q.build_integral3(good, 1.0, L)
    assert spec.max_residual <= 1e-12
    Y = spec.tensors["Y"]
    assert float(Y.eval([0.3])[0]) == pytest.approx(0.5 * math.exp(0.3 / SQRT2), rel=1e-12)
    with pytest.raises(ConditionViolated):
        Q.build_integral3(Q.ConstrainedSystem(metric, catalog.zero_potential(1), 2.0), 1.0, L)


def test_integral3_zero_vector_and_zero_lambda():
    system = spiral_system()
    spec = Q.build_integral3(system, 0.7, Field.zero("covector"))
    assert spec.max_residual == 0.0
    assert spec.evaluate(0.3, [1.0, 0.2], [0.5, -0.1]) == 0.0
    with pytest.raises(ZeroLambda):
        Q.build_integral3(system, 0.0, Field.zero("covector"))


def test_inverted_oscillator_exponential_integral_is_conserved():
    lam = 1.3
    metric = catalog.Metric(Field("sym2tensor", 1, lambda x: [[1.0 + 0.0 * x]], domain=Domain((-2.0,), (2.0,))),
                            1, "riemannian", name="E1")
    system = Q.ConstrainedSystem(metric, catalog.inverted_oscillator(lam), 0.1)
    spec = Q.build_integral3(system, lam, Field("covector", 1, lambda x: [1.0 + 0.0 * x]))
    assert spec.max_residual <= 1e-12
    s0 = initial_state_on_shell(system, [0.2], [1.0])
    traj = integrate(system, s0, 1.0, 1e-11, monitors=[spec])
    rep = monitor_report(traj, [spec])
    assert rep.relative(spec.family) <= 1e-8


def test_geodesic_ckt_is_conserved_on_null_geodesics():
    system = Q.ConstrainedSystem(NO_KV, catalog.zero_potential(), 0.0)
    C = S.offdiag_ckt(NO_KV, lambda y: y * y + 1.0, lambda x: x)
    spec = Q.geodesic_specialize(system, "C", {"C": C})
    assert spec.family == "geodesic-P1"
    s0 = initial_state_on_shell(system, [1.0, 0.0], [0.0, 1.0])
    traj = integrate(system, s0, 0.5, 1e-11, monitors=[spec])
    rep = monitor_report(traj, [spec])
    assert rep.relative(spec.family) <= 1e-8
    assert rep.fi_initial[spec.family] != 0.0


def test_geodesic_gradient_family_on_null_geodesics():
    metric = catalog.flat_lorentzian()
    system = Q.ConstrainedSystem(metric, catalog.zero_potential(), 0.0)
    G = Field.scalar(lambda x, y: y * y - x ** 4 / 16.0)  # u v in the flat coordinates
    spec = Q.geodesic_specialize(system, "G", {"G": G})
    assert spec.certified
    s0 = initial_state_on_shell(system, [1.0, 0.2], [1.0, 0.0])
    traj = integrate(system, s0, 1.0, 1e-11, monitors=[spec])
    assert monitor_report(traj, [spec]).fi_drift[spec.family] <= 1e-8


def test_constant_curvature_kvs_give_three_lfis():
    metric = catalog.constant_curvature(1.0)
    system = Q.ConstrainedSystem(metric, catalog.zero_potential(), 1.0)
    specs = [Q.geodesic_specialize(system, "L", {"L": e.vector}) for e in S.ckv_catalog("constant_curvature", metric)]
    assert all(s.family == "geodesic-P2" and s.max_residual <= 1e-10 for s in specs)


def test_geodesic_specialize_needs_zero_potential():
    with pytest.raises(NonzeroPotential):
        Q.geodesic_specialize(spiral_system(), "L", {"L": E2_CAT["rotation"].vector})


def test_evaluate_outside_domain():
    system = Q.ConstrainedSystem(catalog.constant_curvature(1.0), catalog.zero_potential(), 1.0)
    spec = Q.hamiltonian(system)
    with pytest.raises(OutOfDomain):
        Q.evaluate(spec, 0.0, ([1.0, -1.0], [1.0, 1.0]))


def test_kt_residuals_do_not_depend_on_energy():
    C = S.ckt_from_ckvs(E2, None, [E2_CAT["rotation"]], [[1.0]])
    wrong_G = Field.scalar(lambda x, y: x * y)
    res = []
    for E0 in (0.0, 3.0):
        system = Q.ConstrainedSystem(E2, catalog.ermakov(lambda s: 1.0 + s, 0.0), E0)
        res.append(Q.build_J1(system, C, wrong_G, strict=False).condition_residuals["G"])
    assert res[0] > 1e-3
    assert res[0] == pytest.approx(res[1], rel=1e-12)


def test_g_integrability_pdes():
    pts = NO_KV.domain.sample(50, seed=5)
    A1 = lambda y: J.exp(-2.0 * y)
    zero = lambda x: 0.0 * x
    assert max(abs(Q.no_kv_condition(A1, p)) for p in pts) <= 1e-10
    assert max(abs(Q.bertrand_darboux_2d1(NO_KV, A1, zero, p)) for p in pts) <= 1e-10
    toda = catalog.toda()
    tpts = toda.domain.sample(50, seed=5)
    A2 = lambda x: J.exp(-SQRT2 * x)
    assert max(abs(Q.bertrand_darboux_2d1(toda, lambda y: 0.0 * y, A2, p)) for p in tpts) <= 1e-10


def test_g_integrability_through_the_gradient_route():
    system = Q.ConstrainedSystem(NO_KV, catalog.zero_potential(), -0.5)
    good = S.offdiag_ckt(NO_KV, lambda y: J.exp(-2.0 * y), lambda x: 0.0 * x)
    bad = S.offdiag_ckt(NO_KV, lambda y: J.sin(3.0 * y) + y, lambda x: J.cos(x))
    pts = NO_KV.domain.sample(20, seed=6)
    assert max(Q.check_G_integrability(system, good, [], p) for p in pts) <= 1e-10
    assert max(Q.check_G_integrability(system, bad, [], p) for p in pts) >= 1e-3


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.5, 3))
@settings(max_examples=20, deadline=None)
def test_random_coefficient_functions_break_the_pde(a, b, w):
    A1 = lambda y: J.sin(w * y) + a
    A2 = lambda x: J.exp(b * x) + x * x
    pts = NO_KV.domain.sample(30, seed=7)
    assert max(abs(Q.bertrand_darboux_2d1(NO_KV, A1, A2, p)) for p in pts) >= 1e-3


def test_quadrature_recovers_potential_functions():
    system = Q.ConstrainedSystem(NO_KV, catalog.zero_potential(), -0.5)
    C = S.offdiag_ckt(NO_KV, lambda y: J.exp(-2.0 * y), lambda x: 0.0 * x)
    rhs = Q.g_rhs_field(system, C)
    for target in ([1.5, 0.3], [0.7, -0.6]):
        dG = Q.solve_G_by_quadrature(system, rhs, [1.0, 0.0], target)
        assert dG == pytest.approx(-0.25 * (target[0] ** 4 - 1.0), abs=1e-9)

    k1, b1, b2, E0 = 1.0, 1.0, 2.0, -1.0
    toda = catalog.toda(k1, 1.0, b1, b2, 1.0)
    tsys = Q.ConstrainedSystem(toda, catalog.zero_potential(), E0)
    Ct = S.offdiag_ckt(toda, lambda y: 0.0 * y, lambda x: J.exp(-SQRT2 * b1 * x))
    G = lambda y: k1 * b1 * E0 / (b1 - b2) * math.exp(SQRT2 * (b2 - b1) * y)
    dG = Q.solve_G_by_quadrature(tsys, Q.g_rhs_field(tsys, Ct), [0.1, -0.2], [0.5, 0.6])
    assert dG == pytest.approx(G(0.6) - G(-0.2), abs=1e-9)


def test_quadrature_of_zero_and_of_a_curl():
    system = spiral_system()
    zero = Field.covector(lambda x, y: [0.0 * x, 0.0 * y])
    assert Q.solve_G_by_quadrature(system, zero, [0.5, 0.5], [1.5, -0.5]) == 0.0
    curl = Field.covector(lambda x, y: [y, -x])
    with pytest.raises(NonIntegrable):
        Q.solve_G_by_quadrature(system, curl, [0.5, 0.5], [1.5, -0.5])


def test_multiplier_identity_for_shipped_forms():
    system = spiral_system(c=0.4)
    hv = S.ckv(E2, E2_CAT["homothety"].vector, E2_CAT["homothety"].conformal_factor)
    specs = [Q.hamiltonian(system), Q.build_integral2(system, [hv.field], 0), Q.build_J2(system, hv)]
    rng = np.random.default_rng(9)
    for p in system.domain.sample(10, seed=8):
        v, t = rng.normal(size=2), rng.uniform(0, 2)
        for spec in specs:
            assert Q.multiplier_identity_residual(spec, t, p, v) <= 1e-8
