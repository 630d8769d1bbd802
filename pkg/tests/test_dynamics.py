import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from qfi_lab import catalog, qfi as Q
from qfi_lab.dynamics import (State, acceleration, initial_state_on_shell, integrate, monitor_report,
                              quadrature)
from qfi_lab.errors import InfeasibleEnergy, NonConvergent, NullDirectionRequired, StepSizeUnderflow

E2 = catalog.euclidean()
SPIRAL = Q.ConstrainedSystem(E2, catalog.inverse_square(-1.0), 0.0)
FREE = Q.ConstrainedSystem(E2, catalog.zero_potential(), 0.5)


def test_on_shell_scaling_examples():
    assert np.allclose(initial_state_on_shell(SPIRAL, [1.0, 0.0], [1.0, 1.0]).qdot, [1.0, 1.0])
    sphere = Q.ConstrainedSystem(catalog.constant_curvature(1.0), catalog.zero_potential(), 1.0)
    assert np.allclose(initial_state_on_shell(sphere, [1.0, 0.0], [1.0, 1.0]).qdot, [1.0, 1.0])
    flat = Q.ConstrainedSystem(catalog.flat_lorentzian(), catalog.zero_potential(), 0.0)
    assert np.array_equal(initial_state_on_shell(flat, [1.0, 0.0], [2.0, 0.0]).qdot, [2.0, 0.0])


def test_on_shell_failures():
    with pytest.raises(InfeasibleEnergy):
        initial_state_on_shell(Q.ConstrainedSystem(E2, catalog.inverse_square(-1.0), -5.0), [1.0, 0.0], [1.0, 0.0])
    flat = catalog.flat_lorentzian()
    with pytest.raises(NullDirectionRequired):
        initial_state_on_shell(Q.ConstrainedSystem(flat, catalog.zero_potential(), 0.0), [1.0, 0.0], [1.0, 1.0])
    with pytest.raises(InfeasibleEnergy):
        initial_state_on_shell(Q.ConstrainedSystem(flat, catalog.zero_potential(), 1.0), [1.0, 0.0], [1.0, 0.0])


@given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0, 2 * math.pi))
@settings(max_examples=30, deadline=None)
def test_on_shell_energy(x, y, angle):
    s = initial_state_on_shell(FREE, [x, y], [math.cos(angle), math.sin(angle)])
    assert FREE.hamiltonian(s.q, s.qdot) == pytest.approx(FREE.energy, abs=1e-14)


def test_free_particle_is_a_straight_line():
    s0 = initial_state_on_shell(FREE, [-1.0, 0.5], [1.0, -0.5])
    traj = integrate(FREE, s0, 1.5, 1e-12, t_eval=np.linspace(0, 1.5, 16))
    expected = s0.q + np.outer(traj.t, s0.qdot)
    assert np.max(np.abs(traj.q - expected)) <= 1e-10


def test_spiral_closed_form():
    s0 = initial_state_on_shell(SPIRAL, [1.0, 0.0], [1.0, 1.0])
    traj = integrate(SPIRAL, s0, 2.0, 1e-12, t_eval=np.linspace(0, 2, 41))
    r = np.hypot(traj.q[:, 0], traj.q[:, 1])
    theta = np.arctan2(traj.q[:, 1], traj.q[:, 0])
    assert np.max(np.abs(r - np.sqrt(2 * traj.t + 1))) <= 1e-6
    assert np.max(np.abs(theta - 0.5 * np.log(2 * traj.t + 1))) <= 1e-6


def test_agrees_with_scipy_reference():
    system = Q.ConstrainedSystem(catalog.constant_curvature(1.0), catalog.zero_potential(), 1.0)
    s0 = initial_state_on_shell(system, [1.0, 0.2], [1.0, 1.0])
    grid = np.linspace(0, 0.8, 9)
    ours = integrate(system, s0, 0.8, 1e-12, t_eval=grid)
    ref = solve_ivp(lambda t, y: np.concatenate([y[2:], acceleration(system, y[:2], y[2:])]),
                    (0, 0.8), np.concatenate([s0.q, s0.qdot]), method="DOP853", t_eval=grid,
                    rtol=1e-12, atol=1e-12)
    assert np.max(np.abs(ours.q - ref.y[:2].T)) <= 1e-8


def test_time_reversal():
    s0 = initial_state_on_shell(SPIRAL, [1.0, 0.0], [1.0, 1.0])
    fwd = integrate(SPIRAL, s0, 2.0, 1e-11)
    back = integrate(SPIRAL, State(0.0, fwd.q[-1], -fwd.qdot[-1]), 2.0, 1e-11)
    assert np.max(np.abs(back.q[-1] - s0.q)) <= 1e-6
    assert np.max(np.abs(back.qdot[-1] + s0.qdot)) <= 1e-6


def test_tighter_tolerance_reduces_drift():
    s0 = initial_state_on_shell(SPIRAL, [1.0, 0.0], [1.0, 1.0])
    loose = monitor_report(integrate(SPIRAL, s0, 2.0, 1e-8)).H_drift
    tight = monitor_report(integrate(SPIRAL, s0, 2.0, 1e-10)).H_drift
    assert tight <= loose / 100


def test_energy_is_monitored_not_projected():
    s0 = initial_state_on_shell(SPIRAL, [1.0, 0.0], [1.0, 1.0])
    traj = integrate(SPIRAL, s0, 2.0, 1e-6)
    assert monitor_report(traj).H_drift > 0.0
    assert traj.complete and traj.stats["steps"] > 0


def test_collision_with_locus_raises_with_partial_trajectory():
    s0 = initial_state_on_shell(SPIRAL, [1.0, 0.0], [-1.0, 0.0])
    with pytest.raises(StepSizeUnderflow) as info:
        integrate(SPIRAL, s0, 1.0, 1e-10)
    partial = info.value.trajectory
    assert not partial.complete
    assert 0.0 < partial.t[-1] < 1.0
    assert np.min(np.hypot(partial.q[:, 0], partial.q[:, 1])) > 0.0


def test_dense_output_matches_step_endpoints():
    s0 = initial_state_on_shell(SPIRAL, [1.0, 0.0], [1.0, 1.0])
    steps = integrate(SPIRAL, s0, 1.0, 1e-12)
    dense = integrate(SPIRAL, s0, 1.0, 1e-12, t_eval=steps.t)
    assert np.max(np.abs(dense.q - steps.q)) <= 1e-12
    mid = integrate(SPIRAL, s0, 1.0, 1e-12, t_eval=[0.37])
    assert np.hypot(*mid.q[0]) == pytest.approx(math.sqrt(1.74), abs=1e-8)


def test_monitors_record_integrals():
    ham = Q.hamiltonian(SPIRAL)
    s0 = initial_state_on_shell(SPIRAL, [1.0, 0.0], [1.0, 1.0])
    traj = integrate(SPIRAL, s0, 1.0, 1e-12, monitors=[ham])
    rep = monitor_report(traj, [ham])
    assert rep.fi_drift[ham.family] <= 1e-10
    assert np.allclose(traj.monitors[ham.name or ham.family], traj.H_minus_E0 / 1.0, atol=1e-12)


def test_quadrature():
    assert quadrature(math.sin, (0.0, math.pi)) == pytest.approx(2.0, abs=1e-12)
    assert quadrature(math.exp, (1.0, 1.0)) == 0.0
    with pytest.raises(NonConvergent):
        quadrature(lambda s: 1.0 / s, (0.0, 1.0))
