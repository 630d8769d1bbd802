"""Integration of the constrained equations of motion with drift monitors.

The integrator is an embedded Dormand-Prince 5(4) pair with PI step-size
control and the standard fourth-order dense output.  It never projects onto
the energy surface: constraint and first-integral drift are measured, not
corrected.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as sp_integrate

from . import jet as J
from .errors import (InfeasibleEnergy, NonConvergent, NullDirectionRequired, OutOfDomain,
                     StepSizeUnderflow)
from .geometry import Frame

# Dormand-Prince 5(4) tableau.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the fifth- and fourth-order weights (seven stages, FSAL)
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output: y(t_old + x h) = y_old + h K^T P [x, x^2, x^3, x^4]
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
BETA = 0.04
ALPHA = 0.2 - 0.75 * BETA
MIN_FACTOR, MAX_FACTOR = 0.2, 10.0
LOCUS_GUARD = 1e-3


@dataclass(frozen=True)
class State:
    t: float
    q: np.ndarray
    qdot: np.ndarray


@dataclass
class Trajectory:
    """Output states with their monitors.

    ``t, q, qdot`` are the dense-output samples when sample times were
    requested, otherwise the accepted steps.  ``step_t`` and
    ``step_H_minus_E0`` always hold the accepted steps.
    """

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    H_minus_E0: np.ndarray
    monitors: dict = field(default_factory=dict)
    step_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    step_H_minus_E0: np.ndarray = field(default_factory=lambda: np.zeros(0))
    stats: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def states(self) -> list[State]:
        return [State(float(t), q, v) for t, q, v in zip(self.t, self.q, self.qdot)]

    def __len__(self) -> int:
        return len(self.t)


def initial_state_on_shell(system, q0, direction, t0: float = 0.0) -> State:
    """Scale ``direction`` so that (1/2) g(v, v) + V(q0) = E0."""
    q0 = np.asarray(q0, float)
    d = np.asarray(direction, float)
    if not np.any(d):
        raise ValueError("direction must be nonzero")
    if not system.domain.contains(q0):
        raise OutOfDomain(f"{q0} lies outside the system's domain")
    g = system.metric.g.eval(q0)
    s = float(d @ g @ d)
    rhs = system.energy - system.potential.eval(q0)
    scale = max(1.0, abs(system.energy), abs(system.potential.eval(q0)))
    s_scale = max(1.0, float(np.max(np.abs(g)))) * float(d @ d)
    null = abs(s) <= 1e-14 * s_scale
    if abs(rhs) <= 1e-14 * scale:
        if not null:
            raise NullDirectionRequired("E0 = V(q0) admits only null directions")
        return State(t0, q0, d.copy())
    if null:
        raise InfeasibleEnergy("a null direction cannot carry nonzero kinetic energy")
    alpha2 = 2.0 * rhs / s
    if alpha2 <= 0.0:
        raise InfeasibleEnergy(f"no real speed: 2(E0 - V)/g(d, d) = {alpha2:.3e} < 0")
    return State(t0, q0, math.sqrt(alpha2) * d)


def acceleration(system, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """-Gamma^a_bc qdot^b qdot^c - V^,a."""
    fr = Frame(system.metric, J.variables(q, 1))
    dV = fr.grad_up(system.potential.jet(fr.q)).value
    return -np.einsum("abc,b,c->a", fr.gamma.value, qdot, qdot) - dV


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def integrate(system, s0: State, t_end: float, tol: float = 1e-10, t_eval: Sequence[float] | None = None,
              monitors: Sequence = (), h0: float | None = None, max_steps: int = 200000,
              rhs: Callable | None = None) -> Trajectory:
    """Integrate from ``s0`` to ``t_end`` with relative and absolute tolerance ``tol``.

    ``monitors`` are first-integral specs (anything with ``evaluate(t, q,
    qdot)`` and a ``name``) recorded at every output state.  ``rhs`` replaces
    the generic geometric acceleration, e.g. by a hand-written one for speed.
    """
    n = system.n
    t0 = float(s0.t)
    if not t_end > t0:
        raise ValueError("t_end must exceed the initial time")
    accel = rhs or (lambda q, v: acceleration(system, q, v))
    domain = system.domain

    def f(y):
        return np.concatenate([y[n:], accel(y[:n], y[n:])])

    def H(y):
        return system.hamiltonian(y[:n], y[n:]) - system.energy

    y = np.concatenate([np.asarray(s0.q, float), np.asarray(s0.qdot, float)])
    t = t0
    K = np.zeros((7, 2 * n))
    K[0] = f(y)
    nfev = 1

    if t_eval is not None:
        t_eval = np.asarray(sorted(float(s) for s in t_eval if t0 <= s <= t_end))
    out_t: list[float] = []
    out_y: list[np.ndarray] = []
    ev_i = 0
    if t_eval is not None:
        while ev_i < len(t_eval) and t_eval[ev_i] <= t0:
            out_t.append(t_eval[ev_i])
            out_y.append(y.copy())
            ev_i += 1
    else:
        out_t.append(t)
        out_y.append(y.copy())

    step_t = [t]
    step_H = [H(y)]

    if h0 is None:
        scale = tol + tol * np.abs(y)
        d0, d1 = _rms(y / scale), _rms(K[0] / scale)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, t_end - t0)
    else:
        h = h0
    err_prev = 1e-4
    steps = rejections = 0
    max_err = 0.0
    h_min = 1e-14 * max(1.0, abs(t_end))

    def partial(reason):
        traj = _assemble(system, out_t, out_y, step_t, step_H, monitors, n,
                         {"steps": steps, "rejections": rejections, "max_error_estimate": max_err,
                          "nfev": nfev}, complete=False)
        return StepSizeUnderflow(reason, traj)

    while t < t_end:
        if steps + rejections > max_steps:
            raise partial(f"step budget exhausted at t = {t}")
        h = min(h, t_end - t)
        if h < h_min:
            raise partial(f"step size underflow at t = {t}")
        for s in range(1, 6):
            K[s] = f(y + h * (_A[s] @ K[:s]))
        y_new = y + h * (_B @ K[:6])
        nfev += 5
        ok = np.all(np.isfinite(y_new)) and domain.contains(y_new[:n], LOCUS_GUARD)
        if ok:
            K[6] = f(y_new)
            nfev += 1
            ok = bool(np.all(np.isfinite(K[6])))
        if not ok:
            rejections += 1
            h *= 0.25
            continue
        scale = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(h * (_E @ K) / scale)
        if err <= 1.0:
            t_new = t + h
            if t_eval is not None:
                Q = K.T @ _P
                while ev_i < len(t_eval) and t_eval[ev_i] <= t_new:
                    x = (t_eval[ev_i] - t) / h
                    out_t.append(t_eval[ev_i])
                    out_y.append(y + h * (Q @ np.array([x, x * x, x ** 3, x ** 4])))
                    ev_i += 1
            t, y = t_new, y_new
            K[0] = K[6]
            steps += 1
            max_err = max(max_err, err)
            step_t.append(t)
            step_H.append(H(y))
            if t_eval is None:
                out_t.append(t)
                out_y.append(y.copy())
            fac = SAFETY * max(err, 1e-10) ** (-ALPHA) * err_prev ** BETA
            h *= min(MAX_FACTOR, max(MIN_FACTOR, fac))
            err_prev = max(err, 1e-4)
        else:
            rejections += 1
            h *= max(MIN_FACTOR, SAFETY * err ** (-ALPHA))

    return _assemble(system, out_t, out_y, step_t, step_H, monitors, n,
                     {"steps": steps, "rejections": rejections, "max_error_estimate": max_err,
                      "nfev": nfev}, complete=True)


def _assemble(system, out_t, out_y, step_t, step_H, monitors, n, stats, complete) -> Trajectory:
    Y = np.array(out_y).reshape(len(out_y), 2 * n)
    tt = np.array(out_t, dtype=float)
    q, v = Y[:, :n], Y[:, n:]
    Hm = np.array([system.hamiltonian(a, b) - system.energy for a, b in zip(q, v)])
    mons = {}
    for spec in monitors:
        mons[_name(spec)] = np.array([spec.evaluate(ti, a, b) for ti, a, b in zip(tt, q, v)])
    return Trajectory(tt, q, v, Hm, mons, np.array(step_t), np.array(step_H), stats, complete)


def _name(spec) -> str:
    return getattr(spec, "name", "") or getattr(spec, "family", "FI")


@dataclass(frozen=True)
class DriftReport:
    H_drift: float
    fi_drift: dict
    fi_initial: dict

    def relative(self, name: str) -> float:
        return self.fi_drift[name] / max(1.0, abs(self.fi_initial[name]))


def monitor_report(traj: Trajectory, qfis: Sequence = ()) -> DriftReport:
    """Max |I(t) - I(t0)| for each integral and max |H - E0| over the trajectory."""
    drift, initial = {}, {}
    for spec in qfis:
        vals = np.array([spec.evaluate(t, q, v) for t, q, v in zip(traj.t, traj.q, traj.qdot)])
        drift[_name(spec)] = float(np.max(np.abs(vals - vals[0])))
        initial[_name(spec)] = float(vals[0])
    H = np.concatenate([traj.H_minus_E0, traj.step_H_minus_E0])
    return DriftReport(float(np.max(np.abs(H))), drift, initial)


def quadrature(fn: Callable[[float], float], interval: tuple[float, float], tol: float = 1e-10) -> float:
    """Adaptive Gauss-Kronrod integral of ``fn`` over ``interval``."""
    a, b = interval
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", sp_integrate.IntegrationWarning)
        try:
            val, err = sp_integrate.quad(fn, a, b, epsabs=tol, epsrel=tol, limit=500)
        except sp_integrate.IntegrationWarning as exc:
            raise NonConvergent(str(exc)) from exc
    if not np.isfinite(val) or err > 100 * tol * max(1.0, abs(val)):
        raise NonConvergent(f"quadrature error estimate {err:.2e} exceeds tolerance")
    return float(val)
