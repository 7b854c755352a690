"""Independent reference computations shared by the test modules.

Everything here is derived from first principles (finite differences of the
Lagrangian, a Runge-Kutta reference integrator, closed-form curves) rather
than from the code under test, so agreement is meaningful.
"""

import math

import numpy as np

from myoarm.arm import ArmParams, ArmState, lagrangian, rk4_step


def fd_lagrangian_accel(th, w, tau, params: ArmParams, h=1e-6):
    """Joint accelerations from finite differences of the Lagrangian.

    Solves d/dt(dL/dw) - dL/dth = tau for the accelerations using central
    differences in extended precision. The step is deliberately small, so
    float64 would lose ~3 digits in the second differences; longdouble keeps
    the oracle comfortably below the comparison tolerance.
    """
    ld = np.longdouble
    h = ld(h)
    th = np.asarray(th, dtype=ld)
    w = np.asarray(w, dtype=ld)

    def lag(thv, wv):
        return lagrangian(thv[0], thv[1], wv[0], wv[1], params)

    def unit(i):
        e = np.zeros(2, dtype=ld)
        e[i] = h
        return e

    mass = np.empty((2, 2), dtype=ld)       # d2L/dw dw
    mixed = np.empty((2, 2), dtype=ld)      # d2L/dw dth (rows: dw_i, cols: dth_j)
    for i in range(2):
        for j in range(2):
            ei, ej = unit(i), unit(j)
            mass[i, j] = (lag(th, w + ei + ej) - lag(th, w + ei - ej)
                          - lag(th, w - ei + ej) + lag(th, w - ei - ej)) / (4 * h * h)
            mixed[i, j] = (lag(th + ej, w + ei) - lag(th + ej, w - ei)
                           - lag(th - ej, w + ei) + lag(th - ej, w - ei)) / (4 * h * h)
    grad = np.empty(2, dtype=ld)            # dL/dth
    for i in range(2):
        ei = unit(i)
        grad[i] = (lag(th + ei, w) - lag(th - ei, w)) / (2 * h)

    rhs = np.asarray(tau, dtype=ld) + grad - mixed @ w
    return np.linalg.solve(mass.astype(float), rhs.astype(float))


def rk4_reference(state: ArmState, tau, duration: float, params: ArmParams,
                  dt: float = 1e-5) -> ArmState:
    """High-resolution RK4 trajectory endpoint, used as ground truth."""
    n = round(duration / dt)
    for _ in range(n):
        state = rk4_step(state, tau, dt, params)
    return state


def energy_drift_rate(energies, dt: float):
    """Least-squares linear trend of an energy series, in units per second."""
    e = np.asarray(energies, dtype=float)
    t = dt * np.arange(len(e))
    return float(np.polyfit(t, e, 1)[0])


def activation_exact(a0: float, u: float, t: float, tau_act: float) -> float:
    """Closed-form response of da/dt = (u - a)/tau_act."""
    return u + (a0 - u) * math.exp(-t / tau_act)
