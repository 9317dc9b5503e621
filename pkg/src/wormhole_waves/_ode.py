"""Compiled fixed-step RK4 for the static equation in ``x = arcsinh r``:

    Q'' = -tanh(x) Q' + (c / 2) sin(2 Q),      c = ell (ell + 1).
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _accel(x, q, p, half_c):
    return -math.tanh(x) * p + half_c * math.sin(2.0 * q)


@njit(cache=True)
def rk4_static(q0, p0, x0, h, nsteps, half_c, upper, lower, stop):
    """Integrate from ``x0`` with step ``h`` (negative h integrates backward).

    With ``stop`` set, integration halts at the first step where
    ``q > upper`` or ``(p <= 0 and q < lower)``.  Returns ``(q, p, m)`` where
    ``m`` is the number of valid samples (``m - 1`` steps taken).  ``m`` is
    negated if a non-finite value appeared.
    """
    q = np.empty(nsteps + 1)
    p = np.empty(nsteps + 1)
    q[0] = q0
    p[0] = p0
    qc = q0
    pc = p0
    for i in range(nsteps):
        x = x0 + i * h
        k1q = pc
        k1p = _accel(x, qc, pc, half_c)
        k2q = pc + 0.5 * h * k1p
        k2p = _accel(x + 0.5 * h, qc + 0.5 * h * k1q, k2q, half_c)
        k3q = pc + 0.5 * h * k2p
        k3p = _accel(x + 0.5 * h, qc + 0.5 * h * k2q, k3q, half_c)
        k4q = pc + h * k3p
        k4p = _accel(x + h, qc + h * k3q, k4q, half_c)
        qc = qc + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        pc = pc + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        q[i + 1] = qc
        p[i + 1] = pc
        if not (math.isfinite(qc) and math.isfinite(pc)):
            return q, p, -(i + 2)
        if stop and (qc > upper or (pc <= 0.0 and qc < lower)):
            return q, p, i + 2
    return q, p, nsteps + 1
