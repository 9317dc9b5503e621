"""Harmonic maps ``Q_{ell,n}`` by shooting, prescribed-asymptotics solutions
``Q^+-_alpha``, and the potentials and nonlinearities built from ``Q``.

The static equation is integrated in ``x = arcsinh r``::

    Q'' + tanh(x) Q' - ell (ell + 1) / 2 * sin(2 Q) = 0.

Construction of ``Q_{ell,n}`` (n >= 1):

1. bisection on the slope ``b = Q'(0)`` with ``Q(0) = n pi / 2``, classifying
   every shot as undershoot or overshoot;
2. the far tail is produced by integrating the prescribed-asymptotics solution
   ``n pi - alpha r^(-ell-1)`` *backward* from ``x_end`` (the stable direction)
   and choosing ``alpha`` so that it meets the forward shot at ``x_match``;
3. the profile on ``x < 0`` follows from ``Q(-x) = n pi - Q(x)``.

The tail is carried as the defect ``w = n pi - Q`` so that it keeps full
relative precision far out.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._ode import rk4_static
from .errors import BracketFailure, IntegrationFailure, InvalidArgument, TailTooShort
from .model import ModelParams, RadialGrid, d2dx2, ddx

MARGIN = 0.1
CONV_TOL = 1e-6
BRACKET = (1e-6, 1e3)
SHOOT_HORIZON = 40.0
X_MATCH = 1.5
ALPHA_DRIFT_MAX = 1e-3


class ShotTag(str, enum.Enum):
    UNDERSHOOT = "undershoot"
    OVERSHOOT = "overshoot"
    CONVERGED = "converged"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True, eq=False)
class StaticTrajectory:
    """Samples of a static solution on a uniform lattice in ``x``.

    ``dev`` is ``Q - base`` kept separately so that values near ``base``
    retain relative precision.
    """

    x: np.ndarray
    Q: np.ndarray
    Qx: np.ndarray
    dev: np.ndarray
    base: float = 0.0


@dataclass(frozen=True)
class ShotOutcome:
    tag: ShotTag
    exit_x: float
    trajectory: StaticTrajectory


@dataclass(frozen=True, eq=False)
class HarmonicMap:
    params: ModelParams
    grid: RadialGrid
    Q: np.ndarray
    Qx: np.ndarray
    b_star: float
    alpha: float
    alpha_drift: float = 0.0
    tail: StaticTrajectory | None = None
    match_residual: float = 0.0
    x_end: float = 0.0
    settings: dict = field(default_factory=dict)
    bisection_history: tuple = ()

    @property
    def defect(self) -> np.ndarray:
        """Distance to the nearer end value: ``Q`` for ``x <= 0``, ``n pi - Q`` for ``x > 0``."""
        return np.where(self.grid.x <= 0, self.Q, self.Q[::-1])

    def trig(self):
        """``(sin 2Q, cos 2Q, sin^2 Q)`` evaluated from the defect."""
        e = self.defect
        sign = np.where(self.grid.x <= 0, 1.0, -1.0)
        return sign * np.sin(2 * e), np.cos(2 * e), np.sin(e) ** 2

    def to_manifest(self):
        return {
            "ell": self.params.ell, "degree": self.params.degree, "dim": self.params.dim,
            "b_star": self.b_star, "alpha": self.alpha, "alpha_drift": self.alpha_drift,
            "match_residual": self.match_residual, "x_end": self.x_end,
            "grid": self.grid.to_dict(), **self.settings,
        }


def _half_c(params):
    return 0.5 * params.coupling


def _lattice(grid, dx_ode):
    m = max(1, math.ceil(grid.spacing / dx_ode - 1e-12))
    return m, grid.spacing / m


def integrate_static(b, params: ModelParams, x_end: float, dx_ode: float = 1e-3,
                     stop_on_exit=False, margin=MARGIN) -> StaticTrajectory:
    """RK4 solution on ``[0, x_end]`` with ``Q(0) = n pi / 2``, ``Q'(0) = b``.

    With ``stop_on_exit`` the integration halts once the trajectory has been
    classified as an overshoot or undershoot.
    """
    if not x_end > 0:
        raise InvalidArgument("x_end must be positive")
    nsteps = max(1, math.ceil(x_end / dx_ode - 1e-12))
    h = x_end / nsteps
    npi = params.degree * math.pi
    q, p, m = rk4_static(
        0.5 * npi, float(b), 0.0, h, nsteps, _half_c(params), npi + margin, npi - margin,
        bool(stop_on_exit),
    )
    if m < 0:
        raise IntegrationFailure("non-finite value in static integration", exit_x=(-m - 2) * h)
    x = h * np.arange(m)
    return StaticTrajectory(x, q[:m], p[:m], q[:m] - npi, npi)


def classify_shot(trajectory: StaticTrajectory, params: ModelParams, margin=MARGIN,
                  conv_tol=CONV_TOL) -> ShotOutcome:
    if params.degree < 1:
        raise InvalidArgument("shot classification needs degree >= 1")
    npi = params.degree * math.pi
    q, p, x = trajectory.Q, trajectory.Qx, trajectory.x
    over = np.flatnonzero(q > npi + margin)
    under = np.flatnonzero((p <= 0) & (q < npi - margin))
    first_over = over[0] if over.size else None
    first_under = under[0] if under.size else None
    if first_over is not None and (first_under is None or first_over < first_under):
        return ShotOutcome(ShotTag.OVERSHOOT, float(x[first_over]), trajectory)
    if first_under is not None:
        return ShotOutcome(ShotTag.UNDERSHOOT, float(x[first_under]), trajectory)
    tag = ShotTag.CONVERGED if abs(q[-1] - npi) < conv_tol else ShotTag.INCONCLUSIVE
    return ShotOutcome(tag, float(x[-1]), trajectory)


def _shoot(b, params, h, horizon, margin):
    npi = params.degree * math.pi
    nsteps = math.ceil(horizon / h)
    q, p, m = rk4_static(0.5 * npi, b, 0.0, h, nsteps, _half_c(params), npi + margin,
                         npi - margin, True)
    if m < 0:
        raise IntegrationFailure("non-finite value while shooting", exit_x=(-m - 2) * h)
    if q[m - 1] > npi + margin:
        return ShotTag.OVERSHOOT
    if p[m - 1] <= 0 and q[m - 1] < npi - margin:
        return ShotTag.UNDERSHOOT
    return ShotTag.CONVERGED if abs(q[m - 1] - npi) < CONV_TOL else ShotTag.INCONCLUSIVE


def _tail_backward(amp, ell, half_c, x_from, h, nsteps):
    """Integrate ``y ~ amp r^(-ell-1)`` from ``x_from`` down by ``nsteps`` steps of ``h``."""
    s = math.sinh(x_from)
    y0 = amp * s ** (-ell - 1)
    p0 = -(ell + 1) * amp * s ** (-ell - 2) * math.cosh(x_from)
    y, p, m = rk4_static(y0, p0, x_from, -h, nsteps, half_c, 0.0, 0.0, False)
    if m < 0:
        raise IntegrationFailure("non-finite value in backward integration",
                                 exit_x=x_from - (-m - 2) * h)
    return y, p


def alpha_plateau(x, w, ell, x_end):
    """Plateau of ``A(r) = r^(ell+1) w`` over the last decade ``[r_end/10, r_end]``."""
    r = np.sinh(x)
    r_end = math.sinh(x_end)
    sel = (r >= r_end / 10) & (x <= x_end + 1e-12)
    if sel.sum() < 3:
        raise TailTooShort("no samples in the last decade of r")
    A = r[sel] ** (ell + 1) * w[sel]
    alpha = float(np.median(A))
    drift = float((A.max() - A.min()) / abs(alpha)) if alpha != 0 else math.inf
    return alpha, drift


def extract_alpha(Q_map: HarmonicMap) -> float:
    """Asymptotic coefficient ``alpha`` in ``Q = n pi - alpha r^(-ell-1) + ...``."""
    if Q_map.params.degree == 0:
        return 0.0
    tail = Q_map.tail
    alpha, drift = alpha_plateau(tail.x, -tail.dev, Q_map.params.ell, Q_map.x_end)
    if drift > ALPHA_DRIFT_MAX:
        raise TailTooShort(f"alpha plateau drift {drift:.2e}; increase x_end", drift=drift)
    return alpha


def mirror_plateau(Q_map: HarmonicMap) -> float:
    """Same plateau read off the grid's ``r < 0`` end, ``A = |r|^(ell+1) Q``."""
    g = Q_map.grid
    c = g.center
    x = -g.x[c::-1]
    w = Q_map.Q[c::-1]
    return alpha_plateau(x, w, Q_map.params.ell, float(x[-1]))[0]


def solve_Q(params: ModelParams, grid: RadialGrid, tol_b: float = 1e-12, x_end: float = 12.0,
            dx_ode: float = 1e-3, x_match: float = X_MATCH, margin: float = MARGIN) -> HarmonicMap:
    """Construct ``Q_{ell,n}`` sampled on ``grid``."""
    settings = {
        "tol_b": tol_b, "x_end": x_end, "dx_ode": dx_ode, "x_match": x_match, "margin": margin,
        "conv_tol": CONV_TOL, "bracket": list(BRACKET), "shoot_horizon": SHOOT_HORIZON,
        "integrator": "rk4-fixed",
    }
    n, ell = params.degree, params.ell
    N = grid.n_points
    if n == 0:
        z = np.zeros(N)
        return HarmonicMap(params, grid, z, z.copy(), 0.0, 0.0, x_end=x_end, settings=settings)

    m, h = _lattice(grid, dx_ode)
    npi = n * math.pi
    half_c = _half_c(params)

    lo, hi = BRACKET
    if _shoot(lo, params, h, SHOOT_HORIZON, margin) is not ShotTag.UNDERSHOOT or \
            _shoot(hi, params, h, SHOOT_HORIZON, margin) is not ShotTag.OVERSHOOT:
        raise BracketFailure(f"no undershoot/overshoot bracket in b in {BRACKET}")
    history = [(lo, hi)]
    while hi - lo > tol_b:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        tag = _shoot(mid, params, h, SHOOT_HORIZON, margin)
        if tag is ShotTag.OVERSHOOT:
            hi = mid
        elif tag is ShotTag.UNDERSHOOT:
            lo = mid
        else:
            lo = hi = mid
        history.append((lo, hi))
    b_star = 0.5 * (lo + hi)

    dx = grid.spacing
    i_m = max(1, int(round(x_match / dx)))
    i_t = math.ceil(max(x_end, grid.half_width) / dx - 1e-9)
    if i_t <= i_m:
        raise InvalidArgument("x_end must exceed x_match")
    x_m, x_t = i_m * dx, i_t * dx

    qf, pf, cnt = rk4_static(0.5 * npi, b_star, 0.0, h, i_m * m, half_c, 0.0, 0.0, False)
    if cnt < 0:
        raise IntegrationFailure("non-finite value in forward shot", exit_x=x_m)
    w_m, wx_m = npi - qf[-1], -pf[-1]
    nb = (i_t - i_m) * m

    def mismatch(a):
        return _tail_backward(a, ell, half_c, x_t, h, nb)[0][-1] - w_m

    a0 = w_m * math.sinh(x_m) ** (ell + 1)
    a_lo, a_hi = a0 / 2, a0 * 2
    for _ in range(60):
        if mismatch(a_lo) < 0 < mismatch(a_hi):
            break
        a_lo, a_hi = a_lo / 2, a_hi * 2
    else:
        raise BracketFailure("could not bracket the tail amplitude")
    a_seed = brentq(mismatch, a_lo, a_hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    wb, wxb = _tail_backward(a_seed, ell, half_c, x_t, h, nb)
    match_residual = float(wxb[-1] - wx_m)

    # fine lattice on [0, x_t]: forward part then the reversed tail
    xf = h * np.arange(i_m * m + 1)
    xb = x_t - h * np.arange(nb + 1)
    x_fine = np.concatenate([xf, xb[::-1][1:]])
    w_fine = np.concatenate([npi - qf, wb[::-1][1:]])
    wx_fine = np.concatenate([-pf, wxb[::-1][1:]])
    tail = StaticTrajectory(x_fine, npi - w_fine, -wx_fine, -w_fine, npi)

    c = grid.center
    j = np.arange(c + 1)
    w_nodes = w_fine[j * m]
    qx_nodes = -wx_fine[j * m]
    Q = np.empty(N)
    Qx = np.empty(N)
    Q[c:] = npi - w_nodes
    Q[:c + 1] = w_nodes[::-1]
    Q[c] = 0.5 * npi
    Qx[c:] = qx_nodes
    Qx[:c + 1] = qx_nodes[::-1]

    alpha, drift = alpha_plateau(x_fine, w_fine, ell, x_end)
    Q.setflags(write=False)
    Qx.setflags(write=False)
    settings.update({"lattice_step": h, "x_tail": x_t, "x_match_used": x_m, "alpha_seed": a_seed})
    return HarmonicMap(params, grid, Q, Qx, float(b_star), alpha, drift, tail, match_residual,
                       x_end, settings, tuple(history))


def solve_prescribed(alpha_target: float, side: str, params: ModelParams, x_end: float = 12.0,
                     dx_ode: float = 1e-3, grid: RadialGrid | None = None) -> StaticTrajectory:
    """Static solution with ``Q = n pi + alpha r^(-ell-1) + ...`` as ``r -> +inf`` (side '+')
    or ``Q = alpha |r|^(-ell-1) + ...`` as ``r -> -inf`` (side '-').

    Integrated from ``+-x_end`` toward the throat using only the leading term
    as seed.  With ``grid`` the lattice is aligned to the grid nodes.
    """
    if side not in ("+", "-"):
        raise InvalidArgument("side must be '+' or '-'")
    ell = params.ell
    if grid is not None:
        m, h = _lattice(grid, dx_ode)
        i_t = math.ceil(x_end / grid.spacing - 1e-9)
        x_t = i_t * grid.spacing
        nsteps = i_t * m
    else:
        nsteps = max(1, math.ceil(x_end / dx_ode - 1e-12))
        x_t = x_end
        h = x_t / nsteps
    if math.sinh(x_t) ** -2 > 1e-4:
        raise InvalidArgument("x_end too small for the leading-order seed")
    y, p = _tail_backward(float(alpha_target), ell, _half_c(params), x_t, h, nsteps)
    x = x_t - h * np.arange(nsteps + 1)
    y, p, x = y[::-1], p[::-1], x[::-1]
    base = params.degree * math.pi if side == "+" else 0.0
    if side == "-":
        return StaticTrajectory(-x[::-1], base + y[::-1], -p[::-1], y[::-1], base)
    return StaticTrajectory(x, base + y, p, y, base)


# -- potentials and nonlinearities ---------------------------------------------------------


def potential_V(Q_map: HarmonicMap) -> np.ndarray:
    """``V = ell^2 / <r>^4 + ell (ell+1) (cos 2Q - 1) / <r>^2``."""
    jac = Q_map.grid.jacobian
    _, _, s2 = Q_map.trig()
    ell = Q_map.params.ell
    return ell**2 / jac**4 - 2.0 * Q_map.params.coupling * s2 / jac**2


def linearized_potential(Q_map: HarmonicMap) -> np.ndarray:
    """``ell (ell+1) cos 2Q / <r>^2`` for the linearization of the psi equation."""
    _, c2, _ = Q_map.trig()
    return Q_map.params.coupling * c2 / Q_map.grid.jacobian**2


def _z_minus_sin(z):
    """``z - sin z`` without cancellation for small ``z``."""
    z = np.asarray(z, dtype=float)
    z2 = z * z
    series = z * z2 / 6.0 * (1.0 - z2 / 20.0 * (1.0 - z2 / 42.0 * (1.0 - z2 / 72.0)))
    return np.where(np.abs(z) < 0.05, series, z - np.sin(z))


def _z2_minus_sin2(z):
    """``z^2 - sin^2 z`` without cancellation for small ``z``."""
    z = np.asarray(z, dtype=float)
    z2 = z * z
    series = z2 * z2 / 3.0 - 2.0 * z2**3 / 45.0 + z2**4 / 315.0 - 2.0 * z2**5 / 14175.0
    return np.where(np.abs(z) < 0.05, series, z2 - np.sin(z) ** 2)


def nonlinear_terms(bracket_r, sin2Q, cos2Q, ell, u):
    """Pointwise ``(F, G)`` at radii with ``<r> = bracket_r``."""
    a = ell * (ell + 1)
    k = bracket_r**ell
    z = k * u
    pref = a * bracket_r ** (-ell - 2)
    F = pref * np.sin(z) ** 2 * sin2Q
    G = pref * _z_minus_sin(2 * z) * cos2Q / 2.0
    return F, G


def nonlinear_potential(bracket_r, sin2Q, cos2Q, ell, u):
    """``P(r, u) = int_0^u N(r, s) ds``."""
    a = ell * (ell + 1)
    z = bracket_r**ell * u
    return a * bracket_r ** (-2 * ell - 2) * (
        sin2Q * _z_minus_sin(2 * z) / 4.0 + cos2Q * _z2_minus_sin2(z) / 2.0
    )


def nonlinearity_parts(Q_map: HarmonicMap, u):
    s2, c2, _ = Q_map.trig()
    return nonlinear_terms(Q_map.grid.jacobian, s2, c2, Q_map.params.ell, np.asarray(u, float))


def nonlinearity_N(Q_map: HarmonicMap, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != Q_map.Q.shape:
        raise InvalidArgument("u is not sampled on the harmonic map grid")
    F, G = nonlinearity_parts(Q_map, u)
    return F + G


def quadratic_part_F(Q_map: HarmonicMap, u):
    """Leading term ``ell (ell+1) <r>^(ell-2) sin 2Q u^2`` of ``F``."""
    s2, _, _ = Q_map.trig()
    ell = Q_map.params.ell
    return Q_map.params.coupling * Q_map.grid.jacobian ** (ell - 2) * s2 * np.asarray(u) ** 2


# -- static u profiles ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StaticProfile:
    """``U_+`` on the grid nodes with ``r > 0`` (grid indices ``offset:``)."""

    U: np.ndarray
    offset: int
    residual: np.ndarray
    grid: RadialGrid

    @property
    def r(self):
        return self.grid.r[self.offset:]

    @property
    def residual_sup(self) -> float:
        return float(np.max(np.abs(self.residual)))


def static_u_family(alpha: float, Q_map: HarmonicMap, x_end: float | None = None,
                    dx_ode: float | None = None) -> StaticProfile:
    """``U_+ = <r>^(-ell) (Q^+_{alpha - alpha_{ell,n}} - Q)`` on ``r > 0``, with the
    residual of ``-Delta_g U + V U - N(r, U)`` evaluated by finite differences."""
    grid, params = Q_map.grid, Q_map.params
    ell = params.ell
    if x_end is None:
        x_end = max(Q_map.x_end, grid.half_width)
    if dx_ode is None:
        dx_ode = Q_map.settings.get("dx_ode", 1e-3)
    traj = solve_prescribed(alpha - Q_map.alpha, "+", params, x_end, dx_ode, grid=grid)
    m, _ = _lattice(grid, dx_ode)
    c = grid.center
    offset = c + 1
    nodes = np.arange(1, c + 1) * m
    # Q^+ - Q = (Q^+ - n pi) + (n pi - Q), both kept as small deviations
    diff = traj.dev[nodes] + Q_map.defect[offset:]
    jac = grid.jacobian[offset:]
    U = jac ** (-ell) * diff

    dx = grid.spacing
    Ux, Uxx = ddx(U, dx), d2dx2(U, dx)
    th = np.tanh(grid.x[offset:])
    lap = (Uxx + (params.dim - 2) * th * Ux) / jac**2
    V = potential_V(Q_map)[offset:]
    s2, c2, _ = Q_map.trig()
    F, G = nonlinear_terms(jac, s2[offset:], c2[offset:], ell, U)
    residual = -lap + V * U - (F + G)
    return StaticProfile(U, offset, residual, grid)
