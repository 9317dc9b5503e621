"""Exterior-energy machinery and the soliton-resolution diagnostic.

The exterior picture: ``u_e = (<r>/r)^((d-1)/2) u`` solves a radial wave
equation on R^(1+d) with decaying perturbations ``V_e, F_e, G_e``.  Radial
free waves in odd ``d`` emit at least half of ``||pi_R^perp (f, g)||^2``
into ``{r >= R + |t|}`` in one time direction, where ``pi_R`` projects onto

    P(R) = span{(r^(2i-d), 0), (0, r^(2j-d))},  i <= floor((d+2)/4), j <= floor(d/4)

in ``H(r >= R) = H(r >= R; r^(d-1) dr)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import make_interp_spline

from .errors import ConditioningWarning, DomainError, DomainTooSmall, InvalidArgument
from .evolve import PINNED, FlowKind, FlowSpec, Monitors, evolve, time_step
from .harmonic import HarmonicMap, nonlinear_terms, potential_V
from .model import FieldState, Form, ModelParams, RadialGrid, ddx, make_grid, norm_window

COND_WARN = 1e10
TOL_CERT = 0.05


# -- u_e and the exterior coefficients ----------------------------------------------------


def conformal_factor(r, d):
    """``(<r>/r)^((d-1)/2)``."""
    r = np.asarray(r, dtype=float)
    return (np.sqrt(1.0 + r * r) / r) ** ((d - 1) / 2)


def u_to_ue(u_state: FieldState, r_min: float | None = None) -> FieldState:
    """``u_e`` on the grid nodes with ``r > max(0, r_min)``."""
    if u_state.form is not Form.U:
        raise InvalidArgument("u_to_ue expects a u-form state")
    if u_state.offset != 0:
        raise InvalidArgument("u state must live on the full grid")
    if r_min is not None and r_min <= 0:
        raise DomainError("u_e is defined only for r > 0")
    grid = u_state.grid
    lo = 0.0 if r_min is None else r_min
    offset = int(np.searchsorted(grid.r, lo, side="right"))
    if offset >= grid.n_points:
        raise DomainError(f"no grid nodes with r > {lo}")
    fac = conformal_factor(grid.r[offset:], u_state.params.dim)
    return FieldState(fac * u_state.f[offset:], fac * u_state.g[offset:], u_state.time, Form.UE,
                      u_state.params, grid, offset=offset)


@dataclass(frozen=True, eq=False)
class ExteriorCoefficients:
    """``V_e`` sampled on ``r > 0`` nodes plus pointwise ``F_e``, ``G_e``."""

    params: ModelParams
    r: np.ndarray
    V_e: np.ndarray
    V: np.ndarray
    sin2Q: np.ndarray
    cos2Q: np.ndarray
    offset: int

    def _split(self, u_e):
        d = self.params.dim
        fac = conformal_factor(self.r, d)
        u = np.asarray(u_e, dtype=float) / fac
        F, G = nonlinear_terms(np.sqrt(1 + self.r**2), self.sin2Q, self.cos2Q, self.params.ell, u)
        return fac * F, fac * G

    def F_e(self, u_e):
        return self._split(u_e)[0]

    def G_e(self, u_e):
        return self._split(u_e)[1]


def exterior_potential(V, r, d):
    br2 = 1.0 + r * r
    return V - (d - 1) * (d - 4) / 2.0 / (r * r * br2) + (d - 1) * (d - 5) / 4.0 / (r * r * br2**2)


def exterior_coefficients(params: ModelParams, Q_map: HarmonicMap) -> ExteriorCoefficients:
    if Q_map.params != params:
        raise InvalidArgument("params mismatch")
    grid = Q_map.grid
    off = grid.center + 1
    r = grid.r[off:]
    V = potential_V(Q_map)[off:]
    s2, c2, _ = Q_map.trig()
    return ExteriorCoefficients(params, r, exterior_potential(V, r, params.dim), V,
                                s2[off:], c2[off:], off)


def _loglog_slope(r, y):
    ok = (y > 0) & np.isfinite(y)
    if ok.sum() < 3:
        return math.nan
    return float(np.polyfit(np.log(r[ok]), np.log(y[ok]), 1)[0])


def envelope_slopes(Q_map: HarmonicMap, r_lo: float = 20.0, r_hi: float | None = None,
                    z_samples=None):
    """Fitted log-log tail slopes of the bound envelopes, with the stated exponents.

    Envelopes are suprema over ``u`` of ``|term| / |u|^p``, sampled with
    ``<r>^ell u = z`` on a log-spaced set of bounded ``z``.
    """
    p = Q_map.params
    ell, d, a = p.ell, p.dim, p.coupling
    ext = exterior_coefficients(p, Q_map)
    r = ext.r
    if r_hi is None:
        r_hi = r[-1] / 10
    sel = (r >= r_lo) & (r <= r_hi)
    r, br = r[sel], np.sqrt(1 + r[sel] ** 2)
    s2, c2 = ext.sin2Q[sel], ext.cos2Q[sel]
    V_e = ext.V_e[sel]
    # V - ell^2/<r>^4 straight from sin^2 Q, free of cancellation
    dV = 2.0 * a * Q_map.trig()[2][ext.offset:][sel] / br**2
    fac = conformal_factor(r, d)
    z = np.geomspace(1e-3, 1.0, 13) if z_samples is None else np.asarray(z_samples)
    envF0, envG, envFe, envGe, envF = (np.zeros(r.size) for _ in range(5))
    for zz in z:
        u = zz / br**ell
        F, G = nonlinear_terms(br, s2, c2, ell, u)
        F0 = F - a * br ** (ell - 2) * s2 * u**2
        envF = np.maximum(envF, np.abs(F) / u**2)
        envF0 = np.maximum(envF0, np.abs(F0) / u**4)
        envG = np.maximum(envG, np.abs(G) / u**3)
        ue = fac * u
        envFe = np.maximum(envFe, np.abs(fac * F) / ue**2)
        envGe = np.maximum(envGe, np.abs(fac * G) / ue**3)
    rows = {
        "V - ell^2/<r>^4": (_loglog_slope(r, dV), -2 * ell - 4),
        "F": (_loglog_slope(r, envF), -3),
        "F_0": (_loglog_slope(r, envF0), 2 * ell - 3),
        "G": (_loglog_slope(r, envG), 2 * ell - 2),
        "V_e": (_loglog_slope(r, np.abs(V_e)), -4),
        "F_e": (_loglog_slope(r, envFe), -3),
        "G_e": (_loglog_slope(r, envGe), d - 5),
    }
    return rows


# -- projection constants ------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionBasisInfo:
    d: int
    k_tilde: int
    k: int
    c: tuple
    d_coef: tuple

    def check_relations(self) -> bool:
        ell = (self.d - 3) // 2
        if ell % 2 == 0:
            return self.d == 4 * self.k_tilde - 1 and self.k_tilde == self.k + 1
        return self.k == self.k_tilde == (ell + 1) // 2 and self.d == 4 * self.k + 1


def _prod(it):
    out = Fraction(1)
    for v in it:
        out *= v
    return out


def projection_constants(d: int) -> ProjectionBasisInfo:
    if int(d) != d or d % 2 == 0 or d < 3:
        raise InvalidArgument(f"d must be an odd integer >= 3, got {d!r}")
    d = int(d)
    kt, k = (d + 2) // 4, d // 4
    c = tuple(
        _prod(Fraction(d - 2 * j - 2 * l) for l in range(1, k + 1))
        / _prod(Fraction(2 * l - 2 * j) for l in range(1, k + 1) if l != j)
        for j in range(1, k + 1)
    )
    dc = tuple(
        _prod(Fraction(d + 2 - 2 * j - 2 * l) for l in range(1, kt + 1))
        / _prod(Fraction(2 * l - 2 * j) for l in range(1, kt + 1) if l != j)
        for j in range(1, kt + 1)
    )
    return ProjectionBasisInfo(d, kt, k, c, dc)


def gram_matrices(d: int, R: float):
    """Exact Gram matrices of the f-basis ``r^(2i-d)`` and g-basis ``r^(2j-d)`` in H(r >= R)."""
    info = projection_constants(d)
    i = np.arange(1, info.k_tilde + 1)[:, None]
    j = np.arange(1, info.k_tilde + 1)[None, :]
    Gf = (2 * i - d) * (2 * j - d) * R ** (2 * i + 2 * j - d - 2) / (d + 2 - 2 * i - 2 * j)
    i = np.arange(1, info.k + 1)[:, None]
    j = np.arange(1, info.k + 1)[None, :]
    Gg = R ** (2 * i + 2 * j - d) / (d - 2 * i - 2 * j)
    return Gf.astype(float), Gg.astype(float)


def _normalized_cond(G):
    if G.size == 0:
        return 1.0
    s = 1.0 / np.sqrt(np.diag(G))
    return float(np.linalg.cond(G * s[:, None] * s[None, :]))


# -- projections ---------------------------------------------------------------------------


@dataclass
class ProjectionReport:
    R: float
    t: float
    lam: np.ndarray
    mu: np.ndarray
    norm_pi: float
    norm_pi_perp: float
    norm_total: float
    lam_gram: np.ndarray
    mu_gram: np.ndarray
    agreement: float
    condition: float
    tail_flag: bool = False

    @property
    def split_defect(self) -> float:
        """``|pi^2 + perp^2 - total^2| / total^2``."""
        tot = self.norm_total**2
        if tot == 0:
            return 0.0
        return abs(self.norm_pi**2 + self.norm_pi_perp**2 - tot) / tot

    def to_dict(self):
        return {
            "R": self.R, "t": self.t, "lambda": list(map(float, self.lam)),
            "mu": list(map(float, self.mu)), "lambda_gram": list(map(float, self.lam_gram)),
            "mu_gram": list(map(float, self.mu_gram)), "norm_pi": self.norm_pi,
            "norm_pi_perp": self.norm_pi_perp, "norm_total": self.norm_total,
            "agreement": self.agreement, "condition": self.condition,
            "tail_flag": self.tail_flag,
        }


class _Integrator:
    """``int_a^b`` and ``int_a^inf`` of smooth functions by adaptive quadrature on
    geometric panels, optionally with an analytic power-law tail beyond ``r_max``."""

    def __init__(self, R, r_max=math.inf, panels=None):
        self.R = R
        self.r_max = r_max
        if panels is None:
            top = r_max if math.isfinite(r_max) else 64 * R
            edges = [R]
            while edges[-1] * 1.5 < top:
                edges.append(edges[-1] * 1.5)
            edges.append(top)
            panels = edges
        self.edges = np.asarray(panels, dtype=float)
        self.tail_flag = False

    def __call__(self, fn):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            return self._integrate(fn)

    def _integrate(self, fn):
        total = 0.0
        for a, b in zip(self.edges[:-1], self.edges[1:]):
            total += quad(fn, a, b, epsabs=0.0, epsrel=1e-13, limit=200)[0]
        top = self.edges[-1]
        if not math.isfinite(self.r_max):
            total += quad(fn, top, math.inf, epsabs=1e-300, epsrel=1e-13, limit=400)[0]
        else:
            total += self._tail(fn, top)
        return total

    def _tail(self, fn, top):
        # power-law fit on the last decade
        rs = np.geomspace(top / 10, top, 16)
        ys = np.array([fn(r) for r in rs])
        if np.all(ys == 0):
            return 0.0
        if not (np.all(ys > 0) or np.all(ys < 0)):
            self.tail_flag = True
            return 0.0
        p, logc = np.polyfit(np.log(rs), np.log(np.abs(ys)), 1)
        if p >= -1:
            self.tail_flag = True
            return 0.0
        return float(np.sign(ys[-1]) * math.exp(logc) * top ** (p + 1) / -(p + 1))


def _projection(f, fr, g, d, R, integ: _Integrator, t=0.0):
    info = projection_constants(d)
    kt, k = info.k_tilde, info.k
    dd = [float(v) for v in info.d_coef]
    cc = [float(v) for v in info.c]

    # (a) integral formulas
    If = [integ(lambda s, i=i: f(s) * s ** (2 * i - 1)) for i in range(1, kt)]
    lam = np.array([
        dd[j - 1] / (d - 2 * j) * (
            f(R) * R ** (d - 2 * j)
            + sum(2 * i * dd[i] * R ** (d - 2 * i - 2 * j) / (d - 2 * i - 2 * j) * If[i - 1]
                  for i in range(1, kt))
        )
        for j in range(1, kt + 1)
    ])
    Ig = [integ(lambda s, i=i: g(s) * s ** (2 * i - 1)) for i in range(1, k + 1)]
    mu = np.array([
        sum(R ** (d - 2 * i - 2 * j) * cc[i - 1] * cc[j - 1] / (d - 2 * i - 2 * j) * Ig[i - 1]
            for i in range(1, k + 1))
        for j in range(1, k + 1)
    ])

    # (b) Gram projection from H(r >= R) inner products
    Gf, Gg = gram_matrices(d, R)
    bf = np.array([integ(lambda s, i=i: fr(s) * (2 * i - d) * s ** (2 * i - 2))
                   for i in range(1, kt + 1)])
    bg = np.array([integ(lambda s, j=j: g(s) * s ** (2 * j - 1)) for j in range(1, k + 1)])
    lam_g = np.linalg.solve(Gf, bf) if kt else np.zeros(0)
    mu_g = np.linalg.solve(Gg, bg) if k else np.zeros(0)
    cond = max(_normalized_cond(Gf), _normalized_cond(Gg))
    if cond > COND_WARN:
        warnings.warn(f"Gram matrix condition number {cond:.2e}", ConditioningWarning, stacklevel=3)

    norm_pi2 = float(lam_g @ Gf @ lam_g + (mu_g @ Gg @ mu_g if k else 0.0))
    total2 = integ(lambda s: (fr(s) ** 2 + g(s) ** 2) * s ** (d - 1))

    def perp_density(s):
        pf = fr(s) - sum(lam_g[i - 1] * (2 * i - d) * s ** (2 * i - d - 1) for i in range(1, kt + 1))
        pg = g(s) - sum(mu_g[j - 1] * s ** (2 * j - d) for j in range(1, k + 1))
        return (pf * pf + pg * pg) * s ** (d - 1)

    perp2 = integ(perp_density)
    scale = max(np.max(np.abs(np.concatenate([lam_g, mu_g]))) if kt + k else 0.0, 1e-300)
    agreement = float(np.max(np.abs(np.concatenate([lam - lam_g, mu - mu_g]))) / scale) \
        if kt + k else 0.0
    return ProjectionReport(R, t, lam, mu, math.sqrt(max(norm_pi2, 0.0)),
                            math.sqrt(max(perp2, 0.0)), math.sqrt(max(total2, 0.0)),
                            lam_g, mu_g, agreement, cond, integ.tail_flag)


def project_exterior_fn(f, g, d: int, R: float, fr=None, r_max: float = math.inf,
                        panels=None, t: float = 0.0) -> ProjectionReport:
    """Projection of callable data ``(f, g)`` (functions of ``r``) onto ``P(R)``.

    ``fr`` is ``f'``; if omitted it is taken by a centered difference.
    """
    if not R > 0:
        raise InvalidArgument("R must be positive")
    if fr is None:
        def fr(s, f=f):
            h = 1e-4 * max(1.0, s)
            return (-f(s + 2 * h) + 8 * f(s + h) - 8 * f(s - h) + f(s - 2 * h)) / (12 * h)
    return _projection(f, fr, g, d, R, _Integrator(R, r_max, panels), t)


def _spline_callables(state: FieldState):
    x = state.x
    kf = make_interp_spline(x, state.f, k=5)
    kg = make_interp_spline(x, state.g, k=5)
    dkf = kf.derivative()

    def f(s):
        return float(kf(math.asinh(s)))

    def fr(s):
        return float(dkf(math.asinh(s))) / math.sqrt(1.0 + s * s)

    def g(s):
        return float(kg(math.asinh(s)))

    return f, fr, g


def project_exterior(state_e: FieldState, R: float, d: int | None = None) -> ProjectionReport:
    """Projection of sampled data on ``r > 0`` (a u_e or flat state) onto ``P(R)``."""
    if state_e.form not in (Form.UE, Form.FLAT):
        raise InvalidArgument("project_exterior expects a u_e or flat state")
    d = state_e.params.dim if d is None else d
    sel_r = state_e.r
    if sel_r[0] > R or R >= sel_r[-1]:
        raise DomainError(f"R = {R} outside the sampled range")
    if state_e.offset == 0:
        off = int(np.searchsorted(state_e.r, 0.0, side="right"))
        state_e = FieldState(state_e.f[off:], state_e.g[off:], state_e.time, state_e.form,
                             state_e.params, state_e.grid, offset=off)
    f, fr, g = _spline_callables(state_e)
    r_max = float(state_e.r[-1])
    return _projection(f, fr, g, d, R, _Integrator(R, r_max), state_e.time)


def reconstruct(report: ProjectionReport, r, d):
    """``pi_R`` data at radii ``r`` from the Gram coefficients."""
    r = np.asarray(r, dtype=float)
    f = sum(c * r ** (2 * i - d) for i, c in enumerate(report.lam_gram, start=1))
    g = sum(c * r ** (2 * j - d) for j, c in enumerate(report.mu_gram, start=1))
    return f + 0 * r, g + 0 * r


# -- exterior energy -----------------------------------------------------------------------


def _window_energy(f, g, grid: RadialGrid, weight, lo, offset=0):
    """``int_{r >= lo} (f_r^2 + g^2) weight dr`` with the cut interpolated between nodes."""
    dx = grid.spacing
    x = grid.x[offset:]
    jac = grid.jacobian[offset:]
    fx = ddx(f, dx)
    dens = (fx**2 / jac**2 + g**2) * weight * jac
    # cumulative trapezoid from the right end
    seg = 0.5 * dx * (dens[1:] + dens[:-1])
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    xc = math.asinh(lo)
    if xc <= x[0]:
        return float(tail[0])
    if xc >= x[-1]:
        return 0.0
    i = int(np.searchsorted(x, xc) - 1)
    th = (xc - x[i]) / dx
    val_c = dens[i] + th * (dens[i + 1] - dens[i])
    return float(tail[i + 1] + 0.5 * (x[i + 1] - xc) * (val_c + dens[i + 1]))


def exterior_energy(state: FieldState, R: float, t_abs: float, Q_map: HarmonicMap | None = None,
                    flat_dim: int | None = None) -> float:
    """``||state||^2`` over ``{|r| >= R + t_abs}`` in the flow's natural measure.

    Flat and u_e states use ``r^(d-1)`` on ``r > 0``; psi (as ``psi - Q``) and
    linear states ``<r>^2``; u states ``<r>^(d-1)``.
    """
    grid = state.grid
    lo = R + t_abs
    if lo < 0:
        raise InvalidArgument("R + t_abs must be nonnegative")
    r = state.r
    if lo >= np.max(np.abs(r)):
        warnings.warn("exterior window is empty", stacklevel=2)
        return 0.0
    form = state.form
    if form in (Form.FLAT, Form.UE):
        d = flat_dim or state.params.dim
        w = np.abs(r) ** (d - 1) * (r > 0)
        return _window_energy(state.f, state.g, grid, w, lo, state.offset)
    f = np.asarray(state.f)
    if form is Form.PSI:
        if Q_map is None:
            raise InvalidArgument("psi states need Q_map")
        f = f - Q_map.Q
        p = 2
    elif form is Form.LINEAR:
        p = 2
    else:
        p = state.params.dim - 1
    w = state.jacobian**p
    right = _window_energy(f, state.g, grid, w, lo)
    # left end by reflection
    left = _window_energy(f[::-1], state.g[::-1], grid, w[::-1], lo)
    return right + left


# -- certification -------------------------------------------------------------------------


@dataclass
class CertificationRecord:
    d: int
    R: float
    T: float
    lhs: float
    rhs: float
    inf_forward: float
    inf_backward: float
    data_energy: float
    passed: bool
    tol_cert: float
    grid: dict
    projection: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)
    plateau_change: float = 0.0

    @property
    def margin(self) -> float:
        return self.lhs - 0.5 * self.rhs * (1 - self.tol_cert)

    def to_dict(self):
        return {
            "d": self.d, "R": self.R, "T": self.T, "lhs": self.lhs,
            "rhs_perp_norm_sq": self.rhs, "half_rhs": 0.5 * self.rhs,
            "inf_forward": self.inf_forward, "inf_backward": self.inf_backward,
            "data_energy": self.data_energy, "margin": self.margin,
            "result": "PASS" if self.passed else "FAIL", "tol_cert": self.tol_cert,
            "grid": self.grid, "projection": self.projection,
            "plateau_change": self.plateau_change,
        }


def certify_exterior_estimate(f, g, d: int, R: float, T: float, n_points: int = 2049,
                              half_width: float | None = None, fr=None, n_samples: int = 200,
                              static_tail: bool = False,
                              tol_cert: float = TOL_CERT) -> CertificationRecord:
    """Check the exterior energy lower bound for free flat waves from ``(f, g)``.

    ``f``, ``g`` are vectorized callables of ``r``, read on ``r >= R / 2``.
    The energy in ``{r >= R + |t|}`` depends only on the data on ``r >= R``,
    so nodes with ``r <= R`` are held at their data values.  The backward
    direction is the forward evolution of ``(f, -g)``.  ``static_tail`` allows
    data that do not decay by the outer edge (the pinned outer nodes then
    hold them fixed).
    """
    if not (R > 0 and T > 0):
        raise InvalidArgument("R and T must be positive")
    if half_width is None:
        half_width = math.asinh(2.0 * (R + T) + 10.0)
    grid = make_grid(half_width, n_points)
    r = grid.r
    read = r >= R / 2
    rs = np.where(read, r, R)
    f0 = np.where(read, f(rs), 0.0)
    g0 = np.where(read, g(rs), 0.0)
    if not (np.all(np.isfinite(f0)) and np.all(np.isfinite(g0))):
        raise InvalidArgument("data must be finite on r >= R/2")
    params = ModelParams(max(1, (d - 3) // 2), 0)
    flow = FlowSpec(FlowKind.FLAT, params, flat_dim=d, inner_radius=R)
    if R + T >= r[-PINNED - 1]:
        raise DomainTooSmall(f"exterior cone R + T = {R + T} leaves the grid (r_max = {r[-1]:.3g})")
    if not static_tail:
        amp = np.maximum(np.abs(f0), np.abs(g0))
        idx = np.flatnonzero(amp > 1e-12 * max(amp.max(), 1e-300))
        if idx.size and r[idx[-1]] + T >= r[-PINNED - 1]:
            raise DomainTooSmall("outgoing cone of the data reaches the outer boundary before T")

    cadence = T / n_samples
    times = tuple(cadence * m for m in range(n_samples + 1))
    mon = Monitors(cadence=cadence, snapshot_times=times, check_domain=False)

    def run(gsign):
        state = FieldState(f0, gsign * g0, 0.0, Form.FLAT, params, grid)
        log = evolve(flow, state, T, mon)
        return np.array([exterior_energy(s, R, s.time, flat_dim=d) for s in log.snapshots])

    e_fwd = run(1.0)
    e_bwd = run(-1.0) if np.any(g0 != 0) else e_fwd
    lhs = max(float(e_fwd.min()), float(e_bwd.min()))

    proj = project_exterior_fn(f, g, d, R, fr=fr)
    rhs = proj.norm_pi_perp**2
    state0 = FieldState(f0, g0, 0.0, Form.FLAT, params, grid)
    data_energy = exterior_energy(state0, R, 0.0, flat_dim=d)
    passed = lhs >= 0.5 * rhs * (1 - tol_cert)
    # how settled the inf is: relative change of the forward series over the last quarter
    q = len(e_fwd) * 3 // 4
    plateau = float((e_fwd[q] - e_fwd[-1]) / e_fwd[q]) if e_fwd[q] > 0 else 0.0
    return CertificationRecord(d, R, T, lhs, rhs, float(e_fwd.min()), float(e_bwd.min()),
                               data_energy, bool(passed), tol_cert, grid.to_dict(),
                               proj.to_dict(), {"t": list(times), "e_forward": e_fwd.tolist(),
                                                "e_backward": e_bwd.tolist()},
                               plateau)


def random_exterior_datum(rng: np.random.Generator, R: float):
    """Gaussian bumps ``(f, g, f')`` centred in ``[R + 0.5, R + 3]``."""
    a, b = rng.normal(size=2)
    cf, cg = R + rng.uniform(0.5, 3.0, size=2)
    wf, wg = rng.uniform(0.3, 0.8, size=2)

    def f(r):
        return a * np.exp(-(((r - cf) / wf) ** 2))

    def fr(r):
        return -2.0 * (r - cf) / wf**2 * f(r)

    def g(r):
        return b * np.exp(-(((r - cg) / wg) ** 2))

    return f, g, fr


def tail_datum(d: int, i: int = 1, velocity: bool = False):
    """The element ``(r^(2i-d), 0)`` of ``P(R)``, or ``(0, r^(2i-d))``."""
    p = 2 * i - d

    def h(r):
        return np.asarray(r, dtype=float) ** p

    def hr(r):
        return p * np.asarray(r, dtype=float) ** (p - 1)

    def zero(r):
        return 0.0 * np.asarray(r, dtype=float)

    return (zero, h, zero) if velocity else (h, zero, hr)


# -- soliton resolution diagnostic ---------------------------------------------------------


@dataclass
class ResolutionReport:
    extraction_times: list
    times: dict
    delta_series: dict
    local_times: np.ndarray
    local_energy_series: np.ndarray
    A: float
    radiation: str = "linear"

    def sup_delta(self):
        return {Tm: float(np.max(self.delta_series[Tm])) for Tm in self.extraction_times}

    def rows(self):
        out = []
        for Tm in self.extraction_times:
            for t, dlt in zip(self.times[Tm], self.delta_series[Tm]):
                k = int(np.argmin(np.abs(self.local_times - t)))
                out.append((Tm, t, dlt, self.local_energy_series[k]))
        return out


def _h2_norm(f, g, grid, lo=-math.inf, hi=math.inf):
    return norm_window(f, g, grid, grid.jacobian**2, lo, hi)


def resolution_diagnostic(psi_log, Q_map: HarmonicMap, extraction_times=(10.0, 20.0, 40.0),
                          A: float = 5.0, radiation: str = "linear") -> ResolutionReport:
    """Compare the psi-flow with linear radiation launched at each extraction time.

    ``psi_log`` must hold psi snapshots at the extraction times and on a
    common cadence up to the final time.
    """
    if radiation not in ("linear", "free"):
        raise InvalidArgument("radiation must be 'linear' or 'free'")
    snaps = sorted(psi_log.snapshots, key=lambda s: s.time)
    if not snaps:
        raise InvalidArgument("psi log has no snapshots")
    snap_t = np.array([s.time for s in snaps])
    grid = Q_map.grid
    params = Q_map.params
    t_end = snap_t[-1]
    ext = sorted(float(t) for t in extraction_times)
    for Tm in ext:
        if np.min(np.abs(snap_t - Tm)) > 1e-9 * max(1.0, Tm):
            raise InvalidArgument(f"no snapshot at extraction time {Tm}")
        if Tm >= t_end:
            raise InvalidArgument(f"extraction time {Tm} leaves no comparison window")

    local = np.array([_h2_norm(s.f - Q_map.Q, s.g, grid, -A, A) for s in snaps])
    ell = params.ell
    jl = grid.jacobian**ell
    times, deltas = {}, {}
    for Tm in ext:
        k0 = int(np.argmin(np.abs(snap_t - Tm)))
        s0 = snaps[k0]
        later = snaps[k0:]
        later_t = tuple(s.time for s in later)
        phi, phit = s0.f - Q_map.Q, s0.g
        if radiation == "linear":
            flow = FlowSpec(FlowKind.LINEAR, params, Q_map)
            start = FieldState(phi, phit, s0.time, Form.LINEAR, params, grid, boundary_tol=1.0)
        else:
            flow = FlowSpec(FlowKind.FREE, params)
            start = FieldState(phi / jl, phit / jl, s0.time, Form.U, params, grid, boundary_tol=1.0)
        span = t_end - s0.time
        steps = np.diff(np.array(later_t))
        cadence = float(np.min(steps)) if steps.size else span
        log = evolve(flow, start, span,
                     Monitors(cadence=cadence, snapshot_times=later_t, check_domain=False),
                     dt=time_step(span, grid, cadence=cadence)[0])
        series = []
        for s, lin in zip(later, sorted(log.snapshots, key=lambda z: z.time)):
            lf, lg = (lin.f, lin.g) if radiation == "linear" else (jl * lin.f, jl * lin.g)
            series.append(_h2_norm(s.f - Q_map.Q - lf, s.g - lg, grid))
        times[Tm] = np.array(later_t)
        deltas[Tm] = np.array(series)
    return ResolutionReport(ext, times, deltas, snap_t, local, A, radiation)
