"""Geometry, grids, field states, norms and energies for equivariant wave maps
on the wormhole ``dr^2 + (r^2 + 1) dOmega^2``.

Everything is stored on a uniform grid in the compactified coordinate
``x = arcsinh(r)``.  Radial derivatives are ``d/dr = sech(x) d/dx`` and
``dr = cosh(x) dx``; ``<r>`` denotes ``sqrt(1 + r^2) = cosh(x)``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad, simpson

from .errors import (
    DecayWarning,
    EmptyWindowWarning,
    FormMismatch,
    GridMismatch,
    InvalidArgument,
)

BOUNDARY_TOL = 1e-8
DECAY_FLAG_RATIO = 1e-4
MIN_POINTS = 33


@dataclass(frozen=True)
class ModelParams:
    """Equivariance class ``ell`` and topological degree ``degree``."""

    ell: int
    degree: int = 0
    dim: int = field(init=False)

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise InvalidArgument(f"ell must be a positive integer, got {self.ell!r}")
        if int(self.degree) != self.degree or self.degree < 0:
            raise InvalidArgument(f"degree must be a nonnegative integer, got {self.degree!r}")
        object.__setattr__(self, "ell", int(self.ell))
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "dim", 2 * self.ell + 3)

    @property
    def coupling(self) -> int:
        """``ell (ell + 1)``, the coefficient of the angular term."""
        return self.ell * (self.ell + 1)

    def to_dict(self):
        return {"ell": self.ell, "degree": self.degree, "dim": self.dim}


class Form(str, enum.Enum):
    PSI = "psi"
    U = "u"
    UE = "ue"
    LINEAR = "linear"
    FLAT = "flat"


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    x: np.ndarray
    r: np.ndarray
    jacobian: np.ndarray
    half_width: float
    spacing: float

    @property
    def n_points(self) -> int:
        return len(self.x)

    @property
    def center(self) -> int:
        """Index of the throat ``x = 0``."""
        return len(self.x) // 2

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def same_as(self, other: "RadialGrid") -> bool:
        return (
            self is other
            or (self.n_points == other.n_points and self.half_width == other.half_width)
        )

    def check_same(self, other: "RadialGrid"):
        if not self.same_as(other):
            raise GridMismatch(
                f"grids differ: (X={self.half_width}, N={self.n_points}) vs "
                f"(X={other.half_width}, N={other.n_points})"
            )

    def to_dict(self):
        return {"half_width": self.half_width, "n_points": self.n_points}


def make_grid(half_width: float, n_points: int) -> RadialGrid:
    """Uniform grid on ``[-X, X]`` in ``x = arcsinh r`` with the throat at the center node."""
    if not half_width > 0 or not math.isfinite(half_width):
        raise InvalidArgument(f"half_width must be positive, got {half_width!r}")
    if int(n_points) != n_points or n_points % 2 == 0:
        raise InvalidArgument(f"n_points must be odd, got {n_points!r}")
    if n_points < MIN_POINTS:
        raise InvalidArgument(f"n_points must be at least {MIN_POINTS}, got {n_points}")
    n_points = int(n_points)
    c = n_points // 2
    half_width = float(half_width)
    k = np.arange(c + 1, dtype=float)
    xp = half_width * k / c
    rp = np.sinh(xp)
    jp = np.cosh(xp)
    x = np.concatenate([-xp[:0:-1], xp])
    r = np.concatenate([-rp[:0:-1], rp])
    jac = np.concatenate([jp[:0:-1], jp])
    return RadialGrid(_frozen(x), _frozen(r), _frozen(jac), half_width, half_width / c)


# -- finite differences -------------------------------------------------------

_D1_INTERIOR = (np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0, 2)
_D1_CLOSURE = (
    np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0,
    np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0,
)
_D2_INTERIOR = (np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0, 2)
_D2_CLOSURE = (
    np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0]) / 12.0,
    np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0]) / 12.0,
)


def _stencil_matrix(n, interior, closure, parity):
    coef, half = interior
    rows, cols, vals = [], [], []
    idx = np.arange(half, n - half)
    for k, c in enumerate(coef):
        if c != 0.0:
            rows.append(idx)
            cols.append(idx + k - half)
            vals.append(np.full(idx.size, c))
    for i, cl in enumerate(closure):
        m = np.arange(cl.size)
        rows += [np.full(cl.size, i), np.full(cl.size, n - 1 - i)]
        cols += [m, n - 1 - m]
        vals += [cl, parity * cl]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


@lru_cache(maxsize=64)
def first_derivative_matrix(n: int, dx: float) -> sp.csr_matrix:
    """4th-order d/dx: centered interior, one-sided at the two outermost nodes."""
    return _stencil_matrix(n, _D1_INTERIOR, _D1_CLOSURE, -1.0) / dx


@lru_cache(maxsize=64)
def second_derivative_matrix(n: int, dx: float) -> sp.csr_matrix:
    return _stencil_matrix(n, _D2_INTERIOR, _D2_CLOSURE, 1.0) / dx**2


def ddx(f, dx):
    f = np.asarray(f, dtype=float)
    return first_derivative_matrix(f.size, float(dx)) @ f


def d2dx2(f, dx):
    f = np.asarray(f, dtype=float)
    return second_derivative_matrix(f.size, float(dx)) @ f


def integrate_x(y, dx):
    """Composite Simpson rule in ``x``; 4th order, exact for cubics."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return 0.0
    return float(simpson(y, dx=dx))


# -- field states -------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FieldState:
    """Samples ``(f, g) = (field, time derivative)`` on ``grid[offset:]``.

    Only u_e states use a nonzero ``offset`` (they live on ``r > 0``).
    """

    f: np.ndarray
    g: np.ndarray
    time: float
    form: Form
    params: ModelParams
    grid: RadialGrid
    offset: int = 0
    boundary_tol: float = BOUNDARY_TOL

    def __post_init__(self):
        f = _frozen(self.f)
        g = _frozen(self.g)
        n = self.grid.n_points - self.offset
        if f.shape != (n,) or g.shape != (n,):
            raise GridMismatch(f"expected {n} samples, got f{f.shape} g{g.shape}")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise InvalidArgument("field samples must be finite")
        form = Form(self.form)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "form", form)
        object.__setattr__(self, "time", float(self.time))
        tol = self.boundary_tol
        if form is Form.PSI:
            npi = self.params.degree * math.pi
            if abs(f[0]) > tol or abs(f[-1] - npi) > tol:
                raise InvalidArgument(
                    f"psi boundary values ({f[0]:.3e}, {f[-1]:.6f}) not in degree-"
                    f"{self.params.degree} class within {tol:g}"
                )
        elif form in (Form.U, Form.LINEAR):
            if abs(f[0]) > tol or abs(f[-1]) > tol:
                raise InvalidArgument(f"{form.value} state does not vanish at +-X within {tol:g}")

    @property
    def x(self):
        return self.grid.x[self.offset:]

    @property
    def r(self):
        return self.grid.r[self.offset:]

    @property
    def jacobian(self):
        return self.grid.jacobian[self.offset:]

    def replace(self, **changes):
        kw = dict(
            f=self.f, g=self.g, time=self.time, form=self.form, params=self.params,
            grid=self.grid, offset=self.offset, boundary_tol=self.boundary_tol,
        )
        kw.update(changes)
        return FieldState(**kw)


def _require_form(state, *forms):
    if state.form not in forms:
        names = ", ".join(f.value for f in forms)
        raise FormMismatch(f"expected form in {{{names}}}, got {state.form.value}")


@dataclass(frozen=True)
class EnergyReport:
    total: float
    kinetic: float
    gradient: float
    potential_part: float
    measure: str  # "dim3" or "dimD"

    def to_dict(self):
        return {
            "total": self.total, "kinetic": self.kinetic, "gradient": self.gradient,
            "potential_part": self.potential_part, "measure": self.measure,
        }


def quadratic_energy(state, potential, weight_power, measure="dimD"):
    """``1/2 int (g^2 + f_r^2 + potential f^2) <r>^weight_power dr``."""
    dx = state.grid.spacing
    jac = state.jacobian
    fx = ddx(state.f, dx)
    w_kin = jac ** (weight_power + 1)
    kinetic = 0.5 * integrate_x(state.g**2 * w_kin, dx)
    gradient = 0.5 * integrate_x(fx**2 * jac ** (weight_power - 1), dx)
    if potential is None:
        pot = 0.0
    else:
        potential = np.asarray(potential, dtype=float)
        if potential.shape != state.f.shape:
            raise GridMismatch("potential is not sampled on the state grid")
        pot = 0.5 * integrate_x(potential * state.f**2 * w_kin, dx)
    return EnergyReport(kinetic + gradient + pot, kinetic, gradient, pot, measure)


def energy_psi(state: FieldState) -> EnergyReport:
    """Conserved energy ``E_ell`` of the azimuth angle ``psi``."""
    _require_form(state, Form.PSI)
    dx = state.grid.spacing
    jac = state.jacobian
    fx = ddx(state.f, dx)
    kinetic = 0.5 * integrate_x(state.g**2 * jac**3, dx)
    gradient = 0.5 * integrate_x(fx**2 * jac, dx)
    pot = 0.5 * state.params.coupling * integrate_x(np.sin(state.f) ** 2 * jac, dx)
    return EnergyReport(kinetic + gradient + pot, kinetic, gradient, pot, "dim3")


def energy_u(state: FieldState, V) -> EnergyReport:
    """Quadratic energy ``E_V`` in the measure ``<r>^(d-1) dr``."""
    _require_form(state, Form.U)
    return quadratic_energy(state, V, state.params.dim - 1, "dimD")


def _decay_check(f):
    scale = np.max(np.abs(f)) if f.size else 0.0
    if scale > 0 and max(abs(f[0]), abs(f[-1])) > DECAY_FLAG_RATIO * scale:
        warnings.warn("field does not decay at the grid ends", DecayWarning, stacklevel=3)
        return False
    return True


def norm_H(state: FieldState, weight_power: int, r_min: float = -math.inf) -> float:
    """``(int_{r >= r_min} [f_r^2 + g^2] <r>^weight_power dr)^(1/2)``.

    The cutoff is applied at grid resolution.  An empty window returns 0 and
    emits :class:`EmptyWindowWarning`.
    """
    if weight_power < 0:
        raise InvalidArgument("weight_power must be nonnegative")
    dx = state.grid.spacing
    fx = ddx(state.f, dx)
    mask = state.r >= r_min
    if mask.sum() < 2:
        warnings.warn(f"no grid points with r >= {r_min}", EmptyWindowWarning, stacklevel=2)
        return 0.0
    jac = state.jacobian[mask]
    val = integrate_x(fx[mask] ** 2 * jac ** (weight_power - 1), dx) + integrate_x(
        state.g[mask] ** 2 * jac ** (weight_power + 1), dx
    )
    return math.sqrt(max(val, 0.0))


def norm_window(f, g, grid, weight, lo=-math.inf, hi=math.inf, offset=0):
    """Same integrand as :func:`norm_H` over ``lo <= r <= hi`` with an arbitrary
    weight array (already evaluated on the samples)."""
    dx = grid.spacing
    r = grid.r[offset:]
    jac = grid.jacobian[offset:]
    fx = ddx(f, dx)
    mask = (r >= lo) & (r <= hi)
    if mask.sum() < 2:
        return 0.0
    integrand = (fx[mask] ** 2 / jac[mask] ** 2 + g[mask] ** 2) * weight[mask] * jac[mask]
    return math.sqrt(max(integrate_x(integrand, dx), 0.0))


# -- psi <-> u ------------------------------------------------------------------


def _check_Q(state, Q_map):
    if state.params != Q_map.params:
        raise InvalidArgument(f"params mismatch: {state.params} vs {Q_map.params}")
    state.grid.check_same(Q_map.grid)


def psi_to_u(psi_state: FieldState, Q_map) -> FieldState:
    """``u = <r>^(-ell) (psi - Q)``, ``u_t = <r>^(-ell) psi_t``."""
    _require_form(psi_state, Form.PSI)
    _check_Q(psi_state, Q_map)
    s = psi_state.jacobian ** (-psi_state.params.ell)
    return psi_state.replace(f=s * (psi_state.f - Q_map.Q), g=s * psi_state.g, form=Form.U)


def u_to_psi(u_state: FieldState, Q_map) -> FieldState:
    _require_form(u_state, Form.U)
    _check_Q(u_state, Q_map)
    s = u_state.jacobian ** u_state.params.ell
    return u_state.replace(f=Q_map.Q + s * u_state.f, g=s * u_state.g, form=Form.PSI)


# -- Strauss and Hardy ------------------------------------------------------------

HARDY_CONSTANT = 4.0


@lru_cache(maxsize=None)
def strauss_constant(weight_power: int) -> float:
    """Sharp constant ``C`` in ``|f(r)| <r>^((p-1)/2) <= C ||f_r||_{L^2(<r>^p dr)}``.

    From ``|f(r)|^2 <= ||f_r||^2 int_|r|^inf <s>^(-p) ds``; the supremum of
    ``<r>^(p-1) int_r^inf <s>^(-p) ds`` is taken over a dense set of ``r``.
    """
    p = weight_power

    def h(r):
        tail = quad(lambda s: (1.0 + s * s) ** (-p / 2), r, np.inf, epsabs=0, epsrel=1e-12)[0]
        return (1.0 + r * r) ** ((p - 1) / 2) * tail

    rs = np.concatenate([[0.0], np.geomspace(1e-3, 1e4, 400)])
    return math.sqrt(max(h(r) for r in rs))


@dataclass(frozen=True)
class StraussHardyReport:
    strauss_psi: float
    strauss_u: float
    hardy_psi: float
    hardy_u: float
    constants: dict

    def ratios(self):
        return {
            "strauss_psi": self.strauss_psi, "strauss_u": self.strauss_u,
            "hardy_psi": self.hardy_psi, "hardy_u": self.hardy_u,
        }

    @property
    def ok(self) -> bool:
        return all(v <= self.constants[k] for k, v in self.ratios().items())


def strauss_hardy_report(f, params: ModelParams, grid: RadialGrid) -> StraussHardyReport:
    """Ratios LHS/RHS of the two Strauss and two Hardy bounds for one radial profile.

    The same samples play the role of ``varphi`` (weight ``<r>^2``) and of
    ``u`` (weight ``<r>^(d-1)``).
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.x.shape:
        raise GridMismatch("samples are not on the grid")
    _decay_check(f)
    d = params.dim
    dx = grid.spacing
    jac = grid.jacobian
    fx = ddx(f, dx)

    def grad_sq(p):
        return integrate_x(fx**2 * jac ** (p - 1), dx)

    def ratio(num, den):
        if num == 0.0:
            return 0.0
        return num / den if den > 0 else math.inf

    g2, gd = grad_sq(2), grad_sq(d - 1)
    sup_psi = float(np.max(np.abs(f) * jac**0.5))
    sup_u = float(np.max(np.abs(f) * jac ** ((d - 2) / 2)))
    hardy_psi = integrate_x(f**2 * jac, dx)
    hardy_u = integrate_x(f**2 * jac ** (d - 2), dx)
    constants = {
        "strauss_psi": strauss_constant(2),
        "strauss_u": strauss_constant(d - 1),
        "hardy_psi": HARDY_CONSTANT,
        "hardy_u": HARDY_CONSTANT,
    }
    return StraussHardyReport(
        strauss_psi=ratio(sup_psi, math.sqrt(g2)),
        strauss_u=ratio(sup_u, math.sqrt(gd)),
        hardy_psi=ratio(hardy_psi, g2),
        hardy_u=ratio(hardy_u, gd),
        constants=constants,
    )


def norm_equivalence_band(ell: int) -> tuple:
    """Two-sided band for ``||(u, u_t)||_{H, d-1} / ||(psi - Q, psi_t)||_{H, 2}``.

    ``varphi_r = <r>^ell u_r + ell r <r>^(ell-2) u`` together with the Hardy
    bound (constant 4) gives ``||.||^2`` comparable with constant ``2 + 8 ell^2``
    in both directions.
    """
    c = math.sqrt(2.0 + 8.0 * ell**2)
    return 1.0 / c, c
