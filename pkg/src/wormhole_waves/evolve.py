"""Method-of-lines evolution of the five radial flows.

All operators act in ``x = arcsinh r``.  For a measure ``<r>^p dr`` the
radial wave operator is::

    <r>^-p d_r(<r>^p d_r f) = sech^2(x) (f_xx + (p - 1) tanh(x) f_x)

so ``p = 2`` for the psi-equation and the linearized flow, ``p = d - 1`` for
the u-equation and the free wave on the d-dimensional wormhole.  The flat
radial wave in R^(1+d) is ``sech^2 (v_xx + ((d-1) coth x - tanh x) v_x)``; on
the full line it evolves the even extension ``v(-r) = v(r)``.

Time stepping is classical RK4 on ``(f, g) = (field, time derivative)`` with
``dt <= cfl_max * dx`` (the wave speed in ``x`` is ``sech x <= 1``).  The two
outermost nodes at each end hold their initial values; runs are sized so that
no signal reaches them.
"""

from __future__ import annotations

import enum
import math
import time as _time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import (
    BlowupError,
    DomainTooSmall,
    FormMismatch,
    InvalidArgument,
    RejectedStep,
)
from .harmonic import HarmonicMap, linearized_potential, nonlinear_potential, nonlinear_terms, potential_V
from .model import (
    EnergyReport,
    FieldState,
    Form,
    ModelParams,
    RadialGrid,
    first_derivative_matrix,
    integrate_x,
    make_grid,
    second_derivative_matrix,
)

CFL_MAX = 0.8
PINNED = 2
SPONGE_FRACTION = 0.1


class FlowKind(str, enum.Enum):
    PSI = "psi"
    U = "u"
    LINEAR = "linear"
    FREE = "free"
    FLAT = "flat"


FORM_OF = {
    FlowKind.PSI: Form.PSI,
    FlowKind.U: Form.U,
    FlowKind.LINEAR: Form.LINEAR,
    FlowKind.FREE: Form.U,
    FlowKind.FLAT: Form.FLAT,
}


@dataclass(frozen=True, eq=False)
class FlowSpec:
    """Which PDE to evolve.

    ``balanced`` (psi-flow only) subtracts the discrete residual of ``Q`` so
    that ``(Q, 0)`` is an exact discrete equilibrium.  ``inner_radius``
    (flat flow only) imposes a homogeneous Dirichlet wall at that radius;
    otherwise the flat flow runs on the full line with even data.
    """

    kind: FlowKind
    params: ModelParams
    Q_ref: HarmonicMap | None = None
    flat_dim: int | None = None
    inner_radius: float | None = None
    balanced: bool = False

    def __post_init__(self):
        kind = FlowKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind in (FlowKind.PSI, FlowKind.U, FlowKind.LINEAR):
            if self.Q_ref is None:
                raise InvalidArgument(f"{kind.value} flow needs a harmonic map Q_ref")
            if self.Q_ref.params != self.params:
                raise InvalidArgument("Q_ref params differ from flow params")
        if kind is FlowKind.FLAT:
            d = self.flat_dim if self.flat_dim is not None else self.params.dim
            if int(d) != d or d < 3 or d % 2 == 0:
                raise InvalidArgument(f"flat_dim must be an odd integer >= 3, got {d!r}")
            object.__setattr__(self, "flat_dim", int(d))
            if self.inner_radius is not None and not self.inner_radius > 0:
                raise InvalidArgument("inner_radius must be positive")
        if self.balanced and kind is not FlowKind.PSI:
            raise InvalidArgument("balanced applies to the psi flow only")

    @property
    def form(self) -> Form:
        return FORM_OF[self.kind]

    def describe(self):
        out = {"kind": self.kind.value, **self.params.to_dict(), "balanced": self.balanced}
        if self.kind is FlowKind.FLAT:
            out.update(flat_dim=self.flat_dim, inner_radius=self.inner_radius)
        return out


# -- discrete system ---------------------------------------------------------------------


def _radial_operator(grid: RadialGrid, drift):
    """Sparse ``sech^2 (D2 + diag(drift) D1)`` (compact, non-conservative)."""
    n, dx = grid.n_points, grid.spacing
    sech2 = 1.0 / grid.jacobian**2
    D1 = first_derivative_matrix(n, dx)
    D2 = second_derivative_matrix(n, dx)
    return (sp.diags(sech2) @ (D2 + sp.diags(drift) @ D1)).tocsr()


def _flux_operator(grid: RadialGrid, w_kin, w_grad):
    """Sparse ``diag(1/w_kin) D1 diag(w_grad) D1``.

    In the interior ``D1`` is antisymmetric, so the semi-discrete flow
    conserves ``sum(w_kin g^2 + w_grad (D1 f)^2)`` exactly.
    """
    n, dx = grid.n_points, grid.spacing
    D1 = first_derivative_matrix(n, dx)
    inv = np.zeros(n)
    nz = w_kin > 0
    inv[nz] = 1.0 / w_kin[nz]
    return (sp.diags(inv) @ D1 @ sp.diags(w_grad) @ D1).tocsr()


class _System:
    """Precomputed coefficients of one flow on one grid; works on raw arrays."""

    def __init__(self, flow: FlowSpec, grid: RadialGrid):
        self.flow = flow
        self.grid = grid
        self.kind = flow.kind
        n = grid.n_points
        self.dx = grid.spacing
        self.D1 = first_derivative_matrix(n, self.dx)
        jac, x = grid.jacobian, grid.x
        th = np.tanh(x)
        p = flow.params
        self.frozen = np.zeros(n, dtype=bool)
        self.frozen[:PINNED] = True
        self.frozen[n - PINNED:] = True
        if flow.Q_ref is not None:
            grid.check_same(flow.Q_ref.grid)
            self.Q = flow.Q_ref
            self.sin2Q, self.cos2Q, _ = self.Q.trig()
            self.e = self.Q.defect
            self.sign = np.where(x <= 0, 1.0, -1.0)
        kind = self.kind
        if kind in (FlowKind.PSI, FlowKind.LINEAR, FlowKind.U, FlowKind.FREE):
            self.weight_power = pw = 2 if kind in (FlowKind.PSI, FlowKind.LINEAR) else p.dim - 1
            self.L = _flux_operator(grid, jac ** (pw + 1), jac ** (pw - 1))
        elif flow.inner_radius is not None:
            d = flow.flat_dim
            w = np.abs(grid.r) ** (d - 1) * (grid.r > 0)
            self.L = _flux_operator(grid, w * jac, w / jac)
            self.weight_power = None
            self.frozen |= grid.r <= flow.inner_radius
        else:
            d = flow.flat_dim
            c = grid.center
            coth = np.zeros(n)
            nz = np.arange(n) != c
            coth[nz] = 1.0 / th[nz]
            L = _radial_operator(grid, (d - 1) * coth - th).tolil()
            # x = 0 limit of the even mode: d * v_xx
            L[c, :] = second_derivative_matrix(n, self.dx)[c, :] * d
            self.L = L.tocsr()
            self.weight_power = None
        if kind is FlowKind.PSI:
            self.sech2 = 1.0 / jac**2
            self.half_c = 0.5 * p.coupling
            self.LQ = self.L @ self.Q.Q
            self.Qx = self.D1 @ self.Q.Q
        elif kind is FlowKind.U:
            self.V = potential_V(self.Q)
        elif kind is FlowKind.LINEAR:
            self.W = linearized_potential(self.Q)
        self.active = ~self.frozen

    # state <-> arrays
    def unpack(self, state: FieldState):
        if state.form is not self.flow.form:
            raise FormMismatch(f"{self.kind.value} flow expects form {self.flow.form.value}, "
                               f"got {state.form.value}")
        if state.params != self.flow.params:
            raise InvalidArgument("state params differ from flow params")
        self.grid.check_same(state.grid)
        if state.offset != 0:
            raise InvalidArgument("evolution needs states on the full grid")
        f = np.array(state.f)
        if self.kind is FlowKind.PSI:
            f = f - self.Q.Q
        return f, np.array(state.g)

    def pack(self, f, g, t):
        if self.kind is FlowKind.PSI:
            f = self.Q.Q + f
        return FieldState(f, g, t, self.flow.form, self.flow.params, self.grid)

    def acc(self, f):
        kind = self.kind
        Lf = self.L @ f
        if kind is FlowKind.PSI:
            s, e = self.sign, self.e
            if self.flow.balanced:
                out = Lf - 2.0 * self.half_c * self.sech2 * np.sin(f) * np.cos(2 * e + s * f)
            else:
                out = Lf + self.LQ - self.half_c * self.sech2 * s * np.sin(2 * (e + s * f))
        elif kind is FlowKind.U:
            F, G = nonlinear_terms(self.grid.jacobian, self.sin2Q, self.cos2Q,
                                   self.flow.params.ell, f)
            out = Lf - self.V * f + F + G
        elif kind is FlowKind.LINEAR:
            out = Lf - self.W * f
        else:
            out = Lf
        out[self.frozen] = 0.0
        return out

    def _sum(self, y):
        # trapezoid weights: the quadrature under which the flux form conserves energy
        return self.dx * (float(np.sum(y)) - 0.5 * (y[0] + y[-1]))

    def energy(self, f, g) -> EnergyReport:
        jac = self.grid.jacobian
        fx = self.D1 @ f
        kind = self.kind
        if kind is FlowKind.FLAT:
            c = self.grid.center
            w = np.abs(self.grid.r[c:]) ** (self.flow.flat_dim - 1)
            jc = jac[c:]
            kin = 0.5 * self._sum(g[c:] ** 2 * jc * w)
            grad = 0.5 * self._sum(fx[c:] ** 2 / jc * w)
            return EnergyReport(kin + grad, kin, grad, 0.0, "flat")
        if kind is FlowKind.PSI:
            psix = self.Qx + fx
            kin = 0.5 * self._sum(g**2 * jac**3)
            grad = 0.5 * self._sum(psix**2 * jac)
            s2 = np.sin(self.e + self.sign * f) ** 2
            pot = self.half_c * self._sum(s2 * jac)
            return EnergyReport(kin + grad + pot, kin, grad, pot, "dim3")
        p = self.weight_power
        wk = jac ** (p + 1)
        kin = 0.5 * self._sum(g**2 * wk)
        grad = 0.5 * self._sum(fx**2 * jac ** (p - 1))
        if kind is FlowKind.U:
            P = nonlinear_potential(jac, self.sin2Q, self.cos2Q, self.flow.params.ell, f)
            pot = 0.5 * self._sum(self.V * f**2 * wk) - self._sum(P * wk)
        elif kind is FlowKind.LINEAR:
            pot = 0.5 * self._sum(self.W * f**2 * wk)
        else:
            pot = 0.0
        return EnergyReport(kin + grad + pot, kin, grad, pot, "dim3" if p == 2 else "dimD")

    def flux(self, f, g):
        """Net energy flux into the domain through the two end nodes."""
        fx = self.D1 @ f
        if self.kind is FlowKind.PSI:
            fx = fx + self.Qx
        jac = self.grid.jacobian
        if self.kind is FlowKind.FLAT:
            w = np.abs(self.grid.r) ** (self.flow.flat_dim - 1)
        else:
            w = jac**self.weight_power
        dens = g * fx / jac * w
        return float(dens[0] - dens[-1])


@lru_cache(maxsize=16)
def _system(flow: FlowSpec, grid: RadialGrid) -> _System:
    return _System(flow, grid)


def _sponge_profile(grid: RadialGrid, strength: float):
    X = grid.half_width
    start = (1.0 - SPONGE_FRACTION) * X
    z = np.clip((np.abs(grid.x) - start) / (X - start), 0.0, None)
    return strength * z**4


def _rk4(sys: _System, f, g, dt, sigma=None):
    def a(ff, gg):
        out = sys.acc(ff)
        if sigma is not None:
            out -= sigma * gg
        return out

    k1f, k1g = g, a(f, g)
    f2, g2 = f + 0.5 * dt * k1f, g + 0.5 * dt * k1g
    k2f, k2g = g2, a(f2, g2)
    f3, g3 = f + 0.5 * dt * k2f, g + 0.5 * dt * k2g
    k3f, k3g = g3, a(f3, g3)
    f4, g4 = f + dt * k3f, g + dt * k3g
    k4f, k4g = g4, a(f4, g4)
    fn = f + dt / 6.0 * (k1f + 2 * k2f + 2 * k3f + k4f)
    gn = g + dt / 6.0 * (k1g + 2 * k2g + 2 * k3g + k4g)
    fn[sys.frozen] = f[sys.frozen]
    gn[sys.frozen] = g[sys.frozen]
    return fn, gn


# -- public operations --------------------------------------------------------------------


def rhs(flow: FlowSpec, state: FieldState) -> np.ndarray:
    """Second time derivative of the state's field under ``flow``."""
    sys = _system(flow, state.grid)
    f, _ = sys.unpack(state)
    return sys.acc(f)


def energy(flow: FlowSpec, state: FieldState) -> EnergyReport:
    """Conserved energy of ``flow`` evaluated on ``state``."""
    sys = _system(flow, state.grid)
    return sys.energy(*sys.unpack(state))


def _check_dt(dt, grid, cfl_max=CFL_MAX):
    if not math.isfinite(dt) or dt == 0:
        raise RejectedStep(f"invalid time step {dt!r}")
    if abs(dt) > cfl_max * grid.spacing * (1 + 1e-12):
        raise RejectedStep(f"|dt| = {abs(dt):.3e} exceeds cfl_max * dx = {cfl_max * grid.spacing:.3e}")


def step(flow: FlowSpec, state: FieldState, dt: float) -> FieldState:
    """One RK4 step; negative ``dt`` steps backward in time."""
    _check_dt(dt, state.grid)
    sys = _system(flow, state.grid)
    f, g = sys.unpack(state)
    fn, gn = _rk4(sys, f, g, dt)
    if not (np.all(np.isfinite(fn)) and np.all(np.isfinite(gn))):
        raise BlowupError("non-finite values after one step", last_good=state, time=state.time)
    return sys.pack(fn, gn, state.time + dt)


@dataclass(frozen=True)
class Monitors:
    """Energy cadence, snapshot times, and optional sponge."""

    cadence: float | None = None
    snapshot_times: tuple = ()
    sponge: bool = False
    sponge_strength: float = 1.0
    check_domain: bool = True


@dataclass(eq=False)
class EvolutionLog:
    flow: FlowSpec
    times: np.ndarray
    energy: np.ndarray
    kinetic: np.ndarray
    gradient: np.ndarray
    potential: np.ndarray
    boundary_flux: np.ndarray
    snapshots: list
    final: FieldState
    cfl: float
    dt: float
    n_steps: int
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def relative_drift(self) -> float:
        E0 = self.energy[0]
        scale = abs(E0) if E0 != 0 else 1.0
        return float(np.max(np.abs(self.energy - E0)) / scale)

    def snapshot_at(self, t, tol=1e-9) -> FieldState:
        for s in self.snapshots:
            if abs(s.time - t) <= tol * max(1.0, abs(t)):
                return s
        raise InvalidArgument(f"no snapshot at t = {t}")

    def energy_rows(self):
        return np.column_stack([self.times, self.energy, self.kinetic, self.gradient,
                                self.potential, self.boundary_flux])

    def manifest(self):
        return {
            "flow": self.flow.describe(), "cfl": self.cfl, "dt": self.dt,
            "n_steps": self.n_steps, "T": float(self.times[-1]),
            "relative_energy_drift": self.relative_drift(),
            "snapshot_times": [s.time for s in self.snapshots],
            "wall_time": self.wall_time, **self.extra,
        }


def _support_radii(sys: _System, f, g, rel=1e-12):
    amp = np.maximum(np.abs(f), np.abs(g))
    scale = amp.max()
    if scale == 0:
        return None
    idx = np.flatnonzero(amp > rel * scale)
    return sys.grid.r[idx[0]], sys.grid.r[idx[-1]]


def check_light_cone(flow: FlowSpec, state: FieldState, T: float):
    """Raise :class:`DomainTooSmall` if the data's light cone reaches the pinned nodes."""
    sys = _system(flow, state.grid)
    f, g = sys.unpack(state)
    supp = _support_radii(sys, f, g)
    if supp is None:
        return
    r = sys.grid.r
    lo_wall, hi_wall = r[PINNED], r[-PINNED - 1]
    if sys.kind is FlowKind.FLAT:
        lo_wall = -math.inf  # flat data are radial; only the outer wall matters
    lo, hi = supp
    if hi + T >= hi_wall or lo - T <= lo_wall:
        raise DomainTooSmall(
            f"light cone of data supported in [{lo:.3g}, {hi:.3g}] leaves "
            f"[{lo_wall:.3g}, {hi_wall:.3g}] before T = {T}"
        )


def time_step(T, grid, cfl=CFL_MAX, cadence=None):
    """``(dt, steps_per_cadence, n_steps)`` with ``dt <= cfl * dx`` dividing the cadence."""
    if not 0 < cfl <= CFL_MAX:
        raise RejectedStep(f"cfl must lie in (0, {CFL_MAX}]")
    if cadence is None:
        cadence = T / max(1, round(T))
    per = math.ceil(cadence / (cfl * grid.spacing) - 1e-12)
    dt = cadence / per
    n_cad = round(T / cadence)
    if abs(n_cad * cadence - T) > 1e-9 * max(1.0, T):
        raise InvalidArgument("T must be a multiple of the monitor cadence")
    return dt, per, n_cad * per


def evolve(flow: FlowSpec, initial: FieldState, T: float, monitors: Monitors | None = None,
           cfl: float = CFL_MAX, dt: float | None = None) -> EvolutionLog:
    """Evolve ``initial`` to time ``initial.time + T``.

    With ``dt`` given it must divide ``T`` and the cadence; otherwise it is
    chosen from ``cfl``.
    """
    monitors = monitors or Monitors()
    if not T > 0:
        raise InvalidArgument("T must be positive")
    grid = initial.grid
    sys = _system(flow, grid)
    f, g = sys.unpack(initial)
    if monitors.check_domain and not monitors.sponge:
        check_light_cone(flow, initial, T)
    cadence = monitors.cadence
    if dt is None:
        dt, per, n_steps = time_step(T, grid, cfl, cadence)
    else:
        _check_dt(dt, grid)
        n_steps = round(T / dt)
        if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
            raise InvalidArgument("dt must divide T")
        cadence = cadence or T / max(1, round(T))
        per = max(1, round(cadence / dt))
        if n_steps % per:
            raise InvalidArgument("dt must divide the monitor cadence")
    cfl_used = dt / grid.spacing
    t0 = initial.time
    snap_steps = {}
    for ts in monitors.snapshot_times:
        k = round((ts - t0) / dt)
        if k < 0 or k > n_steps or abs(k * dt - (ts - t0)) > 1e-8 * max(1.0, abs(ts)):
            raise InvalidArgument(f"snapshot time {ts} is not on the time lattice")
        snap_steps[k] = ts
    sigma = _sponge_profile(grid, monitors.sponge_strength) if monitors.sponge else None

    times, rows, flux, snaps = [], [], [], []

    def record(k, ff, gg):
        rep = sys.energy(ff, gg)
        times.append(t0 + k * dt)
        rows.append((rep.total, rep.kinetic, rep.gradient, rep.potential_part))
        flux.append(sys.flux(ff, gg))

    last_good = (f, g, t0)
    clock = _time.perf_counter()
    record(0, f, g)
    if 0 in snap_steps:
        snaps.append(sys.pack(f, g, t0))
    for k in range(1, n_steps + 1):
        f, g = _rk4(sys, f, g, dt, sigma)
        if k % per == 0 or k in snap_steps or k == n_steps:
            if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
                lf, lg, lt = last_good
                raise BlowupError(f"non-finite values at t = {t0 + k * dt:.6g}",
                                  last_good=sys.pack(lf, lg, lt), time=t0 + k * dt)
            last_good = (f, g, t0 + k * dt)
            if k % per == 0:
                record(k, f, g)
            if k in snap_steps:
                snaps.append(sys.pack(f, g, t0 + k * dt))
    final = sys.pack(f, g, t0 + n_steps * dt)
    E = np.array(rows)
    return EvolutionLog(
        flow, np.array(times), E[:, 0], E[:, 1], E[:, 2], E[:, 3], np.array(flux), snaps,
        final, cfl_used, dt, n_steps, _time.perf_counter() - clock,
        extra={"sponge": monitors.sponge},
    )


# -- convergence ---------------------------------------------------------------------------


def resolution_ladder(n_points: int, levels: int = 3):
    """``N, 2N - 1, 4N - 3, ...``: each level halves ``dx`` and keeps the old nodes."""
    out = [n_points]
    for _ in range(levels - 1):
        out.append(2 * out[-1] - 1)
    return out


@dataclass
class ConvergenceReport:
    n_points: list
    differences: list
    order: float
    drifts: list

    def to_dict(self):
        return {"n_points": self.n_points, "differences": self.differences,
                "order": self.order, "energy_drifts": self.drifts}


def self_convergence(make_flow, make_data, half_width: float, n_points: int, T: float,
                     cfl: float = 0.5) -> ConvergenceReport:
    """Measured order from three runs on ``N, 2N - 1, 4N - 3`` nodes.

    ``make_flow(grid)`` returns a :class:`FlowSpec`; ``make_data(grid, flow)``
    returns the initial state.  Time steps are in exact ratio 4:2:1.
    """
    ladder = resolution_ladder(n_points, 3)
    coarse_dx = half_width / (n_points // 2)
    M = math.ceil(T / (cfl * coarse_dx))
    finals, drifts = [], []
    for lev, N in enumerate(ladder):
        grid = make_grid(half_width, N)
        flow = make_flow(grid)
        data = make_data(grid, flow)
        dt = T / (M * 2**lev)
        log = evolve(flow, data, T, Monitors(cadence=T), dt=dt)
        stride = 2**lev
        finals.append((log.final.f[::stride], log.final.g[::stride]))
        drifts.append(log.relative_drift())
    dx = coarse_dx

    def diff(a, b):
        return math.sqrt(integrate_x((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2, dx))

    e1, e2 = diff(finals[0], finals[1]), diff(finals[1], finals[2])
    order = math.log2(e1 / e2) if e1 > 0 and e2 > 0 else math.nan
    return ConvergenceReport(ladder, [e1, e2], order, drifts)
