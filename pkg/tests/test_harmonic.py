import math

import numpy as np
import pytest

from conftest import harmonic
from wormhole_waves.errors import InvalidArgument
from wormhole_waves.harmonic import (
    ShotTag, classify_shot, integrate_static, linearized_potential, mirror_plateau,
    nonlinear_potential, nonlinear_terms, nonlinearity_N, potential_V, quadratic_part_F,
    solve_prescribed, solve_Q, static_u_family,
)
from wormhole_waves.model import ModelParams, ddx, make_grid


@pytest.mark.parametrize("ell,n", [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2)])
def test_golden_values(golden_harmonic, ell, n):
    row = next(r for r in golden_harmonic if (r["ell"], r["n"]) == (ell, n))
    Q = harmonic(ell, n, row["grid_x"], row["grid_n"])
    assert Q.b_star == pytest.approx(row["b_star"], rel=1e-10)
    assert Q.alpha == pytest.approx(row["alpha"], rel=1e-8)


def test_degree_zero_is_trivial():
    Q = solve_Q(ModelParams(2, 0), make_grid(5.0, 101))
    assert Q.b_star == 0 and Q.alpha == 0 and not Q.Q.any()


def test_shots_bracket_b_star():
    p = ModelParams(1, 1)
    b = harmonic(1, 1).b_star
    lo = classify_shot(integrate_static(0.9 * b, p, 20.0, stop_on_exit=True), p)
    hi = classify_shot(integrate_static(1.1 * b, p, 20.0, stop_on_exit=True), p)
    assert lo.tag is ShotTag.UNDERSHOOT and hi.tag is ShotTag.OVERSHOOT
    with pytest.raises(InvalidArgument):
        classify_shot(integrate_static(1.0, ModelParams(1, 0), 1.0), ModelParams(1, 0))


def test_mirror_plateau_matches_alpha():
    Q = harmonic(2, 1)
    assert mirror_plateau(Q) == pytest.approx(Q.alpha, rel=1e-8)


def test_trig_from_defect_matches_direct():
    Q = harmonic(1, 2)
    s2, c2, ss = Q.trig()
    np.testing.assert_allclose(s2, np.sin(2 * Q.Q), atol=1e-14)
    np.testing.assert_allclose(c2, np.cos(2 * Q.Q), atol=1e-14)
    np.testing.assert_allclose(ss, np.sin(Q.Q) ** 2, atol=1e-14)


def test_static_equation_residual_small():
    Q = harmonic(1, 1, 6.0, 1201)
    x = Q.grid.x
    h = Q.grid.spacing
    Qxx = ddx(Q.Qx, h)
    res = Qxx + np.tanh(x) * Q.Qx - 0.5 * Q.params.coupling * np.sin(2 * Q.Q)
    assert np.max(np.abs(res[5:-5])) < 1e-6


def test_solve_prescribed_sides():
    p = ModelParams(1, 1)
    plus = solve_prescribed(0.5, "+", p)
    minus = solve_prescribed(0.5, "-", p)
    np.testing.assert_allclose(minus.x, -plus.x[::-1])
    np.testing.assert_allclose(minus.dev, plus.dev[::-1])
    assert minus.base == 0.0 and plus.base == pytest.approx(math.pi)
    with pytest.raises(InvalidArgument):
        solve_prescribed(0.5, "+", p, x_end=2.0)
    with pytest.raises(InvalidArgument):
        solve_prescribed(0.5, "up", p)


def test_potentials_far_field():
    Q = harmonic(2, 1)
    r = Q.grid.jacobian
    V = potential_V(Q)
    W = linearized_potential(Q)
    far = Q.grid.r > 100
    np.testing.assert_allclose(V[far], 4 / r[far] ** 4, rtol=1e-6)
    np.testing.assert_allclose(W[far], 6 / r[far] ** 2, rtol=1e-6)


def test_nonlinear_potential_derivative(rng):
    br = rng.uniform(1.0, 5.0, 50)
    Qv = rng.uniform(0.0, math.pi, 50)
    u = rng.uniform(-0.5, 0.5, 50)
    s2, c2 = np.sin(2 * Qv), np.cos(2 * Qv)
    for ell in (1, 2, 3):
        h = 1e-6
        dP = (nonlinear_potential(br, s2, c2, ell, u + h)
              - nonlinear_potential(br, s2, c2, ell, u - h)) / (2 * h)
        F, G = nonlinear_terms(br, s2, c2, ell, u)
        np.testing.assert_allclose(dP, F + G, rtol=1e-7, atol=1e-12)


def test_nonlinear_potential_derivative_symbolic():
    sp = pytest.importorskip("sympy")
    u, b, q = sp.symbols("u b q", positive=True)
    ell = 2
    c = ell * (ell + 1)
    z = b**ell * u
    P = c * b ** (-2 * ell - 2) * (sp.sin(2 * q) * (2 * z - sp.sin(2 * z)) / 4
                                   + sp.cos(2 * q) * (z**2 - sp.sin(z) ** 2) / 2)
    F = c * b ** (-ell - 2) * sp.sin(z) ** 2 * sp.sin(2 * q)
    G = sp.Rational(1, 2) * c * b ** (-ell - 2) * (2 * z - sp.sin(2 * z)) * sp.cos(2 * q)
    assert sp.simplify(sp.diff(P, u) - F - G) == 0
    vals = {u: 0.3, b: 1.7, q: 0.9}
    num = nonlinear_potential(np.array([1.7]), np.sin([1.8]), np.cos([1.8]), ell, np.array([0.3]))
    assert float(P.subs(vals)) == pytest.approx(num[0], rel=1e-12)


def test_small_z_series_continuous():
    br, s2, c2 = np.ones(2), np.full(2, 0.3), np.full(2, 0.7)
    z = np.array([0.05 * (1 - 1e-9), 0.05 * (1 + 1e-9)])
    F, G = nonlinear_terms(br, s2, c2, 1, z)
    P = nonlinear_potential(br, s2, c2, 1, z)
    assert abs(G[0] - G[1]) < 1e-12 and abs(P[0] - P[1]) < 1e-12


def test_quadratic_part_dominates_small_u():
    Q = harmonic(1, 1)
    u = 1e-4 * np.exp(-Q.grid.x**2)
    N = nonlinearity_N(Q, u)
    F2 = quadratic_part_F(Q, u)
    np.testing.assert_allclose(N, F2, rtol=0, atol=1e-3 * np.max(np.abs(F2)))


def test_static_u_family_label_zero_is_Q():
    Q = harmonic(1, 1, 10.0, 2001)
    prof = static_u_family(0.0, Q)
    assert np.max(np.abs(prof.U)) < 1e-7
    other = static_u_family(0.05 * Q.alpha, Q)
    assert np.max(np.abs(other.U)) > 1e-3
    assert np.max(np.abs(other.residual[5:-5])) < 1e-3
