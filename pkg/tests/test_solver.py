import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import trapezoid

from kolmo import solver
from kolmo.discretization import Field, Grid
from kolmo.geometry import GPoint
from kolmo.kernel import gamma_xyt
from kolmo.solver import (
    GaussianBumps, QuadControls, ResolutionError, SourceTerm, average_weight, eval_pointwise,
    residual_L, smooth_cutoff, solve_spectral, solve_stationary, weak_solution_check,
)
from kolmo.suites import manufactured_solution, manufactured_source

BUMPS = GaussianBumps([1.0, -0.7], [[0.3], [-0.4]], [[0.2], [-0.3]], [0.3, 0.4], [0.35, 0.3],
                      [-0.5, 0.2], [0.3, 0.25])
GRID = Grid(1, 4.0, 6.0, 64, 128, 3.0, 64)


@pytest.fixture(scope="module")
def bump_solution():
    return solve_spectral(BUMPS.as_source(), GRID)


def test_smooth_cutoff_shape():
    assert np.allclose(smooth_cutoff(np.linspace(-2, 2, 11)), 1.0)
    assert np.allclose(smooth_cutoff(np.array([-5.0, -4.0, 4.0, 7.0])), 0.0)
    v = smooth_cutoff(np.linspace(2, 4, 50))
    assert np.all(np.diff(v) <= 1e-15)


def test_average_weight_limits():
    assert float(average_weight(0.0)) == pytest.approx(1.0, abs=1e-14)
    assert float(average_weight(6.0)) == pytest.approx(0.0, abs=1e-14)


@given(st.floats(0.3, 3.0))
def test_bumps_dilation_definition(lam):
    z = (np.array([[0.1], [-0.2]]), np.array([[0.3], [0.05]]), np.array([0.1, -0.3]))
    lhs = BUMPS.dilated(lam)(*z)
    rhs = lam**2 * BUMPS(lam**3 * z[0], lam * z[1], lam**2 * z[2])
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-300)


def test_bumps_integral():
    b = GaussianBumps([2.0], [[0.0]], [[0.0]], [0.5], [0.25])
    assert b.integral() == pytest.approx(2 * 2 * np.pi * 0.5 * 0.25)
    with pytest.raises(ValueError):
        b.as_source()


def test_heat_flow_small_time_is_identity():
    b = GaussianBumps([1.0, 0.5], [[0.1], [-0.2]], [[0.0], [0.3]], [0.3, 0.2], [0.4, 0.3])
    x, y = np.array([[0.2]]), np.array([[0.1]])
    assert b.heat_flow(x, y, np.array([1e-12])).item() == pytest.approx(b(x, y).item(), rel=1e-9)


def test_heat_flow_against_quadrature():
    b = GaussianBumps([1.0], [[0.1]], [[-0.2]], [0.3], [0.4])
    x0, y0, s = 0.4, 0.3, 0.7
    xs = np.linspace(-4, 4, 801)
    ys = np.linspace(-5, 5, 801)
    Xp, Yp = np.meshgrid(xs, ys, indexing="ij")
    g = b(Xp[..., None], Yp[..., None])
    k = gamma_xyt((x0 - Xp - s * Yp)[..., None], (y0 - Yp)[..., None], np.full(Xp.shape, s))
    ref = trapezoid(trapezoid(g * k, ys, axis=1), xs)
    val = b.heat_flow(np.array([[x0]]), np.array([[y0]]), np.array([s])).item()
    assert val == pytest.approx(ref, rel=1e-6)


def test_heat_flow_lap_y_matches_differences():
    b = GaussianBumps([1.0], [[0.1]], [[-0.2]], [0.3], [0.4])
    x, s, h = np.array([[0.4]]), np.array([0.7]), 1e-4
    u = lambda y: b.heat_flow(x, np.array([[y]]), s).item()
    fd = (u(0.3 + h) - 2 * u(0.3) + u(0.3 - h)) / h**2
    assert b.heat_flow(x, np.array([[0.3]]), s, "lap_y").item() == pytest.approx(fd, rel=1e-5)


def test_manufactured_solution_small_grid():
    src = SourceTerm.from_callable(manufactured_source, 1, [-6, 6], [-6, 6], [-6, 6])
    g = Grid(1, 6.0, 6.0, 64, 64, 6.0, 64)
    sol = solve_spectral(src, g)
    phi = Field.from_function(g, manufactured_solution)
    assert np.max(np.abs(sol.u.values - phi.values)) < 1e-3
    assert residual_L(sol, src) < 1e-2


def test_spectral_agrees_with_pointwise(bump_solution):
    u = bump_solution.u.values
    umax = np.max(np.abs(u))
    xs, ys, ts = GRID.nodes("x"), GRID.nodes("y"), GRID.nodes("t")
    for i, j, k in [(34, 66, 40), (30, 60, 50), (36, 70, 60)]:
        pw = eval_pointwise(BUMPS, GPoint.of([xs[i]], [ys[j]], ts[k]), QuadControls(s_panels=32))
        assert abs(pw - u[i, j, k]) < 1e-3 * umax


def test_lap_y_pointwise(bump_solution):
    lap = bump_solution.lap_y_u.values
    xs, ys, ts = GRID.nodes("x"), GRID.nodes("y"), GRID.nodes("t")
    i, j, k = 33, 66, 45
    pw = eval_pointwise(BUMPS, GPoint.of([xs[i]], [ys[j]], ts[k]), QuadControls(s_panels=32, kernel="gamma1"))
    assert abs(pw - lap[i, j, k]) < 1e-3 * np.max(np.abs(lap))


def test_solution_vanishes_before_source(bump_solution):
    t_first = BUMPS.support_box()[-1, 0]
    early = GRID.nodes("t") < t_first
    assert np.max(np.abs(bump_solution.u.values[..., early])) < 1e-12


def test_dilation_equivariance():
    # on the paired grid the solution for the rescaled source has the same node values
    lam = 0.8
    s0 = solve_spectral(BUMPS.as_source(), GRID)
    s1 = solve_spectral(BUMPS.dilated(1 / lam).as_source(), GRID.dilated(lam))
    scale = np.max(np.abs(s0.u.values))
    assert np.max(np.abs(s1.u.values - s0.u.values)) < 1e-6 * scale


def test_resolution_error_on_coarse_y():
    with pytest.raises(ResolutionError, match="Ny >="):
        solve_spectral(BUMPS.as_source(), Grid(1, 4.0, 6.0, 128, 8, 3.0, 8))


def test_support_must_fit():
    with pytest.raises(ValueError):
        solve_spectral(BUMPS.as_source(), Grid(1, 0.5, 6.0, 64, 128, 3.0, 64))


def test_source_term_validation():
    with pytest.raises(ValueError):
        SourceTerm(1)
    with pytest.raises(ValueError):
        SourceTerm(1, func=lambda x, y, t: 0 * t, support=np.array([[1, 0], [0, 1], [0, 1.0]]))


def _exact_weak_pair(g):
    u = Field.from_function(g, lambda x, y: np.exp(-(x[..., 0] ** 2 + y[..., 0] ** 2)))
    f = Field.from_function(
        g, lambda x, y: -(4 * y[..., 0] ** 2 - 2 + 2 * x[..., 0] * y[..., 0]) * np.exp(-(x[..., 0] ** 2 + y[..., 0] ** 2)))
    return u, f


def test_weak_check_exact_pair():
    g = Grid(1, 6.0, 6.0, 128, 128)
    u, f = _exact_weak_pair(g)
    r = weak_solution_check(u, f, 5, seed=0)
    assert r < 1e-6
    noisy = Field(g, u.values + 0.1 * np.random.default_rng(0).standard_normal(g.shape))
    assert weak_solution_check(noisy, f, 5, seed=0) > 10 * r


def test_weak_check_detects_wrong_sign():
    g = Grid(1, 6.0, 6.0, 128, 128)
    u, f = _exact_weak_pair(g)
    assert weak_solution_check(u, f.scaled(-1.0), 5, seed=0) > 1e-3


def test_test_bump_not_collected():
    assert solver.TestBump.__test__ is False


@pytest.fixture(scope="module")
def stationary():
    b = GaussianBumps([1.0, 0.6], [[0.2], [-0.3]], [[0.1], [-0.2]], [0.3, 0.25], [0.3, 0.25])
    g = Grid(1, 3.0, 3.0, 64, 64)
    return b, g, solve_stationary(b, [4.0, 8.0, 16.0, 32.0], g)


def test_stationary_gaps_decay(stationary):
    _, _, res = stationary
    assert np.all(np.diff(res.gaps) < 0)
    assert -1.3 <= res.slope() <= -0.7


def test_stationary_weak_identity(stationary):
    b, g, _ = stationary
    gf = g.refined(2)
    res = solve_stationary(b, [32.0], gf, derivatives=False)
    F = Field.from_function(gf, b)
    val = weak_solution_check(res.U[0], F, 5, 0, rhs_extra=res.boundary_terms[0], normalize=False)
    assert val < 1e-3


def test_stationary_validation():
    b = GaussianBumps([1.0], [[0.0]], [[0.0]], [0.3], [0.3])
    with pytest.raises(ValueError):
        solve_stationary(b, [8.0, 4.0], Grid(1, 3.0, 3.0, 16, 16))
    with pytest.raises(ValueError):
        solve_stationary(b, [4.0], GRID)
    with pytest.raises(TypeError):
        solve_stationary(BUMPS, [4.0], Grid(1, 3.0, 3.0, 16, 16))
