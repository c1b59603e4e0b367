from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kolmo.geometry import GPoint, dilate, random_points
from kolmo.kernel import (
    SYMBOL_COERCIVITY, KernelDomainError, KernelFamily, chapman_kolmogorov_check,
    fractional_gaussian_hyp1f1, fractional_gaussian_quad, gamma, gamma1, gamma1_xyt, gamma2,
    gamma_grad_y, gamma_xyt, homogeneity_degree, orbit_values, scan_bound, symbol_F,
    total_mass, weighted_kernel,
)


def pt(x, y, t):
    return GPoint.of([x], [y], t)


pos_pts = st.builds(pt, st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 4))
lams = st.floats(0.3, 3.0)


def test_gamma_at_unit_time():
    assert float(gamma(pt(0, 0, 1))) == pytest.approx(sqrt(3) / (2 * pi), rel=1e-15)


def test_gamma1_at_unit_time():
    assert float(gamma1(pt(0, 0, 1))) == pytest.approx(-sqrt(3) / pi, rel=1e-14)


def test_symbol_known_value():
    assert float(symbol_F(1.0, 1.0, 1.0)) == pytest.approx(7 / 3, rel=1e-15)


def test_gamma_vanishes_for_nonpositive_time():
    assert float(gamma(pt(0.3, 0.2, 0.0))) == 0.0
    assert float(gamma(pt(0.3, 0.2, -1.0))) == 0.0


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_total_mass_is_one(t):
    assert abs(total_mass(t) - 1) < 1e-6


@given(pos_pts, lams)
def test_gamma_homogeneity(z, lam):
    assert float(gamma(dilate(lam, z))) == pytest.approx(lam**-4 * float(gamma(z)), rel=1e-10, abs=1e-300)


@given(pos_pts, lams)
def test_gamma1_homogeneity(z, lam):
    assert float(gamma1(dilate(lam, z))) == pytest.approx(lam**-6 * float(gamma1(z)), rel=1e-9, abs=1e-300)


@given(pos_pts, lams)
def test_gamma2_homogeneity(z, lam):
    assert float(gamma2(dilate(lam, z))) == pytest.approx(lam**-6 * float(gamma2(z)), rel=1e-9, abs=1e-300)


def test_homogeneity_degrees():
    assert homogeneity_degree("gamma", 1) == -4
    assert homogeneity_degree("gamma1", 1) == -6
    assert homogeneity_degree("gamma2", 2) == -10


def test_grad_y_matches_differences():
    z = pt(0.2, -0.4, 0.7)
    h = 1e-6
    fd = (gamma(pt(0.2, -0.4 + h, 0.7)) - gamma(pt(0.2, -0.4 - h, 0.7))) / (2 * h)
    assert float(gamma_grad_y(z)[0]) == pytest.approx(float(fd), rel=1e-7)


def test_gamma1_matches_second_differences(rng):
    x = rng.uniform(-1, 1, (50, 1))
    y = rng.uniform(-1, 1, (50, 1))
    t = rng.uniform(0.5, 2, 50)
    h = 1e-4
    fd = (gamma_xyt(x, y + h, t) - 2 * gamma_xyt(x, y, t) + gamma_xyt(x, y - h, t)) / h**2
    scale = gamma_xyt(x, y, t) / t
    assert np.max(np.abs(gamma1_xyt(x, y, t) - fd) / np.maximum(np.abs(fd), scale)) < 1e-6


def test_gamma2_three_routes_agree():
    z = pt(0.5, 0.5, 1.0)
    ref = float(gamma2(z))
    assert float(gamma2(z, "quadrature")) == pytest.approx(ref, rel=1e-8)
    assert float(gamma2(z, "lattice")) == pytest.approx(ref, rel=1e-4)


def test_gamma2_domain():
    with pytest.raises(KernelDomainError):
        gamma2(pt(0, 0, 0))
    with pytest.raises(ValueError):
        gamma2(pt(0, 0, 1), method="nope")


@pytest.mark.parametrize("r,a", [(0.0, 1.0), (0.7, 0.3), (3.0, 2.0)])
def test_fractional_gaussian_routes(r, a):
    assert fractional_gaussian_quad(r, a, 1) == pytest.approx(float(fractional_gaussian_hyp1f1(r, a, 1)), rel=1e-8)


def test_chapman_kolmogorov():
    res = chapman_kolmogorov_check(0.5, 0.5, pt(0, 0, 1))
    assert res.residual < 1e-5


def test_chapman_kolmogorov_symmetric():
    a = chapman_kolmogorov_check(0.3, 0.7, pt(0.2, 0.1, 1.0))
    b = chapman_kolmogorov_check(0.7, 0.3, pt(0.2, 0.1, 1.0))
    assert abs(a.residual - b.residual) < 1e-6


def test_chapman_kolmogorov_validation():
    with pytest.raises(ValueError):
        chapman_kolmogorov_check(0.5, 0.5, pt(0, 0, 2))
    with pytest.raises(ValueError):
        chapman_kolmogorov_check(0.0, 1.0, pt(0, 0, 1))


def test_symbol_coercivity_holds(rng):
    xi, eta, t = rng.normal(size=20_000), rng.normal(size=20_000), rng.uniform(0.01, 10, 20_000)
    F = symbol_F(xi[:, None], eta[:, None], t)
    assert np.all(F >= SYMBOL_COERCIVITY * (t**3 * xi**2 + t * eta**2) * (1 - 1e-12))


def test_symbol_coercivity_is_sharp():
    # the eigenvector of the smallest eigenvalue attains the bound
    A = np.array([[1.0, 1.5], [1.5, 3.0]]) / 3
    w, v = np.linalg.eigh(A)
    xi, eta = v[:, 0]
    F = float(symbol_F(xi, eta, 1.0))
    assert F == pytest.approx(SYMBOL_COERCIVITY * (xi**2 + eta**2), rel=1e-12)
    assert SYMBOL_COERCIVITY < 1 / 12


@given(pos_pts)
def test_orbit_constancy(z):
    lam = np.array([0.5, 1.0, 2.0])
    for k in ("gamma", "gamma_grad_y", "gamma1", "gamma2"):
        v = orbit_values(k, z, lam)
        if v[1] > 1e-200:
            assert np.allclose(v, v[1], rtol=1e-9)


def test_weighted_kernel_unknown():
    with pytest.raises(ValueError):
        weighted_kernel("nope", pt(0, 0, 1))


def test_scan_bound_stable():
    rep = scan_bound("gamma", 10_000, seed=1)
    assert rep.stable and np.isfinite(rep.supremum)
    assert '"kernel": "gamma"' in rep.to_json()


def test_scan_bound_rejects_small_samples():
    with pytest.raises(ValueError):
        scan_bound("gamma", 100, seed=1)


def test_kernel_family_dimension_check():
    fam = KernelFamily(d=1)
    assert float(fam.gamma(pt(0, 0, 1))) == pytest.approx(sqrt(3) / (2 * pi))
    with pytest.raises(ValueError):
        fam.gamma(GPoint.zeros(2))


def test_batched_evaluation(rng):
    z = random_points(rng, 100, 1)
    z = GPoint(z.x, z.y, np.abs(z.t))
    batched = gamma(z)
    single = np.array([float(gamma(z[i])) for i in range(100)])
    assert np.allclose(batched, single, rtol=1e-14, atol=0)
