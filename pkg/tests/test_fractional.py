import numpy as np
import pytest
from hypothesis import given, strategies as st

from kolmo.discretization import Field, Grid
from kolmo.fractional import (
    ExtrapolationError, FracParams, constant_ratio, frac_multiplier, frac_singular,
    gaussian_fractional_exact, printed_constant, singular_constant,
)

S = 2.0 / 3.0
X = np.linspace(-40, 40, 4096, endpoint=False)


def test_constant_ratio_value():
    assert constant_ratio(1, S) == pytest.approx(1.04108, abs=2e-5)


def test_printed_constant_is_negative():
    assert printed_constant(1, S) < 0 < singular_constant(1, S)


def test_constant_annihilated():
    out = frac_multiplier(np.ones(256), S, coords=[np.linspace(0, 1, 256, endpoint=False)])
    assert np.max(np.abs(out)) < 1e-12


@given(st.integers(1, 20), st.floats(0.2, 1.8))
def test_cosine_eigenfunction(k, s):
    x = np.linspace(0, 2 * np.pi, 128, endpoint=False)
    out = frac_multiplier(np.cos(k * x), s, coords=[x])
    assert np.allclose(out, k**s * np.cos(k * x), atol=1e-10 * k**s)


def test_composition():
    f = np.exp(-X**2)
    a = frac_multiplier(frac_multiplier(f, 0.5, coords=[X]), 0.7, coords=[X])
    b = frac_multiplier(f, 1.2, coords=[X])
    assert np.allclose(a, b, atol=1e-10)


def test_multiplier_matches_closed_form():
    # the |x|^(-1-s) tail is periodised by the lattice; the error falls off like L^(-1-s)
    errs = []
    for L in (40, 80):
        x = np.linspace(-L, L, 100 * L, endpoint=False)
        out = frac_multiplier(np.exp(-x**2 / 2), S, coords=[x])
        ex = gaussian_fractional_exact(x, S)
        errs.append(np.max(np.abs(out - ex)[np.abs(x) < 2]) / np.max(np.abs(ex)))
    assert errs[0] < 3e-3
    assert errs[0] / errs[1] > 2.5


def test_singular_matches_multiplier():
    f = lambda x: np.exp(-np.asarray(x) ** 2 / 2)
    val = frac_singular(f, 0.0, FracParams(s=S))
    ref = float(gaussian_fractional_exact(0.0, S))
    assert val == pytest.approx(ref, rel=1e-3)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_modulated_bump_tracks_symbol(k):
    f = np.cos(k * X) * np.exp(-X**2 / 200)
    out = frac_multiplier(f, S, coords=[X])
    i = np.argmin(np.abs(X))
    assert out[i] / f[i] == pytest.approx(k**S, rel=0.05)


def test_field_input_uses_x_axes():
    g = Grid(1, np.pi, 4.0, 64, 8)
    fld = Field.from_function(g, lambda x, y: np.cos(3 * x[..., 0]) * (1 + 0 * y[..., 0]))
    out = frac_multiplier(fld, 1.0)
    assert isinstance(out, Field)
    assert np.allclose(out.values, 3 * fld.values, atol=1e-10)


def test_validation():
    with pytest.raises(ValueError):
        FracParams(s=2.5)
    with pytest.raises(ValueError):
        frac_multiplier(np.ones(8), 0.5)
    with pytest.raises(ValueError):
        frac_multiplier(np.ones(8), 0.5, coords=[np.array([0, 1, 3, 4, 5, 6, 7, 8.0])])
    with pytest.raises(ValueError):
        frac_multiplier(np.ones(8) + 0j, 0.5, coords=[np.arange(8.0)])


def test_extrapolation_failure_reported():
    # a kink at x0 breaks the smooth expansion of the inner piece
    f = lambda x: np.abs(np.asarray(x, dtype=float)) ** 0.5
    with pytest.raises(ExtrapolationError):
        frac_singular(f, 0.0, FracParams(s=1.5))
