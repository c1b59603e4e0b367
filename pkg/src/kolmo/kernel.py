"""Fundamental solution of L = d/dt - Lap_y + y.grad_x and the kernels derived from it.

``gamma(x, y, t)`` is the Gaussian transition density of the kinetic process
``dX = Y dt, dY = sqrt(2) dW`` started at the origin:

    gamma = (3 / (4 pi^2 t^4))^(d/2) exp(-(3|x|^2 - 3 t x.y + t^2 |y|^2) / t^3),  t > 0,

and vanishes for ``t <= 0``.  Completing the square,

    3|x|^2 - 3 t x.y + t^2|y|^2 = 3 |x - t y / 2|^2 + t^2 |y|^2 / 4,

so ``gamma`` is the product of the velocity marginal ``N(0, 2t)`` and a Gaussian in
``x - t y / 2`` with variance ``t^3 / 6`` per component.  The fractional kernel
``gamma2 = |d_x|^(2/3) gamma`` inherits this structure: only the x-Gaussian is touched
by the multiplier, which leaves a radial d-dimensional inverse transform.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from math import gamma as gamma_fn, pi

import numpy as np
from scipy import integrate, special

from .geometry import GPoint, dilate, homogeneous_dimension, quasi_norm, sample_unit_sphere

FRACTIONAL_ORDER = 2.0 / 3.0
KERNEL_IDS = ("gamma", "gamma_grad_y", "gamma1", "gamma2", "gamma2_isotropic")


class KernelDomainError(ValueError):
    """Raised when a kernel is evaluated where it is singular or undefined."""


def _split(z: GPoint):
    return z.x, z.y, z.t


def _quadratic_form(x, y, t):
    """``(3|x|^2 - 3 t x.y + t^2|y|^2) / t^3`` for t > 0 (broadcast over batches)."""
    xx = np.sum(x * x, axis=-1)
    xy = np.sum(x * y, axis=-1)
    yy = np.sum(y * y, axis=-1)
    return (3.0 * xx - 3.0 * t * xy + t * t * yy) / t**3


def gamma_xyt(x, y, t):
    """Array form of :func:`gamma`: ``x, y`` of shape (..., d), ``t`` of shape (...)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    d = x.shape[-1]
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    pref = (3.0 / (4.0 * pi**2 * ts**4)) ** (d / 2)
    val = pref * np.exp(-_quadratic_form(x, y, ts))
    return np.where(pos, val, 0.0)


def gamma(z: GPoint):
    """Fundamental solution; zero for ``t <= 0``."""
    return gamma_xyt(*_split(z))


def gamma_grad_y(z: GPoint):
    """``grad_y gamma = (3x - 2ty) / t^2 * gamma``, shape (..., d)."""
    x, y, t = _split(z)
    pos = t > 0
    ts = np.where(pos, t, 1.0)[..., None]
    g = gamma_xyt(x, y, t)[..., None]
    return np.where(pos[..., None], (3.0 * x - 2.0 * ts * y) / ts**2 * g, 0.0)


def gamma1_xyt(x, y, t):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    d = x.shape[-1]
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    r = 3.0 * x - 2.0 * ts[..., None] * y
    factor = np.sum(r * r, axis=-1) / ts**4 - 2.0 * d / ts
    return np.where(pos, factor * gamma_xyt(x, y, t), 0.0)


def gamma1(z: GPoint):
    """``Lap_y gamma = (|3x - 2ty|^2 / t^4 - 2d / t) gamma``; singular at ``t = 0``."""
    if np.any(z.t == 0):
        raise KernelDomainError("gamma1 is singular at t = 0")
    return gamma1_xyt(*_split(z))


def symbol_F(xi, eta, t):
    """Exponent of the Fourier transform of gamma: ``hat(gamma) = exp(-F)``.

    ``F = (t^3|xi|^2 + 3 t^2 xi.eta + 3 t |eta|^2) / 3``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    t = np.asarray(t, dtype=float)
    xx = np.sum(xi * xi, axis=-1)
    xe = np.sum(xi * eta, axis=-1)
    ee = np.sum(eta * eta, axis=-1)
    return (t**3 * xx + 3.0 * t**2 * xe + 3.0 * t * ee) / 3.0


# Smallest c with F >= c (t^3|xi|^2 + t|eta|^2): lambda_min([[1, 3/2], [3/2, 3]]) / 3.
SYMBOL_COERCIVITY = (4.0 - np.sqrt(13.0)) / 6.0


# -- gamma2 ------------------------------------------------------------------


def _velocity_marginal(y, t):
    d = y.shape[-1]
    return (4.0 * pi * t) ** (-d / 2) * np.exp(-np.sum(y * y, axis=-1) / (4.0 * t))


def fractional_gaussian_hyp1f1(r, a, d: int, s: float = FRACTIONAL_ORDER):
    """``(2 pi)^-d int |xi|^s exp(-a|xi|^2) exp(i xi.x) dxi`` at ``|x| = r``.

    Closed form through Kummer's function ``1F1((d+s)/2; d/2; -r^2/(4a))``.
    """
    r = np.asarray(r, dtype=float)
    a = np.asarray(a, dtype=float)
    h = (d + s) / 2.0
    pref = (2 * pi) ** (-d) * pi ** (d / 2) * gamma_fn(h) / gamma_fn(d / 2)
    return pref * a ** (-h) * special.hyp1f1(h, d / 2.0, -(r * r) / (4.0 * a))


def fractional_gaussian_quad(r: float, a: float, d: int, s: float = FRACTIONAL_ORDER,
                             epsabs: float = 1e-14, epsrel: float = 1e-11) -> float:
    """Same quantity as :func:`fractional_gaussian_hyp1f1` by adaptive radial quadrature."""
    rho_max = np.sqrt(60.0 / a)
    if d == 1:
        val, _ = integrate.quad(
            lambda k: k**s * np.exp(-a * k * k), 0.0, rho_max,
            weight="cos", wvar=r, limit=2000, epsabs=epsabs, epsrel=epsrel,
        )
        return val / pi
    nu = d / 2.0 - 1.0
    if r == 0.0:
        val, _ = integrate.quad(
            lambda k: k ** (s + d - 1) * np.exp(-a * k * k), 0.0, rho_max,
            limit=2000, epsabs=epsabs, epsrel=epsrel,
        )
        area = 2.0 * pi ** (d / 2) / gamma_fn(d / 2)
        return area * val / (2 * pi) ** d
    val, _ = integrate.quad(
        lambda k: k ** (s + d / 2.0) * np.exp(-a * k * k) * special.jv(nu, r * k),
        0.0, rho_max, limit=4000, epsabs=epsabs, epsrel=epsrel,
    )
    return (2 * pi) ** (-d / 2) * r ** (1 - d / 2.0) * val


def gamma2_xyt(x, y, t):
    """Array form of ``gamma2`` (closed form); returns 0 for ``t <= 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    d = x.shape[-1]
    pos = t > 0
    ts = np.where(pos, t, 1.0)
    r = np.sqrt(np.sum((x - 0.5 * ts[..., None] * y) ** 2, axis=-1))
    val = _velocity_marginal(y, ts) * fractional_gaussian_hyp1f1(r, ts**3 / 12.0, d)
    return np.where(pos, val, 0.0)


def _gamma2_quad(x, y, t, epsabs, epsrel):
    d = x.shape[-1]
    flat_x = x.reshape(-1, d)
    flat_y = y.reshape(-1, d)
    flat_t = t.reshape(-1)
    out = np.empty(flat_t.shape)
    for i in range(flat_t.size):
        ti = flat_t[i]
        r = float(np.linalg.norm(flat_x[i] - 0.5 * ti * flat_y[i]))
        a = ti**3 / 12.0
        # rescale so the quadrature always sees a = 1; G(r; a) = a^{-(d+s)/2} G(r / sqrt(a); 1)
        g = fractional_gaussian_quad(r / np.sqrt(a), 1.0, d, epsabs=epsabs, epsrel=epsrel)
        out[i] = _velocity_marginal(flat_y[i], ti) * a ** (-(d + FRACTIONAL_ORDER) / 2) * g
    return out.reshape(t.shape)


def gamma2_lattice(x, y, t, box_x: float = 8000.0, box_y: float = 12.0, cutoff: float = 40.0,
                   chunk: int = 2_000_000):
    """``gamma2`` as a lattice sum of ``|xi|^(2/3) exp(-F)`` over the 2d-dimensional
    frequency lattice (trapezoid rule for the inverse transform; d = 1 only).

    The lattice spacing is ``pi / (box * scale)`` with ``scale = t^(3/2)`` in x and
    ``t^(1/2)`` in y; by Poisson summation the error is the periodisation of gamma2
    over those boxes, which is dominated by its ``|x|^(-5/3)`` tail.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if x.shape[-1] != 1:
        raise NotImplementedError("the lattice route is implemented for d = 1")
    flat = zip(x[..., 0].reshape(-1), y[..., 0].reshape(-1), t.reshape(-1))
    out = []
    for x0, y0, ti in flat:
        lx = max(box_x, 4.0 * abs(x0) / ti**1.5) * ti**1.5
        ly = max(box_y, 4.0 * abs(y0) / np.sqrt(ti)) * np.sqrt(ti)
        dxi, deta = pi / lx, pi / ly
        ximax = np.sqrt(12.0 * cutoff / ti**3)
        etamax = 0.5 * ti * ximax + np.sqrt(cutoff / ti)
        # the summand is even under (xi, eta) -> (-xi, -eta): sum xi > 0 twice, xi = 0 once
        xi = dxi * np.arange(1, int(ximax / dxi) + 2)
        eta = deta * np.arange(-int(etamax / deta) - 1, int(etamax / deta) + 2)
        total = 0.0  # the xi = 0 row carries |xi|^s = 0
        step = max(1, chunk // eta.size)
        for j in range(0, xi.size, step):
            xs = xi[j:j + step, None]
            F = (ti**3 * xs * xs + 3 * ti**2 * xs * eta[None, :] + 3 * ti * eta[None, :] ** 2) / 3.0
            total += 2.0 * np.sum(
                xs**FRACTIONAL_ORDER * np.exp(-F) * np.cos(xs * x0 + eta[None, :] * y0)
            )
        out.append(total * dxi * deta / (2 * pi) ** 2)
    return np.asarray(out).reshape(t.shape)


def gamma2(z: GPoint, method: str = "hyp1f1", epsabs: float = 1e-14, epsrel: float = 1e-11,
           **lattice_opts):
    """``|d_x|^(2/3) gamma`` on ``t > 0``.

    ``method`` selects the evaluation route:

    * ``"hyp1f1"`` -- closed form via the confluent hypergeometric function (default);
    * ``"quadrature"`` -- adaptive radial quadrature of the d-dimensional inverse transform
      of ``|xi|^(2/3)`` times the Gaussian x-transform;
    * ``"lattice"`` -- trapezoid sum over the full (xi, eta) frequency lattice.
    """
    x, y, t = _split(z)
    if np.any(t <= 0):
        raise KernelDomainError("gamma2 is evaluated only on t > 0")
    if method == "hyp1f1":
        return gamma2_xyt(x, y, t)
    if method == "quadrature":
        return _gamma2_quad(x, y, t, epsabs, epsrel)
    if method == "lattice":
        return gamma2_lattice(x, y, t, **lattice_opts)
    raise ValueError(f"unknown gamma2 method {method!r}")


@dataclass(frozen=True)
class KernelFamily:
    """Kernel evaluators for a fixed dimension with the quadrature controls for gamma2."""

    d: int = 1
    gamma2_method: str = "hyp1f1"
    epsabs: float = 1e-14
    epsrel: float = 1e-11

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.epsabs <= 0 or self.epsrel <= 0:
            raise ValueError("tolerances must be positive")

    def _check(self, z: GPoint):
        if z.d != self.d:
            raise ValueError(f"point dimension {z.d} != family dimension {self.d}")

    def gamma(self, z):
        self._check(z)
        return gamma(z)

    def gamma1(self, z):
        self._check(z)
        return gamma1(z)

    def gamma2(self, z):
        self._check(z)
        return gamma2(z, self.gamma2_method, self.epsabs, self.epsrel)

    def symbol(self, xi, eta, t):
        return symbol_F(xi, eta, t)


# -- identities ---------------------------------------------------------------


def total_mass(t: float, d: int = 1, n: int = 401, n_std: float = 12.0) -> float:
    """Trapezoid integral of ``gamma(., ., t)`` over a rectangular (x, y) box."""
    if d != 1:
        # gamma factorises over components, so the d-dimensional mass is the d-th power
        return total_mass(t, 1, n, n_std) ** d
    sx = np.sqrt(2.0 * t**3 / 3.0)
    sy = np.sqrt(2.0 * t)
    xs = np.linspace(-n_std * sx, n_std * sx, n)
    ys = np.linspace(-n_std * sy, n_std * sy, n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = gamma_xyt(X[..., None], Y[..., None], np.full(X.shape, t))
    return float(integrate.trapezoid(integrate.trapezoid(vals, ys, axis=1), xs))


@dataclass
class ChapmanKolmogorovResult:
    residual: float
    value: float
    reference: float
    converged: bool


def _ck_integral(t1, t2, x, y, n, n_std):
    # integrate over the factor with the smaller time, in coordinates where it is a
    # product Gaussian: a = u - s v / 2 (variance s^3/6), v (variance 2s)
    small, other = (t1, t2) if t1 <= t2 else (t2, t1)
    sa = np.sqrt(small**3 / 6.0)
    sv = np.sqrt(2.0 * small)
    a = np.linspace(-n_std * sa, n_std * sa, n)
    v = np.linspace(-n_std * sv, n_std * sv, n)
    A, V = np.meshgrid(a, v, indexing="ij")
    U = A + 0.5 * small * V
    if t1 <= t2:
        # zeta = (U, V, t1);  zeta^{-1} o z = (x - U - t2 V, y - V, t2)
        first = gamma_xyt(U[..., None], V[..., None], np.full(U.shape, t1))
        second = gamma_xyt((x - U - t2 * V)[..., None], (y - V)[..., None], np.full(U.shape, t2))
    else:
        # (U, V) are the coordinates of zeta^{-1} o z at time t2
        xi = x - U - t2 * (y - V)
        eta = y - V
        first = gamma_xyt(xi[..., None], eta[..., None], np.full(U.shape, t1))
        second = gamma_xyt(U[..., None], V[..., None], np.full(U.shape, t2))
    vals = first * second
    return float(integrate.trapezoid(integrate.trapezoid(vals, v, axis=1), a))


def chapman_kolmogorov_check(t1: float, t2: float, z: GPoint, n: int = 401,
                             n_std: float = 12.0, tol: float = 1e-9) -> ChapmanKolmogorovResult:
    """Residual of ``gamma(z) = int gamma(zeta^{-1} o z) gamma(zeta) |_{t(zeta) = t1}``
    for ``z = (x, y, t1 + t2)`` and d = 1."""
    if t1 <= 0 or t2 <= 0:
        raise ValueError("t1 and t2 must be positive")
    if z.d != 1:
        raise NotImplementedError("the semigroup check is implemented for d = 1")
    if not np.isclose(float(z.t), t1 + t2, rtol=1e-14, atol=1e-14):
        raise ValueError("z.t must equal t1 + t2")
    x, y = float(z.x[0]), float(z.y[0])
    value = _ck_integral(t1, t2, x, y, n, n_std)
    check = _ck_integral(t1, t2, x, y, 2 * n - 1, n_std)
    ref = float(gamma(z))
    converged = abs(value - check) <= tol * max(abs(ref), 1e-300) + 1e-300
    if not converged:
        warnings.warn(f"Chapman-Kolmogorov quadrature not converged: {value} vs {check}")
    return ChapmanKolmogorovResult(abs(value - ref), value, ref, bool(converged))


# -- pointwise bound scans ----------------------------------------------------


def weight_exponents(kernel: str, d: int) -> dict:
    return {
        "gamma": {"quasi_norm": 4 * d},
        "gamma_grad_y": {"quasi_norm": 4 * d + 1},
        "gamma1": {"quasi_norm": 4 * d + 2},
        "gamma2": {"quasi_norm": 3 * d + 2, "parabolic_norm": d},
        "gamma2_isotropic": {"quasi_norm": 4 * d + 2},
    }[kernel]


def weighted_kernel(kernel: str, z: GPoint) -> np.ndarray:
    """Kernel magnitude times the homogeneous weight of matching degree.

    Each weighted quantity is invariant along dilation orbits.
    """
    d = z.d
    nrm = quasi_norm(z)
    if kernel == "gamma":
        return nrm ** (4 * d) * np.abs(gamma(z))
    if kernel == "gamma_grad_y":
        g = gamma_grad_y(z)
        return nrm ** (4 * d + 1) * np.sqrt(np.sum(g * g, axis=-1))
    if kernel == "gamma1":
        return nrm ** (4 * d + 2) * np.abs(gamma1_xyt(z.x, z.y, z.t))
    if kernel == "gamma2":
        par = np.sqrt(np.sum(z.y**2, axis=-1)) + np.sqrt(np.abs(z.t))
        return nrm ** (3 * d + 2) * par**d * np.abs(gamma2_xyt(z.x, z.y, z.t))
    if kernel == "gamma2_isotropic":
        return nrm ** (4 * d + 2) * np.abs(gamma2_xyt(z.x, z.y, z.t))
    raise ValueError(f"unknown kernel id {kernel!r}")


@dataclass
class BoundScanReport:
    kernel: str
    weight_exponents: dict
    supremum: float
    sample_count: int
    seed: int
    stable: bool
    supremum_coarse: float = float("nan")
    d: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def scan_points(rng: np.random.Generator, n: int, d: int, t_min: float = 1e-3,
                scale_range=(1e-2, 1e2)) -> GPoint:
    """Unit-sphere samples with ``t >= t_min`` pushed to log-uniform scales."""
    chunks = []
    got = 0
    while got < n:
        w = sample_unit_sphere(rng, max(3 * (n - got), 1000), d)
        w = w[w.t >= t_min]
        chunks.append(w)
        got += len(w.t)
    w = GPoint(
        np.concatenate([c.x for c in chunks])[:n],
        np.concatenate([c.y for c in chunks])[:n],
        np.concatenate([c.t for c in chunks])[:n],
    )
    lo, hi = np.log(scale_range[0]), np.log(scale_range[1])
    lam = np.exp(rng.uniform(lo, hi, size=n))
    return dilate(lam, w)


def scan_bound(kernel: str, n_samples: int, seed: int, d: int = 1) -> BoundScanReport:
    """Sampled supremum of the weighted kernel, with a 10x-sample stability check."""
    if kernel not in KERNEL_IDS:
        raise ValueError(f"kernel must be one of {KERNEL_IDS}")
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    ss = np.random.SeedSequence(seed)
    coarse_rng, fine_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    coarse = float(np.max(weighted_kernel(kernel, scan_points(coarse_rng, n_samples, d))))
    fine = 0.0
    block = 100_000
    for start in range(0, 10 * n_samples, block):
        m = min(block, 10 * n_samples - start)
        fine = max(fine, float(np.max(weighted_kernel(kernel, scan_points(fine_rng, m, d)))))
    finite = np.isfinite(fine) and np.isfinite(coarse)
    stable = bool(finite and coarse > 0 and max(fine, coarse) / min(fine, coarse) < 2.0)
    return BoundScanReport(kernel, weight_exponents(kernel, d), fine, 10 * n_samples, seed,
                           stable, coarse, d)


def orbit_values(kernel: str, z0: GPoint, lambdas) -> np.ndarray:
    lambdas = np.asarray(lambdas, dtype=float)
    pts = GPoint(
        np.broadcast_to(z0.x, lambdas.shape + (z0.d,)),
        np.broadcast_to(z0.y, lambdas.shape + (z0.d,)),
        np.broadcast_to(z0.t, lambdas.shape),
    )
    return weighted_kernel(kernel, dilate(lambdas, pts))


def homogeneity_degree(kernel: str, d: int) -> int:
    Q = homogeneous_dimension(d)
    return {"gamma": -(Q - 2), "gamma1": -Q, "gamma2": -Q}[kernel]
