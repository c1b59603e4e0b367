"""Solution operators for ``L u = f`` and the stationary time-averaging construction.

Spectral route
    With ``u_hat(xi, y, t)`` the x-transform, ``L u = f`` becomes
    ``d_t u_hat = Lap_y u_hat - i (xi.y) u_hat + f_hat``.  Its propagator over a time ``s``
    factorises exactly as

        S(s) = exp(-s^3 |xi|^2 / 12) . P(s xi / 2) . H(s) . P(s xi / 2),

    where ``P(a)`` multiplies by ``exp(-i a.y)`` (a shift of the y-frequency by ``a``) and
    ``H(s)`` is the heat semigroup in y.  Time steps use Duhamel's formula with
    Gauss-Legendre nodes for the source integral, so the only discretisation errors are the
    lattice truncation in (x, y) and the source quadrature in t.

Pointwise route
    ``u(z) = int_0^inf ds int f(x', y', t - s) gamma(x - x' - s y', y - y', s) dx' dy'`` by
    nested Gauss-Legendre panels that follow the Gaussian window of the kernel.

Gaussian bumps
    For sums of Gaussian bumps the inner (x', y') integral is a Gaussian integral in closed
    form, as are its y-Laplacian and its ``|d_x|^(2/3)``.  The stationary construction uses
    this together with

        U_R = int_0^inf W(s / R) P_s f ds,   W(sigma) = (1/2) int_{-1}^{1} chi(tau - sigma) dtau,

    which follows from averaging the Duhamel formula for the source ``f chi(t / R)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .discretization import Field, Grid, lattice_coords, lp_norm
from .kernel import FRACTIONAL_ORDER, fractional_gaussian_hyp1f1, gamma1_xyt, gamma_xyt
from .geometry import GPoint


class ResolutionError(ValueError):
    """The lattice cannot represent the requested solve."""


class QuadratureError(RuntimeError):
    def __init__(self, msg, estimate, error):
        super().__init__(f"{msg} (estimate {estimate:.6e}, error {error:.3e})")
        self.estimate = estimate
        self.error = error


@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


# -- cutoff profile --------------------------------------------------------------

def _mollifier(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    out[m] = np.exp(-1.0 / (1.0 - u[m] ** 2))
    return out


_GL64 = gauss_legendre01(64)
_MOLLIFIER_MASS = float(2.0 * np.sum(_GL64[1] * _mollifier(2.0 * _GL64[0] - 1.0)))


def smooth_step(u):
    """``int_{-1}^{u} rho / int rho`` for the mollifier ``rho = exp(-1/(1-u^2))``."""
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    x, w = _GL64
    length = u + 1.0
    nodes = -1.0 + length[..., None] * x
    return length * np.sum(w * _mollifier(nodes), axis=-1) / _MOLLIFIER_MASS


def smooth_cutoff(t):
    """Equal to 1 on ``|t| <= 2``, vanishing for ``|t| >= 4``, smooth in between."""
    return smooth_step(3.0 - np.abs(np.asarray(t, dtype=float)))


def average_weight(sigma, chi: Callable = smooth_cutoff, n: int = 64):
    """``W(sigma) = (1/2) int_{-1}^{1} chi(tau - sigma) dtau``."""
    x, w = gauss_legendre01(n)
    sigma = np.asarray(sigma, dtype=float)
    tau = -1.0 + 2.0 * x
    return np.sum(w * chi(tau - sigma[..., None]), axis=-1)


# -- sources ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SourceTerm:
    """A right-hand side: a callable ``f(x, y, t)`` with declared support box, or a Field.

    ``x``, ``y`` are passed as arrays of shape ``(..., d)`` and ``t`` as ``(...)``.  The box is a
    ``(2d + 1, 2)`` array of ``[lo, hi]`` rows ordered ``x_1..x_d, y_1..y_d, t``.
    """

    d: int
    func: Callable | None = None
    field: Field | None = None
    support: np.ndarray | None = None
    smooth: bool = True

    def __post_init__(self):
        if (self.func is None) == (self.field is None):
            raise ValueError("give exactly one of func and field")
        if self.field is not None:
            g = self.field.grid
            if not g.has_time or g.d != self.d:
                raise ValueError("field source must live on an (x, y, t) grid of matching d")
            sup = np.array([[-g.Lx, g.Lx]] * self.d + [[-g.Ly, g.Ly]] * self.d + [[-g.Lt, g.Lt]])
        else:
            if self.support is None:
                raise ValueError("callable sources need a support box")
            sup = np.asarray(self.support, dtype=float)
        if sup.shape != (2 * self.d + 1, 2) or np.any(sup[:, 0] >= sup[:, 1]):
            raise ValueError("support must be a (2d+1, 2) array of increasing intervals")
        object.__setattr__(self, "support", sup)

    @classmethod
    def from_callable(cls, f, d, x_box, y_box, t_box, smooth=True):
        box = [x_box] * d + [y_box] * d + [t_box]
        return cls(d, func=f, support=np.array(box, dtype=float), smooth=smooth)

    @classmethod
    def from_field(cls, field: Field):
        return cls(field.grid.d, field=field)

    def __call__(self, x, y, t):
        if self.func is None:
            raise TypeError("field sources are only available at lattice nodes")
        return self.func(x, y, t)

    def inside(self, grid: Grid) -> bool:
        d = self.d
        box = np.array([[-grid.Lx, grid.Lx]] * d + [[-grid.Ly, grid.Ly]] * d + [[-grid.Lt, grid.Lt]])
        return bool(np.all(self.support[:, 0] >= box[:, 0] - 1e-12) and np.all(self.support[:, 1] <= box[:, 1] + 1e-12))

    def sample(self, grid: Grid) -> Field:
        if self.field is not None:
            return self.field
        return Field.from_function(grid, self.func)


@dataclass(frozen=True)
class GaussianBumps:
    """``sum_k a_k exp(-|x-cx_k|^2/2wx_k^2 - |y-cy_k|^2/2wy_k^2 [- (t-ct_k)^2/2wt_k^2])``.

    Without ``ct`` the sum is a stationary source ``f(x, y)``.  The Gaussian tails beyond
    ``TAIL_WIDTHS`` widths (``exp(-32)`` relative) are treated as outside the support.
    """

    amplitude: np.ndarray
    cx: np.ndarray
    cy: np.ndarray
    wx: np.ndarray
    wy: np.ndarray
    ct: np.ndarray | None = None
    wt: np.ndarray | None = None

    TAIL_WIDTHS = 8.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.amplitude, dtype=float))
        n = a.size
        cx = np.asarray(self.cx, dtype=float).reshape(n, -1)
        cy = np.asarray(self.cy, dtype=float).reshape(n, -1)
        if cx.shape != cy.shape:
            raise ValueError("cx and cy must have equal shape")
        vals = {"amplitude": a, "cx": cx, "cy": cy}
        for k in ("wx", "wy"):
            v = np.broadcast_to(np.asarray(getattr(self, k), dtype=float), (n,)).copy()
            if np.any(v <= 0):
                raise ValueError("widths must be positive")
            vals[k] = v
        if (self.ct is None) != (self.wt is None):
            raise ValueError("ct and wt must be given together")
        if self.ct is not None:
            vals["ct"] = np.broadcast_to(np.asarray(self.ct, dtype=float), (n,)).copy()
            vals["wt"] = np.broadcast_to(np.asarray(self.wt, dtype=float), (n,)).copy()
            if np.any(vals["wt"] <= 0):
                raise ValueError("widths must be positive")
        for k, v in vals.items():
            object.__setattr__(self, k, v)

    @property
    def d(self) -> int:
        return self.cx.shape[1]

    @property
    def stationary(self) -> bool:
        return self.ct is None

    def __len__(self):
        return self.amplitude.size

    def spatial_part(self, k: int, x, y):
        return np.exp(
            -np.sum((x - self.cx[k]) ** 2, axis=-1) / (2 * self.wx[k] ** 2)
            - np.sum((y - self.cy[k]) ** 2, axis=-1) / (2 * self.wy[k] ** 2)
        )

    def time_part(self, k: int, t):
        return np.exp(-((t - self.ct[k]) ** 2) / (2 * self.wt[k] ** 2))

    def __call__(self, x, y, t=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = 0.0
        for k in range(len(self)):
            term = self.amplitude[k] * self.spatial_part(k, x, y)
            if not self.stationary:
                term = term * self.time_part(k, np.asarray(t, dtype=float))
            out = out + term
        return out

    def support_box(self) -> np.ndarray:
        m = self.TAIL_WIDTHS
        rows = []
        for c, w in ((self.cx, self.wx), (self.cy, self.wy)):
            for i in range(self.d):
                rows.append([np.min(c[:, i] - m * w), np.max(c[:, i] + m * w)])
        if not self.stationary:
            rows.append([np.min(self.ct - m * self.wt), np.max(self.ct + m * self.wt)])
        return np.array(rows)

    def as_source(self) -> SourceTerm:
        if self.stationary:
            raise ValueError("a stationary bump sum has no t-dependence")
        return SourceTerm(self.d, func=self, support=self.support_box())

    def dilated(self, lam: float) -> "GaussianBumps":
        """Bumps representing ``lam^2 f(delta(lam) z)``."""
        kw = dict(
            amplitude=lam**2 * self.amplitude,
            cx=self.cx / lam**3, cy=self.cy / lam, wx=self.wx / lam**3, wy=self.wy / lam,
        )
        if not self.stationary:
            kw.update(ct=self.ct / lam**2, wt=self.wt / lam**2)
        return GaussianBumps(**kw)

    def scaled(self, c: float) -> "GaussianBumps":
        kw = dict(amplitude=c * self.amplitude, cx=self.cx, cy=self.cy, wx=self.wx, wy=self.wy,
                  ct=self.ct, wt=self.wt)
        return GaussianBumps(**kw)

    def integral(self) -> float:
        """``int f dx dy`` for stationary sums (the t-integral as well otherwise)."""
        tot = self.amplitude * (2 * np.pi * self.wx * self.wy) ** self.d
        if not self.stationary:
            tot = tot * np.sqrt(2 * np.pi) * self.wt
        return float(np.sum(tot))

    def heat_flow(self, x, y, s, which: str = "u", ks=None):
        """Closed form of ``int g(x', y') gamma(x - x' - s y', y - y', s) dx' dy'`` for the spatial
        bumps ``g`` (time profile ignored), or of its y-Laplacian / ``|d_x|^(2/3)``.

        ``x``, ``y`` have shape ``(..., d)`` and broadcast against ``s``'s shape ``(...)``.
        Under the kernel, ``(x', y')`` is Gaussian with mean ``(x - s y, y)`` and per-component
        covariance ``[[2 s^3/3, -s^2], [-s^2, 2 s]]``.
        """
        if which not in ("u", "lap_y", "frac_x"):
            raise ValueError(f"unknown output {which!r}")
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = np.asarray(s, dtype=float)
        d = self.d
        ks = range(len(self)) if ks is None else ks
        out = 0.0
        for k in ks:
            a2, b2 = self.wx[k] ** 2, self.wy[k] ** 2
            sxx, sxy, syy = a2 + 2 * s**3 / 3, -(s**2), b2 + 2 * s
            det = sxx * syy - sxy**2
            m11, m12, m22 = syy / det, -sxy / det, sxx / det
            alpha = x - s[..., None] * y - self.cx[k]
            beta = y - self.cy[k]
            amp = self.amplitude[k] * (np.sqrt(a2 * b2 / det)) ** d
            if which == "frac_x":
                # Gaussian in x with variance 1/m11 about x0 = x - alpha - (m12/m11) beta
                v = 1.0 / m11
                rest = np.exp(-0.5 * (m22 - m12**2 / m11) * np.sum(beta**2, axis=-1))
                r = np.sqrt(np.sum((alpha + (m12 / m11)[..., None] * beta) ** 2, axis=-1))
                out = out + amp * rest * (2 * np.pi * v) ** (d / 2) * fractional_gaussian_hyp1f1(
                    r, v / 2.0, d, FRACTIONAL_ORDER
                )
                continue
            q = (m11[..., None] * alpha**2 + 2 * m12[..., None] * alpha * beta + m22[..., None] * beta**2)
            val = amp * np.exp(-0.5 * np.sum(q, axis=-1))
            if which == "lap_y":
                # d/dy of r = (alpha, beta) is (-s, 1)
                vm_r = (-s * m11 + m12)[..., None] * alpha + (-s * m12 + m22)[..., None] * beta
                vmv = s**2 * m11 - 2 * s * m12 + m22
                val = val * (np.sum(vm_r**2, axis=-1) - d * vmv)
            out = out + val
        return out


# -- solution containers ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Solution:
    u: Field
    lap_y_u: Field
    frac_x_u: Field
    method: str
    diagnostics: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not (self.u.grid == self.lap_y_u.grid == self.frac_x_u.grid):
            raise ValueError("solution fields must share one grid")

    @property
    def grid(self) -> Grid:
        return self.u.grid


@dataclass(frozen=True)
class StationaryResult:
    R: tuple
    U: tuple  # Field per R
    u_inf: Field
    gaps: tuple
    lap_y_U: tuple = ()
    frac_x_U: tuple = ()
    boundary_terms: tuple = ()
    diagnostics: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if np.any(np.diff(R) <= 0):
            raise ValueError("R values must be strictly increasing")
        if len(self.U) != R.size or len(self.gaps) != R.size:
            raise ValueError("one field and one gap per R")
        if any(g < 0 for g in self.gaps):
            raise ValueError("gaps must be non-negative")

    def slope(self) -> float:
        """Least-squares slope of ``log gap`` against ``log R``."""
        return float(np.polyfit(np.log(self.R), np.log(self.gaps), 1)[0])


# -- spectral solver --------------------------------------------------------------------------------

class _Propagator:
    """Exact propagator ``S(s)`` acting on slabs ``u_hat(xi, y)`` (real FFT over x)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        d = grid.d
        self.xaxes = grid.axes("x")
        self.yaxes = grid.axes("y")
        self.slab_shape_x = (grid.Nx,) * d
        ndim = 2 * d
        xi = []
        for i in range(d):
            n = grid.Nx
            f = sfft.rfftfreq(n, grid.dx) if i == d - 1 else sfft.fftfreq(n, grid.dx)
            shape = [1] * ndim
            shape[i] = f.size
            xi.append((2 * np.pi * f).reshape(shape))
        self.xi = xi
        self.xi2 = sum(k * k for k in xi)
        eta2 = 0.0
        ys = []
        for i in range(d):
            shape = [1] * ndim
            shape[d + i] = grid.Ny
            eta2 = eta2 + (2 * np.pi * sfft.fftfreq(grid.Ny, grid.dy)).reshape(shape) ** 2
            ys.append(grid.nodes("y").reshape(shape))
        self.eta2 = eta2
        self.xi_dot_y = sum(k * yy for k, yy in zip(xi, ys))
        self._cache = {}

    def max_shift_ratio(self, s: float) -> float:
        """Largest y-frequency shift ``s |xi| / 2`` relative to the y Nyquist frequency."""
        xi_max = np.pi / self.grid.dx * np.sqrt(self.grid.d)
        return s * xi_max / 2 / (np.pi / self.grid.dy)

    def _factors(self, s):
        key = float(s)
        if key not in self._cache:
            phase = np.exp(-0.5j * s * self.xi_dot_y)
            heat = np.exp(-s * self.eta2)
            damp = np.exp(-(s**3) * self.xi2 / 12.0)
            self._cache[key] = (phase, heat, damp * phase)
        return self._cache[key]

    def apply(self, v, s):
        if s == 0:
            return v
        phase, heat, damp_phase = self._factors(s)
        w = sfft.ifftn(sfft.fftn(v * phase, axes=self.yaxes) * heat, axes=self.yaxes)
        return w * damp_phase

    def forward_x(self, a):
        return sfft.rfftn(a, axes=self.xaxes)

    def inverse_x(self, a):
        return sfft.irfftn(a, s=self.slab_shape_x, axes=self.xaxes)

    def lap_y(self, v):
        return sfft.ifftn(sfft.fftn(v, axes=self.yaxes) * (-self.eta2), axes=self.yaxes)


def _lagrange_weights(nodes, x):
    w = np.ones(len(nodes))
    for j, xj in enumerate(nodes):
        for m, xm in enumerate(nodes):
            if m != j:
                w[j] *= (x - xm) / (xj - xm)
    return w


def solve_spectral(f: SourceTerm, grid: Grid, n_gauss: int = 4, shift_budget: float = 0.5,
                   y_edge_tol: float = 1e-6) -> Solution:
    """March the exact propagator along the t-axis of ``grid`` starting from ``u = 0``.

    Parameters
    ----------
    f : SourceTerm
        Callable sources are evaluated at the Gauss nodes of every step; Field sources are
        interpolated in t with 4-point Lagrange stencils.
    n_gauss : int
        Gauss-Legendre nodes per step for the Duhamel source integral.
    shift_budget : float
        Largest admissible y-frequency shift per step as a fraction of the y Nyquist frequency.
    y_edge_tol : float
        Largest admissible relative magnitude of the source on the y-faces of the box.

    Raises
    ------
    ResolutionError
        If the shift per step exceeds the budget or the data do not decay in y inside the box.
    """
    if not grid.has_time:
        raise ValueError("solve_spectral needs an (x, y, t) grid")
    if f.d != grid.d:
        raise ValueError("source and grid dimensions differ")
    if not f.inside(grid):
        raise ValueError("declared source support is not contained in the grid box")
    prop = _Propagator(grid)
    dt = grid.dt
    ratio = prop.max_shift_ratio(dt)
    if ratio > shift_budget:
        need = int(2 ** np.ceil(np.log2(grid.Ny * ratio / shift_budget)))
        raise ResolutionError(
            f"y-frequency shift per step is {ratio:.2f} of Nyquist (budget {shift_budget}); "
            f"use Ny >= {need} or a finer t-lattice"
        )
    d = grid.d
    X, Y = lattice_coords(grid.spatial())
    sshape = grid.spatial().shape
    tn = grid.nodes("t")
    theta, wq = gauss_legendre01(n_gauss)
    fld = f.field.values if f.field is not None else None

    def source_slab(t):
        if fld is None:
            return np.broadcast_to(f(X, Y, t), sshape).astype(float)
        # 4-point Lagrange in t, stencil clamped to the lattice
        j = int(np.clip(np.floor((t - tn[0]) / dt), 0, len(tn) - 1))
        lo = int(np.clip(j - 1, 0, len(tn) - 4))
        idx = np.arange(lo, lo + 4)
        w = _lagrange_weights(tn[idx], t)
        return np.tensordot(fld[..., idx], w, axes=([-1], [0]))

    u = np.empty(grid.shape)
    lap = np.empty(grid.shape)
    frac = np.empty(grid.shape)
    frac_mult = prop.xi2 ** (FRACTIONAL_ORDER / 2)
    vhat = np.zeros(prop.forward_x(np.zeros(grid.spatial().shape)).shape, dtype=complex)
    edge_max, src_max = 0.0, 0.0
    yaxes = grid.axes("y")

    def record(n, vh):
        u[..., n] = prop.inverse_x(vh)
        lap[..., n] = prop.inverse_x(prop.lap_y(vh)).real
        frac[..., n] = prop.inverse_x(vh * frac_mult)

    record(0, vhat)
    for n in range(grid.Nt - 1):
        new = prop.apply(vhat, dt)
        for th, w in zip(theta, wq):
            slab = source_slab(tn[n] + th * dt)
            src_max = max(src_max, float(np.max(np.abs(slab))))
            for ax in yaxes:
                edge = np.take(slab, [0], axis=ax)
                edge_max = max(edge_max, float(np.max(np.abs(edge))))
            new = new + (w * dt) * prop.apply(prop.forward_x(slab), dt * (1.0 - th))
        vhat = new
        record(n + 1, vhat)
    if src_max > 0 and edge_max > y_edge_tol * src_max:
        raise ResolutionError(
            f"source is {edge_max / src_max:.1e} of its max on the y-faces; enlarge Ly (and Ny)"
        )
    U = Field(grid, u)
    diag = {
        "shift_ratio": ratio,
        "x_edge_fraction": _edge_fraction(u, grid.axes("x")),
        "y_edge_fraction": _edge_fraction(u, yaxes),
        "n_gauss": n_gauss,
    }
    return Solution(U, Field(grid, lap), Field(grid, frac), "spectral", diag)


def _edge_fraction(a, axes) -> float:
    """Share of ``sum |a|`` carried by the outer eighth of the box along the given axes."""
    tot = float(np.sum(np.abs(a)))
    if tot == 0:
        return 0.0
    inner = np.abs(a)
    for ax in axes:
        n = a.shape[ax]
        inner = np.take(inner, np.arange(n // 8, n - n // 8), axis=ax)
    return 1.0 - float(np.sum(inner)) / tot


def spectral_grad_y(u: Field) -> list:
    """``d/dy_i u`` for each component, by the y-multiplier ``i eta_i``."""
    g = u.grid
    out = []
    for i, ax in enumerate(g.axes("y")):
        k = g.broadcast("y", i, g.frequencies("y"))
        out.append(Field(g, sfft.ifft(sfft.fft(u.values, axis=ax) * (1j * k), axis=ax).real))
    return out


def _dt(values, dt, axis, periodic):
    if periodic:
        n = values.shape[axis]
        k = 2 * np.pi * sfft.fftfreq(n, dt)
        shape = [1] * values.ndim
        shape[axis] = n
        return sfft.ifft(sfft.fft(values, axis=axis) * (1j * k.reshape(shape)), axis=axis).real
    # fourth-order differences; one-sided five-point stencils at the ends
    a = np.moveaxis(values, axis, 0)
    out = np.empty_like(a)
    out[2:-2] = (a[:-4] - 8 * a[1:-3] + 8 * a[3:-1] - a[4:]) / (12 * dt)
    out[0] = (-25 * a[0] + 48 * a[1] - 36 * a[2] + 16 * a[3] - 3 * a[4]) / (12 * dt)
    out[1] = (-3 * a[0] - 10 * a[1] + 18 * a[2] - 6 * a[3] + a[4]) / (12 * dt)
    out[-1] = (25 * a[-1] - 48 * a[-2] + 36 * a[-3] - 16 * a[-4] + 3 * a[-5]) / (12 * dt)
    out[-2] = (3 * a[-1] + 10 * a[-2] - 18 * a[-3] + 6 * a[-4] - a[-5]) / (12 * dt)
    return np.moveaxis(out, 0, axis)


def residual_L(solution: Solution, f) -> float:
    """``||d_t u - Lap_y u + y.grad_x u - f||_2 / ||f||_2`` on the lattice.

    x-derivatives are spectral, ``y`` multiplies exactly, the t-derivative is spectral on a
    periodic t-axis and fourth-order finite differences otherwise.  Returns 0 when f = 0 and
    the residual vanishes.
    """
    g = solution.grid
    F = f if isinstance(f, Field) else f.sample(g)
    u = solution.u.values
    res = _dt(u, g.dt, g.axes("t")[0], g.periodic[2]) - solution.lap_y_u.values - F.values
    X, Y = lattice_coords(g)
    for i, ax in enumerate(g.axes("x")):
        k = g.broadcast("x", i, g.frequencies("x"))
        dxu = sfft.ifft(sfft.fft(u, axis=ax) * (1j * k), axis=ax).real
        res = res + Y[..., i] * dxu
    fn = lp_norm(F, 2)
    rn = float(np.sqrt(np.sum(res**2) * g.cell_volume))
    if fn == 0:
        return rn
    return rn / fn


# -- pointwise quadrature --------------------------------------------------------------------

@dataclass(frozen=True)
class QuadControls:
    """Controls for :func:`eval_pointwise`.

    ``n_gl`` nodes per spatial panel; the kernel window is ``window`` standard deviations and
    the support of the source is cut into ``support_panels`` pieces per axis.  The s-integral
    uses ``s_panels`` uniform panels of ``s_gl`` nodes and is repeated with twice as many
    panels for the error estimate, which must be below ``max(rtol |u|, atol)``.
    """

    n_gl: int = 12
    window: float = 10.0
    support_panels: int = 4
    s_panels: int = 12
    s_gl: int = 8
    rtol: float = 1e-7
    atol: float = 1e-10
    kernel: str = "gamma"

    def __post_init__(self):
        if min(self.n_gl, self.s_panels, self.s_gl, self.support_panels) < 1:
            raise ValueError("node and panel counts must be positive")
        if self.rtol <= 0 or self.atol <= 0 or self.window <= 0:
            raise ValueError("tolerances and window must be positive")
        if self.kernel not in ("gamma", "gamma1"):
            raise ValueError("kernel must be 'gamma' or 'gamma1'")


def _panel_nodes(breaks, n):
    """Gauss-Legendre nodes/weights on the panels of sorted breakpoints ``(..., K)``."""
    x, w = gauss_legendre01(n)
    a, b = breaks[..., :-1, None], breaks[..., 1:, None]
    nodes = a + (b - a) * x
    weights = (b - a) * w
    sh = breaks.shape[:-1] + (-1,)
    return nodes.reshape(sh), weights.reshape(sh)


_WINDOW_FRACTIONS = np.array([-1.0, -0.5, -0.25, -0.1, 0.0, 0.1, 0.25, 0.5, 1.0])


def _component_nodes(x, y, s, xbox, ybox, c: QuadControls):
    """Nodes for one component: ``y'`` of shape (ny,), ``x'`` and weights of shape (ny, nx)."""
    sup_y = np.linspace(ybox[0], ybox[1], c.support_panels + 1)
    wy = c.window * np.sqrt(2 * s)
    by = np.sort(np.clip(np.concatenate([sup_y, y + wy * _WINDOW_FRACTIONS]), ybox[0], ybox[1]))
    yn, yw = _panel_nodes(by, c.n_gl)
    centre = x - s * (y + yn) / 2
    wx = c.window * np.sqrt(s**3 / 6)
    sup_x = np.broadcast_to(np.linspace(xbox[0], xbox[1], c.support_panels + 1), (yn.size, c.support_panels + 1))
    bx = np.concatenate([sup_x, centre[:, None] + wx * _WINDOW_FRACTIONS], axis=1)
    bx = np.sort(np.clip(bx, xbox[0], xbox[1]), axis=1)
    xn, xw = _panel_nodes(bx, c.n_gl)
    return yn, yw, xn, xw


def _mollified(f, x, y, t, s, support, c: QuadControls, kernel_fn):
    """``int f(x', y', t) K(x - x' - s y', y - y', s) dx' dy'`` over the support of ``f``."""
    d = x.size
    comps = [_component_nodes(x[i], y[i], s, support[i], support[d + i], c) for i in range(d)]
    # tensor product over components: axes (y1, x1, y2, x2, ...)
    ndim = 2 * d
    XP, YP, W = [], [], 1.0
    for i, (yn, yw, xn, xw) in enumerate(comps):
        shape_y = [1] * ndim
        shape_y[2 * i] = yn.size
        shape_xy = list(shape_y)
        shape_xy[2 * i + 1] = xn.shape[1]
        YP.append(yn.reshape(shape_y))
        XP.append(xn.reshape(shape_xy))
        W = W * yw.reshape(shape_y) * xw.reshape(shape_xy)
    XP = np.stack(np.broadcast_arrays(*XP), axis=-1)
    YP = np.stack(np.broadcast_arrays(*YP), axis=-1)
    XP, YP = np.broadcast_arrays(XP, YP)
    K = kernel_fn(x - XP - s * YP, y - YP, np.full(XP.shape[:-1], s))
    vals = f(XP, YP, np.full(XP.shape[:-1], t))
    return float(np.sum(W * K * vals))


def _s_integral(g, lo, hi, panels, n):
    br = np.linspace(lo, hi, panels + 1)
    nodes, weights = _panel_nodes(br, n)
    return float(sum(w * g(s) for s, w in zip(nodes, weights)))


def eval_pointwise(f, z: GPoint, controls: QuadControls = QuadControls(),
                   return_error: bool = False):
    """``u(z)`` (or ``Lap_y u(z)`` with ``kernel='gamma1'``) by kernel quadrature.

    ``f`` is a :class:`SourceTerm` with a callable or a time-dependent :class:`GaussianBumps`;
    for the latter the spatial integral is evaluated in closed form and only the s-integral is
    numerical.
    """
    if z.shape != ():
        raise ValueError("eval_pointwise takes a single point")
    c = controls
    x, y, t = z.x, z.y, float(z.t)
    if isinstance(f, GaussianBumps):
        if f.stationary:
            raise ValueError("time-dependent bumps required")
        support = f.support_box()
        which = "u" if c.kernel == "gamma" else "lap_y"

        def g(s):
            out = 0.0
            for k in range(len(f)):
                out += f.time_part(k, t - s) * f.heat_flow(x, y, np.asarray(s), which, ks=[k])
            return float(out)
    else:
        if f.func is None:
            raise ValueError("eval_pointwise needs a callable source")
        if f.d != z.d:
            raise ValueError("source and point dimensions differ")
        support = f.support
        kernel_fn = gamma_xyt if c.kernel == "gamma" else gamma1_xyt

        def g(s):
            return _mollified(f.func, x, y, t - s, s, support, c, kernel_fn)

    lo = max(0.0, t - support[-1, 1])
    hi = t - support[-1, 0]
    if hi <= lo:
        return (0.0, 0.0) if return_error else 0.0
    coarse = _s_integral(g, lo, hi, c.s_panels, c.s_gl)
    fine = _s_integral(g, lo, hi, 2 * c.s_panels, c.s_gl)
    err = abs(fine - coarse)
    if err > max(c.rtol * abs(fine), c.atol):
        raise QuadratureError("pointwise quadrature did not reach tolerance", fine, err)
    return (fine, err) if return_error else fine


# -- stationary construction -------------------------------------------------------------

@dataclass(frozen=True)
class StationaryControls:
    """s-quadrature for the time-averaged solutions.

    Uniform panels on ``[0, s_split]``, then geometric panels with ratio ``growth`` up to
    ``T = t_max_factor * max(R)``; breakpoints at ``R`` and ``5R`` (where the averaged weight
    starts and stops varying) are always included.  Beyond ``T`` the tail uses the large-s
    asymptotics ``P_s f ~ (int f) gamma(0, 0, s)``.
    """

    s_split: float = 1.0
    n_uniform: int = 16
    growth: float = 1.3
    n_gl: int = 8
    t_max_factor: float = 1000.0
    chunk: int = 4096


def _stationary_s_nodes(R_list, c: StationaryControls):
    T = c.t_max_factor * max(R_list)
    br = list(np.linspace(0.0, c.s_split, c.n_uniform + 1))
    s = c.s_split
    while s < T:
        s = min(s * c.growth, T)
        br.append(s)
    for R in R_list:
        br += [R, 5.0 * R]
    br = np.unique(np.clip(np.array(br), 0.0, T))
    nodes, weights = _panel_nodes(br, c.n_gl)
    return nodes, weights, T


def solve_stationary(f: GaussianBumps, R_list, grid: Grid, chi: Callable = smooth_cutoff,
                     controls: StationaryControls = StationaryControls(),
                     derivatives: bool = True) -> StationaryResult:
    """Time averages ``U_R`` of the solutions with sources ``f(x, y) chi(t / R)``, the limit
    ``u_inf = int_0^inf P_s f ds``, and the sup-norm gaps on the lattice of ``grid``.

    Also returns ``Lap_y U_R``, ``|d_x|^(2/3) U_R`` and the averaged boundary term
    ``(u_R(R) - u_R(-R)) / 2R`` so that the weak identity of the averaged equation can be
    checked.
    """
    if not isinstance(f, GaussianBumps) or not f.stationary:
        raise TypeError("solve_stationary takes a stationary GaussianBumps source")
    if grid.has_time:
        raise ValueError("solve_stationary needs an (x, y) grid")
    if grid.d != f.d:
        raise ValueError("source and grid dimensions differ")
    R = np.asarray(R_list, dtype=float)
    if R.size == 0 or np.any(R <= 0) or np.any(np.diff(R) <= 0):
        raise ValueError("R_list must be positive and strictly increasing")
    s, w, T = _stationary_s_nodes(R, controls)
    # weights per output: W(s/R) for U_R, 1 for u_inf, and the boundary-term kernel
    # (chi((R - s)/R) - chi((-R - s)/R)) / 2R
    Wmat = np.stack([average_weight(s / r, chi) for r in R])
    Bmat = np.stack([(chi((r - s) / r) - chi((-r - s) / r)) / (2 * r) for r in R])
    X, Y = lattice_coords(grid)
    X = np.broadcast_to(X, grid.shape + (grid.d,)).reshape(-1, grid.d)
    Y = np.broadcast_to(Y, grid.shape + (grid.d,)).reshape(-1, grid.d)
    outs = ("u", "lap_y", "frac_x") if derivatives else ("u",)
    acc = {k: np.zeros((R.size, X.shape[0])) for k in outs}
    u_inf = np.zeros(X.shape[0])
    bterm = np.zeros((R.size, X.shape[0]))
    # keep (points x s-chunk) blocks moderate
    step = max(1, controls.chunk * 64 // max(X.shape[0], 1))
    for j in range(0, s.size, step):
        sj, wj = s[j:j + step], w[j:j + step]
        for k in outs:
            vals = f.heat_flow(X[:, None, :], Y[:, None, :], sj[None, :], k)
            acc[k] += (Wmat[:, j:j + step] * wj) @ vals.T
            if k == "u":
                u_inf += vals @ wj
                bterm += (Bmat[:, j:j + step] * wj) @ vals.T
    d = grid.d
    u_inf += f.integral() * (np.sqrt(3) / (2 * np.pi)) ** d * T ** (1 - 2 * d) / (2 * d - 1)
    shape = grid.shape
    Uf = tuple(Field(grid, acc["u"][i].reshape(shape)) for i in range(R.size))
    uinf = Field(grid, u_inf.reshape(shape))
    gaps = tuple(float(np.max(np.abs(Ui.values - uinf.values))) for Ui in Uf)
    lap = tuple(Field(grid, acc["lap_y"][i].reshape(shape)) for i in range(R.size)) if derivatives else ()
    frac = tuple(Field(grid, acc["frac_x"][i].reshape(shape)) for i in range(R.size)) if derivatives else ()
    bt = tuple(Field(grid, bterm[i].reshape(shape)) for i in range(R.size))
    diag = {"T_max": T, "n_s_nodes": int(s.size), "tail_share": None}
    return StationaryResult(tuple(R.tolist()), Uf, uinf, gaps, lap, frac, bt, diag)


# -- weak-form check ------------------------------------------------------------------------

BUMP_SHARPNESS = 4.0


def _bump_derivs(u, a: float = BUMP_SHARPNESS):
    """``rho, rho', rho''`` for ``rho(u) = exp(a - a/(1-u^2))`` (``rho(0) = 1``).

    A sharpness ``a > 1`` concentrates the bump and makes its spectrum decay fast enough for
    lattice sums of ``rho''`` to be accurate at about 16 nodes per radius.
    """
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) < 1
    r = np.zeros_like(u)
    r1 = np.zeros_like(u)
    r2 = np.zeros_like(u)
    ui = u[inside]
    om = 1.0 - ui**2
    rho = np.exp(a - a / om)
    q1 = -2 * a * ui / om**2
    q2 = -2 * a / om**2 - 8 * a * ui**2 / om**3
    r[inside], r1[inside], r2[inside] = rho, q1 * rho, (q1**2 + q2) * rho
    return r, r1, r2


_U_FINE = np.linspace(-1, 1, 20001)
_BUMP_SUP = tuple(float(np.max(np.abs(a))) for a in _bump_derivs(_U_FINE))


@dataclass(frozen=True)
class TestBump:
    """Product bump ``prod_i rho((x_i - cx_i)/rx) rho((y_i - cy_i)/ry)``."""

    __test__ = False  # keep pytest from collecting it

    cx: np.ndarray
    cy: np.ndarray
    rx: float
    ry: float

    def parts(self, X, Y):
        fx = [_bump_derivs((X[..., i] - self.cx[i]) / self.rx) for i in range(len(self.cx))]
        fy = [_bump_derivs((Y[..., i] - self.cy[i]) / self.ry) for i in range(len(self.cy))]
        return fx, fy

    def values(self, X, Y):
        """``phi`` and ``Lap_y phi + y.grad_x phi``."""
        fx, fy = self.parts(X, Y)
        d = len(fx)
        px = np.prod([a[0] for a in fx], axis=0)
        py = np.prod([a[0] for a in fy], axis=0)
        phi = px * py
        adj = 0.0
        for i in range(d):
            oth_y = np.prod([fy[j][0] for j in range(d) if j != i], axis=0) if d > 1 else 1.0
            adj = adj + px * oth_y * fy[i][2] / self.ry**2
            oth_x = np.prod([fx[j][0] for j in range(d) if j != i], axis=0) if d > 1 else 1.0
            adj = adj + Y[..., i] * py * oth_x * fx[i][1] / self.rx
        return phi, adj

    def c2_norm(self) -> float:
        """Sum over multi-indices of order <= 2 of the sup of the derivative."""
        d = len(self.cx)
        s0, s1, s2 = _BUMP_SUP
        scales = [self.rx] * d + [self.ry] * d
        n = 2 * d
        total = s0**n
        for i in range(n):
            total += s1 / scales[i] * s0 ** (n - 1)
            total += s2 / scales[i] ** 2 * s0 ** (n - 1)
            for j in range(i + 1, n):
                total += 2 * s1**2 / (scales[i] * scales[j]) * s0 ** (n - 2)
        return float(total)


def random_test_bumps(grid: Grid, n: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        rx = rng.uniform(0.25, 0.5) * grid.Lx
        ry = rng.uniform(0.25, 0.5) * grid.Ly
        cx = rng.uniform(-1, 1, grid.d) * (grid.Lx - rx) * 0.9
        cy = rng.uniform(-1, 1, grid.d) * (grid.Ly - ry) * 0.9
        out.append(TestBump(cx, cy, rx, ry))
    return out


def weak_solution_check(u: Field, f: Field, n_test: int, seed: int, rhs_extra: Field | None = None,
                        normalize: bool = True) -> float:
    """``max_phi |<u, Lap_y phi + y.grad_x phi> + <f, phi>| / (||u||_2 ||phi||_C2)``.

    Zero for an exact weak solution of ``-(Lap_y - y.grad_x) u = f``.  ``rhs_extra`` is
    subtracted from ``f`` (for the boundary term of the averaged equation).  Test bumps are
    compactly supported inside the box, have peak value 1 and are drawn from ``seed``.
    With ``normalize=False`` the raw pairing is returned.
    """
    g = u.grid
    if g.has_time or f.grid != g:
        raise ValueError("u and f must share an (x, y) grid")
    X, Y = lattice_coords(g)
    rhs = f.values if rhs_extra is None else f.values - rhs_extra.values
    un = lp_norm(u, 2)
    worst = 0.0
    for phi in random_test_bumps(g, n_test, seed):
        p, adj = phi.values(X, Y)
        val = np.sum(u.values * adj) * g.cell_volume + np.sum(rhs * p) * g.cell_volume
        if un == 0 or not normalize:
            val_n = abs(val)
        else:
            val_n = abs(val) / (un * phi.c2_norm())
        worst = max(worst, float(val_n))
    return worst
