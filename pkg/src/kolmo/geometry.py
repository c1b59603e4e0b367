"""Galilean group structure behind the Kolmogorov operator.

Points are ``z = (x, y, t)`` with ``x, y`` in R^d and ``t`` real.  The group law is

    (x', y', t') o (x, y, t) = (x + x' + t y', y + y', t + t')

and the anisotropic dilation ``delta(lam) z = (lam^3 x, lam y, lam^2 t)`` is a group
automorphism.  Every function here is vectorised: a :class:`GPoint` may hold a single
point (``x.shape == (d,)``) or a batch (``x.shape == (..., d)``).
"""
from __future__ import annotations

from dataclasses import dataclass
from math import gamma as _gamma_fn, pi

import numpy as np

C0 = 5.0 / 3.0
HOMOGENEOUS_DIM_OFFSET = 2  # Q = 4d + 2


def homogeneous_dimension(d: int) -> int:
    return 4 * d + HOMOGENEOUS_DIM_OFFSET


@dataclass(frozen=True)
class GroupConstants:
    """Quasi-triangle constants.

    ``c1`` and ``c2`` are the values obtained from the lower triangle bound with
    ``M = 1 / (2 c0^2)``; they are sufficient, not optimal.
    """

    c0: float = C0
    c1: float = 2.0 * C0**2
    c2: float = 1.0 / (2.0 * C0)

    def __post_init__(self):
        if self.c0 != C0:
            raise ValueError("c0 is fixed at 5/3")
        if not (0.0 < self.c2 < self.c0) or not (self.c1 > self.c0**2):
            raise ValueError("need 0 < c2 < c0 and c1 > c0^2")


CONSTANTS = GroupConstants()


@dataclass(frozen=True)
class GPoint:
    """A point (or a batch of points) of R^d x R^d x R."""

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        t = np.asarray(self.t, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if y.ndim == 0:
            y = y.reshape(1)
        if x.shape != y.shape:
            raise ValueError(f"x and y must have equal shape, got {x.shape} and {y.shape}")
        if t.shape != x.shape[:-1]:
            raise ValueError(f"t has shape {t.shape}, expected {x.shape[:-1]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.all(np.isfinite(t))):
            raise ValueError("GPoint components must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)

    @classmethod
    def of(cls, x, y, t) -> "GPoint":
        """Build a single point; scalars are accepted for d = 1."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        return cls(x, y, np.asarray(t, dtype=float))

    @classmethod
    def zeros(cls, d: int, shape: tuple = ()) -> "GPoint":
        return cls(np.zeros(shape + (d,)), np.zeros(shape + (d,)), np.zeros(shape))

    @property
    def d(self) -> int:
        return self.x.shape[-1]

    @property
    def shape(self) -> tuple:
        return self.t.shape

    def __getitem__(self, idx) -> "GPoint":
        return GPoint(self.x[idx], self.y[idx], self.t[idx])

    def as_tuple(self):
        return self.x, self.y, self.t

    def allclose(self, other: "GPoint", atol: float = 1e-12, rtol: float = 0.0) -> bool:
        return (
            np.allclose(self.x, other.x, atol=atol, rtol=rtol)
            and np.allclose(self.y, other.y, atol=atol, rtol=rtol)
            and np.allclose(self.t, other.t, atol=atol, rtol=rtol)
        )


def _check_same_dim(a: GPoint, b: GPoint):
    if a.d != b.d:
        raise ValueError(f"dimension mismatch: {a.d} vs {b.d}")


def compose(z1: GPoint, z2: GPoint) -> GPoint:
    """Group product ``z1 o z2``; ``z1`` acts as the left translation."""
    _check_same_dim(z1, z2)
    return GPoint(
        z2.x + z1.x + z2.t[..., None] * z1.y,
        z2.y + z1.y,
        z2.t + z1.t,
    )


def invert(z: GPoint) -> GPoint:
    return GPoint(-z.x + z.t[..., None] * z.y, -z.y, -z.t)


def dilate(lam: float, z: GPoint) -> GPoint:
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("dilation factor must be positive")
    return GPoint(lam[..., None] ** 3 * z.x, lam[..., None] * z.y, lam**2 * z.t)


def _euclid(v: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(v * v, axis=-1))


def quasi_norm(z: GPoint) -> np.ndarray:
    """``|x|^(1/3) + |y| + |t|^(1/2)`` with Euclidean norms on x and y."""
    return np.cbrt(_euclid(z.x)) + _euclid(z.y) + np.sqrt(np.abs(z.t))


def quasi_distance(z: GPoint, zp: GPoint) -> np.ndarray:
    """``d(z, z') = ||z'^{-1} o z||`` evaluated in closed form."""
    _check_same_dim(z, zp)
    dt = z.t - zp.t
    dx = z.x - zp.x - dt[..., None] * zp.y
    return np.cbrt(_euclid(dx)) + _euclid(z.y - zp.y) + np.sqrt(np.abs(dt))


def quasi_distance_via_group(z: GPoint, zp: GPoint) -> np.ndarray:
    return quasi_norm(compose(invert(zp), z))


def lower_triangle_bound(z: GPoint, zp: GPoint, M: float) -> np.ndarray:
    """Whether ``((1 - c0^2 M) / c0) ||z|| <= ||z o z'||`` holds.

    Intended as a property oracle for pairs satisfying ``||z'|| <= M ||z||``;
    the hypothesis itself is not checked here.
    """
    if not (0.0 < M < C0**-2):
        raise ValueError(f"M must lie in (0, c0^-2) = (0, {C0**-2:.4f}), got {M}")
    lhs = (1.0 - C0**2 * M) / C0 * quasi_norm(z)
    rhs = quasi_norm(compose(z, zp))
    # relative slack for floating-point rounding in cbrt/sqrt
    return lhs <= rhs * (1.0 + 1e-12) + 1e-300


def unit_sphere_measure_volume(d: int) -> float:
    """Surface measure |S^{d-1}| of the Euclidean unit sphere in R^d."""
    return 2.0 * pi ** (d / 2) / _gamma_fn(d / 2)


def ball_volume_exact(d: int) -> float:
    """Lebesgue measure of the unit quasi-ball ``{||z|| < 1}`` in R^{2d+1}.

    With ``a = |x|^(1/3), b = |y|, c = |t|^(1/2)`` the ball is the simplex
    ``a + b + c < 1`` and the volume is a Dirichlet integral.
    """
    s = unit_sphere_measure_volume(d)
    dirichlet = _gamma_fn(3 * d) * _gamma_fn(d) * _gamma_fn(2) / _gamma_fn(4 * d + 3)
    return 12.0 * s * s * dirichlet


def _bounding_box_sample(rng, n, d, center: GPoint, delta: float):
    """Uniform samples in a box containing B(center, delta); returns (points, box volume)."""
    x0, y0, t0 = center.x, center.y, float(center.t)
    hx = delta**3 + delta**2 * np.abs(y0)
    hy = np.full(d, delta)
    ht = delta**2
    x = x0 + rng.uniform(-1.0, 1.0, size=(n, d)) * hx
    y = y0 + rng.uniform(-1.0, 1.0, size=(n, d)) * hy
    t = t0 + rng.uniform(-1.0, 1.0, size=n) * ht
    vol = np.prod(2 * hx) * np.prod(2 * hy) * 2 * ht
    return GPoint(x, y, t), vol


def ball_volume_constant(
    d: int,
    delta: float,
    n_samples: int,
    seed: int,
    center: GPoint | None = None,
    chunk: int = 200_000,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``|B(center, delta)| / delta^(4d+2)`` and its standard error."""
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0:
        return 0.0, 0.0
    center = GPoint.zeros(d) if center is None else center
    rng = np.random.default_rng(seed)
    hits = 0
    vol = None
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        z, vol = _bounding_box_sample(rng, m, d, center, delta)
        hits += int(np.count_nonzero(quasi_distance(z, center) < delta))
        done += m
    p = hits / n_samples
    scale = vol / delta ** homogeneous_dimension(d)
    return p * scale, scale * np.sqrt(p * (1 - p) / n_samples)


def inversion_invariance_estimate(d: int, n_samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of the measure of ``{z : z^{-1} in B(0, 1)}``.

    If z^{-1} lies in the unit ball then ``|y|, |t| < 1`` and ``|x| < 2``, so the box
    ``[-2, 2]^d x [-1, 1]^d x [-1, 1]`` contains the set.
    """
    rng = np.random.default_rng(seed)
    z = GPoint(
        rng.uniform(-2, 2, size=(n_samples, d)),
        rng.uniform(-1, 1, size=(n_samples, d)),
        rng.uniform(-1, 1, size=n_samples),
    )
    p = np.count_nonzero(quasi_norm(invert(z)) < 1.0) / n_samples
    vol = 4.0**d * 2.0**d * 2.0
    return p * vol, vol * np.sqrt(p * (1 - p) / n_samples)


def random_points(rng: np.random.Generator, n: int, d: int, log_scale: float = 3.0) -> GPoint:
    """Random points spread over several orders of magnitude in every component."""

    def comp(shape):
        mag = 10.0 ** rng.uniform(-log_scale, log_scale, size=shape)
        return rng.choice([-1.0, 1.0], size=shape) * mag

    return GPoint(comp((n, d)), comp((n, d)), comp((n,)))


def sample_unit_sphere(rng: np.random.Generator, n: int, d: int) -> GPoint:
    """Points with ``||w|| = 1`` distributed as the normalised polar measure.

    Uniform samples of the unit ball are pushed radially onto the sphere along dilation
    orbits.  Under the polar decomposition ``dz = r^(Q-1) dr dsigma`` this yields the
    angular law ``sigma / sigma(S)``.
    """
    out_x, out_y, out_t = [], [], []
    got = 0
    while got < n:
        m = max(2 * (n - got), 1000)
        z = GPoint(
            rng.uniform(-1, 1, size=(m, d)),
            rng.uniform(-1, 1, size=(m, d)),
            rng.uniform(-1, 1, size=m),
        )
        r = quasi_norm(z)
        keep = (r < 1.0) & (r > 0.0)
        z = z[keep]
        w = dilate(1.0 / r[keep], z)
        out_x.append(w.x)
        out_y.append(w.y)
        out_t.append(w.t)
        got += len(w.t)
    return GPoint(
        np.concatenate(out_x)[:n], np.concatenate(out_y)[:n], np.concatenate(out_t)[:n]
    )
