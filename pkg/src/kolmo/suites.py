"""Verification suites for the geometry, kernel, fractional and solver layers.

Each suite returns an :class:`~kolmo.estimator.ExperimentReport` whose ``criteria`` map
check names to pass/fail and whose ``summary`` holds the measured values.
"""
from __future__ import annotations

from math import pi, sqrt

import numpy as np

from .discretization import Field, Grid, forward_transform, lp_norm
from .estimator import ExperimentReport, TrialRecord, grid_label
from .fractional import (
    FracParams,
    constant_ratio,
    frac_multiplier,
    frac_singular,
    gaussian_fractional_exact,
)
from .geometry import (
    C0,
    CONSTANTS,
    GPoint,
    ball_volume_constant,
    ball_volume_exact,
    compose,
    dilate,
    homogeneous_dimension,
    inversion_invariance_estimate,
    invert,
    lower_triangle_bound,
    quasi_distance,
    quasi_distance_via_group,
    quasi_norm,
    random_points,
)
from .kernel import (
    SYMBOL_COERCIVITY,
    chapman_kolmogorov_check,
    gamma,
    gamma1_xyt,
    gamma2,
    gamma2_xyt,
    gamma_xyt,
    orbit_values,
    scan_bound,
    symbol_F,
    total_mass,
)
from .solver import (
    GaussianBumps,
    QuadControls,
    SourceTerm,
    eval_pointwise,
    residual_L,
    solve_spectral,
)

SUITES = ("geometry", "kernel", "fractional", "solver")


class _Checks:
    def __init__(self, name, params):
        self.rep = ExperimentReport(f"verify:{name}", params)
        self.i = 0

    def add(self, name, value, ok, threshold=None, stderr=None):
        self.rep.summary[name] = {"value": value, "threshold": threshold}
        self.rep.criteria[name] = bool(ok)
        if np.ndim(value) == 0 and value is not None:
            self.rep.trials.append(TrialRecord(f"{self.rep.experiment}:{name}", self.i,
                                               self.rep.params.get("seed", 0), None, None,
                                               self.rep.params.get("d", 1), "", float(value), stderr))
        self.i += 1

    def info(self, name, value):
        self.rep.summary[name] = {"value": value, "threshold": None}


def _rel(a: GPoint, b: GPoint) -> float:
    """Largest componentwise difference relative to ``1 + |a| + |b|``."""
    out = 0.0
    for u, v in ((a.x, b.x), (a.y, b.y), (a.t, b.t)):
        out = max(out, float(np.max(np.abs(u - v) / (1 + np.abs(u) + np.abs(v)))))
    return out


# -- geometry --------------------------------------------------------------------------------

def verify_geometry(seed: int, n: int = 100_000, d: int = 1, n_volume: int = 1_000_000,
                    tol: dict | None = None) -> ExperimentReport:
    tol = {"rounding": 1e-12, "sigma": 3.0, **(tol or {})}
    ck = _Checks("geometry", {"seed": seed, "n": n, "d": d, "n_volume": n_volume, "tol": tol})
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    a, b, c = (random_points(rng, n, d, log_scale=1.0) for _ in range(3))
    eps = tol["rounding"]
    e = _rel(compose(a, compose(b, c)), compose(compose(a, b), c))
    ck.add("associativity", e, e <= eps, eps)
    zero = GPoint.zeros(d, (n,))
    e = max(_rel(compose(zero, a), a), _rel(compose(a, zero), a))
    ck.add("identity", e, e <= eps, eps)
    e = max(_rel(compose(invert(a), a), zero), _rel(compose(a, invert(a)), zero))
    ck.add("inverse", e, e <= eps, eps)

    wide = random_points(rng, n, d)
    wide2 = random_points(rng, n, d)
    nz = quasi_norm(wide)
    v = np.max(quasi_norm(invert(wide)) / nz)
    ck.add("inverse_norm_bound", v, v <= C0 * (1 + eps), C0)
    v = np.max(quasi_norm(compose(wide2, wide)) / (nz + quasi_norm(wide2)))
    ck.add("quasi_triangle", v, v <= C0 * (1 + eps), C0)
    z3 = random_points(rng, n, d)
    v = np.max(quasi_distance(wide, wide2) / (quasi_distance(wide, z3) + quasi_distance(z3, wide2)))
    ck.add("distance_quasi_triangle", v, v <= C0 * (1 + eps), C0)
    v = np.max(quasi_distance(wide2, wide) / quasi_distance(wide, wide2))
    ck.add("distance_quasi_symmetry", v, v <= C0 * (1 + eps), C0)
    dd = np.max(np.abs(quasi_distance(wide, wide2) - quasi_distance_via_group(wide, wide2))
                / quasi_distance(wide, wide2))
    ck.add("distance_two_routes", dd, dd <= 1e-14 * 10, 1e-13)

    lam = np.exp(rng.uniform(-3, 3, n))
    hom = np.max(np.abs(quasi_norm(dilate(lam, wide)) - lam * nz) / (lam * nz))
    ck.add("dilation_homogeneity", hom, hom <= eps, eps)
    aut = _rel(dilate(lam, compose(a, b)), compose(dilate(lam, a), dilate(lam, b)))
    # dilation amplifies magnitudes up to e^9: compare relative to the scaled size
    ck.add("dilation_automorphism", aut, aut <= 1e-9, 1e-9)

    # lower triangle bound with M = 0.3 c0^-2
    M = 0.3 * C0**-2
    w = random_points(rng, n, d)
    scale = M * rng.uniform(0, 1, n) * nz / quasi_norm(w)
    zp = dilate(scale, w)
    ok = lower_triangle_bound(wide, zp, M)
    ck.add("lower_triangle_bound", int(np.count_nonzero(~ok)), bool(np.all(ok)), 0)

    # c1, c2 corollary on 1e6 pairs (in chunks)
    viol = 0
    for _ in range(10):
        z = random_points(rng, n, d)
        w = random_points(rng, n, d)
        m = np.minimum(quasi_norm(w), quasi_norm(invert(w)))
        w = dilate(rng.uniform(0, 1, n) * quasi_norm(z) / (CONSTANTS.c1 * m), w)
        lhs = CONSTANTS.c2 * quasi_norm(z)
        rhs = np.minimum(quasi_norm(compose(z, w)), quasi_norm(compose(w, z)))
        viol += int(np.count_nonzero(lhs > rhs * (1 + eps)))
    ck.add("c1_c2_corollary", viol, viol == 0, 0)

    # ball measure
    ests = {}
    for k, delta in enumerate((0.5, 1.0, 2.0)):
        ests[delta] = ball_volume_constant(d, delta, n_volume, seed * 10 + k)
    worst = 0.0
    ds = list(ests)
    for i in range(3):
        for j in range(i + 1, 3):
            (m1, s1), (m2, s2) = ests[ds[i]], ests[ds[j]]
            worst = max(worst, abs(m1 - m2) / np.hypot(s1, s2))
    ck.add("ball_scaling_sigma", worst, worst < tol["sigma"], tol["sigma"])
    ck.info("ball_constant_estimates", {str(k): list(v) for k, v in ests.items()})
    exact = ball_volume_exact(d)
    m1, s1 = ests[1.0]
    ck.add("ball_exact_sigma", abs(m1 - exact) / s1, abs(m1 - exact) < tol["sigma"] * s1, tol["sigma"])
    m2, s2 = ball_volume_constant(d, 1.0, n_volume, seed * 10 + 7, center=GPoint.of(np.ones(d), np.ones(d), 1.0))
    sig = abs(m1 - m2) / np.hypot(s1, s2)
    ck.add("ball_center_sigma", sig, sig < tol["sigma"], tol["sigma"])
    mi, si = inversion_invariance_estimate(d, n_volume, seed * 10 + 8)
    sig = abs(mi - exact) / si
    ck.add("inversion_invariance_sigma", sig, sig < tol["sigma"], tol["sigma"])
    return ck.rep


# -- kernel -------------------------------------------------------------------------------------

def verify_kernel(seed: int, d: int = 1, n_scan: int = 10_000, tol: dict | None = None,
                  gamma1_fn=None) -> ExperimentReport:
    """Kernel identities, bound scans and homogeneities.  ``gamma1_fn`` replaces the
    second-derivative kernel (used to exercise the failure path)."""
    if d != 1:
        raise NotImplementedError("the kernel suite runs in d = 1")
    tol = {"mass": 1e-6, "fd": 1e-6, "gamma2_routes": 1e-4, "ck": 1e-5, "orbit": 1e-10, **(tol or {})}
    g1 = gamma1_xyt if gamma1_fn is None else gamma1_fn
    ck = _Checks("kernel", {"seed": seed, "d": d, "n_scan": n_scan, "tol": tol})
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))

    v = float(gamma(GPoint.of([0.0], [0.0], 1.0)))
    ck.add("gamma_at_unit_time", v, abs(v - sqrt(3) / (2 * pi)) < 1e-15, sqrt(3) / (2 * pi))
    worst = max(abs(total_mass(t) - 1) for t in (0.1, 1.0, 10.0))
    ck.add("normalization", worst, worst < tol["mass"], tol["mass"])
    neg = random_points(rng, 1000, d)
    neg = GPoint(neg.x, neg.y, -np.abs(neg.t))
    ck.add("vanishes_for_t_le_0", float(np.max(np.abs(gamma(neg)))), np.all(gamma(neg) == 0), 0.0)

    # gamma1 against central differences in y, h = 1e-4, at 100 points with ||z|| in [1, 2].
    # The difference quotient itself is off by ~h^2 / t relative, so keep t >= 0.25.
    from .geometry import sample_unit_sphere
    w = sample_unit_sphere(rng, 2000, d)
    w = w[w.t > 0.25][:100]
    z = dilate(rng.uniform(1.0, 2.0, len(w.t)), w)
    h = 1e-4
    e1 = np.zeros_like(z.y)
    e1[..., 0] = h
    fd = (gamma_xyt(z.x, z.y + e1, z.t) - 2 * gamma_xyt(z.x, z.y, z.t) + gamma_xyt(z.x, z.y - e1, z.t)) / h**2
    ex = g1(z.x, z.y, z.t)
    # near zero crossings of gamma1 compare against its natural size gamma / t instead
    scale = gamma_xyt(z.x, z.y, z.t) / z.t
    rel = float(np.max(np.abs(ex - fd) / np.maximum(np.abs(fd), scale)))
    ck.add("gamma1_finite_differences", rel, rel < tol["fd"], tol["fd"])

    # gamma2: closed form vs full lattice transform
    pts = [GPoint.of([0.5], [0.5], 1.0)]
    w = sample_unit_sphere(rng, 200, d)
    w = w[w.t > 0.2][:19]
    w = dilate(rng.uniform(0.7, 1.5, len(w.t)), w)
    pts += [w[i] for i in range(len(w.t))]
    worst = 0.0
    for p in pts:
        a = float(gamma2(p, "hyp1f1"))
        b = float(gamma2(p, "lattice"))
        worst = max(worst, abs(a - b) / max(abs(a), 1e-12))
    ck.add("gamma2_dual_route", worst, worst < tol["gamma2_routes"], tol["gamma2_routes"])

    res = chapman_kolmogorov_check(0.5, 0.5, GPoint.of([0.0], [0.0], 1.0))
    ck.add("chapman_kolmogorov", res.residual, res.residual < tol["ck"], tol["ck"])

    # symbol lower bound
    xi = rng.standard_normal((100_000, d)) * np.exp(rng.uniform(-3, 3, (100_000, 1)))
    eta = rng.standard_normal((100_000, d)) * np.exp(rng.uniform(-3, 3, (100_000, 1)))
    t = np.exp(rng.uniform(-3, 3, 100_000))
    F = symbol_F(xi, eta, t)
    lower = t**3 * np.sum(xi**2, -1) + t * np.sum(eta**2, -1)
    ratio = float(np.min(F / lower))
    ck.add("symbol_coercivity", ratio, ratio >= SYMBOL_COERCIVITY * (1 - 1e-12), SYMBOL_COERCIVITY)
    ck.info("symbol_ratio_vs_one_twelfth", ratio / (1 / 12))

    # Fourier consistency at t = 1
    g = Grid(1, 16.0, 16.0, 128, 128)
    fld = Field.from_function(g, lambda x, y: gamma_xyt(x, y, np.ones(x.shape[:-1])))
    G = forward_transform(fld, ("x", "y"))
    XI = g.broadcast("x", 0, g.frequencies("x"))
    ETA = g.broadcast("y", 0, g.frequencies("y"))
    target = np.exp(-symbol_F(XI[..., None], ETA[..., None], 1.0))
    e = float(np.max(np.abs(G - target)))
    ck.add("fourier_consistency", e, e < 1e-4, 1e-4)

    # homogeneities and orbit constancy
    lam = np.exp(rng.uniform(-1, 1, 200))
    w = sample_unit_sphere(rng, 800, d)
    w = w[w.t > 0.05][:200]
    lam = lam[: len(w.t)]
    zl = dilate(lam, w)
    Q = homogeneous_dimension(d)
    for name, fn, deg in (("gamma", gamma_xyt, -4 * d), ("gamma1", g1, -Q), ("gamma2", gamma2_xyt, -Q)):
        base = fn(w.x, w.y, w.t)
        sc = fn(zl.x, zl.y, zl.t)
        err = float(np.max(np.abs(sc - lam**deg * base) / np.maximum(np.abs(lam**deg * base), 1e-300)))
        lim = 1e-10 if name != "gamma2" else 1e-8
        ck.add(f"{name}_homogeneity", err, err < lim, lim)
    # orbit bases away from the Gaussian tail so the weighted values do not underflow
    bases = w[w.t > 0.3]
    for name in ("gamma", "gamma_grad_y", "gamma1", "gamma2"):
        spread = 0.0
        for i in range(min(3, len(bases.t))):
            vals = orbit_values(name, bases[i], np.geomspace(1e-2, 1e2, 41))
            spread = max(spread, float(np.max(np.abs(vals / vals[20] - 1))))
        ck.add(f"{name}_orbit_constancy", spread, spread < tol["orbit"], tol["orbit"])

    for name in ("gamma", "gamma_grad_y", "gamma1", "gamma2"):
        r = scan_bound(name, n_scan, seed, d)
        ck.add(f"{name}_scan_stable", r.supremum, r.stable and np.isfinite(r.supremum), 2.0)
    r = scan_bound("gamma2_isotropic", n_scan, seed, d)
    ck.info("gamma2_isotropic_scan", {"supremum": r.supremum, "coarse": r.supremum_coarse, "stable": r.stable})
    return ck.rep


# -- fractional -------------------------------------------------------------------------------

def verify_fractional(seed: int, s: float = 2.0 / 3.0, tol: dict | None = None) -> ExperimentReport:
    tol = {"eigen": 1e-10, "compose": 1e-10, "cross": 1e-3, "modulated": 0.05, **(tol or {})}
    ck = _Checks("fractional", {"seed": seed, "s": s, "tol": tol, "d": 1})
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    L, N = 8 * pi, 256
    x = -L + np.arange(N) * 2 * L / N
    v = float(np.max(np.abs(frac_multiplier(np.full(N, 3.0), s, coords=x))))
    ck.add("constant_annihilated", v, v < 1e-12, 1e-12)
    worst = 0.0
    for k in (1, 2, 4):
        f = np.cos(k * x)
        worst = max(worst, float(np.max(np.abs(frac_multiplier(f, s, coords=x) - k**s * f))))
    ck.add("cosine_eigenfunction", worst, worst < tol["eigen"], tol["eigen"])
    f = rng.standard_normal(N)
    twice = frac_multiplier(frac_multiplier(f, s, coords=x), s, coords=x)
    once = frac_multiplier(f, 2 * s, coords=x)
    e = float(np.max(np.abs(twice - once)) / np.max(np.abs(once)))
    ck.add("composition", e, e < tol["compose"], tol["compose"])
    q = float(np.dot(f, frac_multiplier(f, s, coords=x)))
    ck.add("quadratic_form_nonnegative", q, q >= 0, 0.0)

    # singular integral against the multiplier on a wide lattice, and the closed form
    Lw, Nw = 512.0, 2**16
    xw = -Lw + np.arange(Nw) * 2 * Lw / Nw
    worst = 0.0
    for sig in (0.7, 1.0, 1.5):
        m = frac_multiplier(np.exp(-xw**2 / (2 * sig**2)), s, coords=xw)
        for x0 in (0.0, 0.4, 1.3):
            sv = frac_singular(lambda u: np.exp(-np.asarray(u) ** 2 / (2 * sig**2)), [x0], FracParams(s=s))
            mv = float(np.interp(x0, xw, m))
            worst = max(worst, abs(sv - mv) / abs(mv))
            worst = max(worst, abs(sv - float(gaussian_fractional_exact(x0, s, sig))) / abs(mv))
    ck.add("singular_vs_multiplier", worst, worst < tol["cross"], tol["cross"])
    worst = 0.0
    for k in (1, 2, 4):
        fk = lambda u, k=k: np.cos(k * np.asarray(u)) * np.exp(-np.asarray(u) ** 2 / 128.0)
        val = frac_singular(fk, [0.0], FracParams(s=s))
        worst = max(worst, abs(val / k**s - 1))
    ck.add("modulated_bump_tracks_symbol", worst, worst < tol["modulated"], tol["modulated"])
    ck.info("constant_ratio", constant_ratio(1, s))
    return ck.rep


# -- solver -------------------------------------------------------------------------------------

def manufactured_source(x, y, t):
    """``(d_t - Lap_y + y d_x) exp(-(x^2 + y^2 + t^2))`` for d = 1."""
    x, y = x[..., 0], y[..., 0]
    phi = np.exp(-(x * x + y * y + t * t))
    return phi * (-2 * t - 4 * y * y + 2 - 2 * x * y)


def manufactured_solution(x, y, t):
    return np.exp(-(x[..., 0] ** 2 + y[..., 0] ** 2 + t**2))


def verify_solver(seed: int, n_nodes: int = 20, N: int = 128, tol: dict | None = None) -> tuple:
    """Returns the report and the manufactured-solution Field (for export)."""
    tol = {"manufactured": 1e-3, "residual": 1e-2, "dual_route": 1e-3, "causality": 1e-12, **(tol or {})}
    ck = _Checks("solver", {"seed": seed, "n_nodes": n_nodes, "N": N, "tol": tol, "d": 1})
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    src = SourceTerm.from_callable(manufactured_source, 1, [-6, 6], [-6, 6], [-6, 6])
    res = {}
    for n in (N // 2, N):
        g = Grid(1, 6.0, 6.0, n, n, 6.0, n)
        sol = solve_spectral(src, g)
        phi = Field.from_function(g, manufactured_solution)
        err = float(np.max(np.abs(sol.u.values - phi.values)) / np.max(np.abs(phi.values)))
        res[n] = (err, residual_L(sol, src), sol)
    err, r_fine, sol = res[N]
    ck.add("manufactured_error", err, err < tol["manufactured"], tol["manufactured"])
    ck.add("residual", r_fine, r_fine < tol["residual"], tol["residual"])
    ratio = res[N // 2][1] / r_fine
    ck.add("residual_refinement_factor", ratio, ratio >= 2, 2.0)

    # spectral vs pointwise quadrature on Gaussian bumps
    b = GaussianBumps([1.0, -0.7], [[0.3], [-0.4]], [[0.2], [-0.3]], [0.3, 0.4], [0.35, 0.3], [-0.5, 0.2], [0.3, 0.25])
    g = Grid(1, 4.0, 6.0, 64, 128, 3.0, 64)
    s2 = solve_spectral(b.as_source(), g)
    umax = float(np.max(np.abs(s2.u.values)))
    idx = np.argwhere(np.abs(s2.u.values) > 0.05 * umax)
    pick = idx[rng.choice(len(idx), n_nodes, replace=False)]
    xs, ys, ts = g.nodes("x"), g.nodes("y"), g.nodes("t")
    worst = 0.0
    for i, j, k in pick:
        z = GPoint.of([xs[i]], [ys[j]], ts[k])
        pw = eval_pointwise(b, z, QuadControls(s_panels=32))
        worst = max(worst, abs(pw - s2.u.values[i, j, k]) / umax)
    ck.add("spectral_vs_pointwise", worst, worst < tol["dual_route"], tol["dual_route"])

    # positivity and causality
    bp = GaussianBumps([1.0, 0.5], [[0.3], [-0.4]], [[0.2], [-0.3]], [0.3, 0.4], [0.35, 0.3], [-0.5, 0.2], [0.3, 0.25])
    sp = solve_spectral(bp.as_source(), g)
    mn = float(np.min(sp.u.values)) / float(np.max(sp.u.values))
    ck.add("positivity", mn, mn > -1e-8, -1e-8)
    t_cut = 0.5
    late = GaussianBumps([0.8], [[0.0]], [[0.0]], [0.3], [0.3], [1.8], [0.2])

    def perturbed(x, y, t):
        return bp(x, y, t) + np.where(t > t_cut, late(x, y, t), 0.0)

    sq = solve_spectral(SourceTerm(1, func=perturbed, support=np.array([[-4, 4], [-6, 6], [-3, 3]], dtype=float)), g)
    mask = ts <= t_cut
    diff = float(np.max(np.abs(sq.u.values[..., mask] - sp.u.values[..., mask])))
    ck.add("causality", diff, diff < tol["causality"], tol["causality"])
    return ck.rep, res[N][2].u


def run_suite(name: str, seed: int, **kw):
    if name == "geometry":
        return verify_geometry(seed, **kw), None
    if name == "kernel":
        return verify_kernel(seed, **kw), None
    if name == "fractional":
        return verify_fractional(seed, **kw), None
    if name == "solver":
        return verify_solver(seed, **kw)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
