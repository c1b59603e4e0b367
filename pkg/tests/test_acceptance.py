"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS``/``FAIL`` line and records it for the terminal summary.  Runtime
limits are asserted alongside the numerical thresholds.
"""
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from kolmo import estimator, suites

SEED = 2024

GROUP_CHECKS = ("associativity", "identity", "inverse", "inverse_norm_bound", "quasi_triangle",
                "distance_quasi_triangle", "distance_quasi_symmetry", "distance_two_routes",
                "dilation_homogeneity", "dilation_automorphism", "lower_triangle_bound", "c1_c2_corollary")
BALL_CHECKS = ("ball_scaling_sigma", "ball_exact_sigma", "ball_center_sigma", "inversion_invariance_sigma")
IDENTITY_CHECKS = ("gamma_at_unit_time", "normalization", "vanishes_for_t_le_0", "gamma1_finite_differences",
                   "gamma2_dual_route", "chapman_kolmogorov", "fourier_consistency")
SCAN_CHECKS = tuple(f"{k}_scan_stable" for k in ("gamma", "gamma_grad_y", "gamma1", "gamma2")) + tuple(
    f"{k}_orbit_constancy" for k in ("gamma", "gamma_grad_y", "gamma1", "gamma2")) + (
    "gamma_homogeneity", "gamma1_homogeneity", "gamma2_homogeneity")


def record(n, desc, ok, detail=""):
    ACCEPTANCE[n] = (desc, bool(ok))
    print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {desc} {detail}".rstrip(), flush=True)


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def failing(rep, names):
    missing = [k for k in names if k not in rep.criteria]
    assert not missing, f"checks not reported: {missing}"
    return [k for k in names if not rep.criteria[k]]


@pytest.fixture(scope="module")
def geometry_run():
    (rep, _), dt = timed(suites.run_suite, "geometry", SEED)
    return rep, dt


@pytest.fixture(scope="module")
def kernel_run():
    (rep, _), dt = timed(suites.run_suite, "kernel", SEED)
    return rep, dt


def test_criterion_01_group_structure(geometry_run):
    rep, dt = geometry_run
    bad = failing(rep, GROUP_CHECKS)
    ok = not bad and dt < 10
    record(1, "group axioms, inverse bound, quasi-triangle, dilations on 1e5 samples", ok, f"({dt:.1f} s)")
    assert not bad, {k: rep.summary[k] for k in bad}
    assert dt < 10


def test_criterion_02_ball_measure(geometry_run):
    rep, dt = geometry_run
    bad = failing(rep, BALL_CHECKS)
    ok = not bad and dt < 60
    est = rep.summary["ball_constant_estimates"]["value"]
    txt = ", ".join(f"delta={k}: {v[0]:.4f}+-{v[1]:.4f}" for k, v in est.items())
    record(2, "ball-measure scale invariance and inversion invariance", ok, f"({txt})")
    assert not bad, {k: rep.summary[k] for k in bad}


def test_criterion_03_kernel_identities(kernel_run):
    rep, dt = kernel_run
    bad = failing(rep, IDENTITY_CHECKS)
    ok = not bad and dt < 120
    record(3, "normalisation, second-derivative kernel, fractional kernel routes, semigroup", ok,
           f"(fd {rep.summary['gamma1_finite_differences']['value']:.1e})")
    assert not bad, {k: rep.summary[k] for k in bad}
    assert dt < 120


def test_criterion_04_pointwise_scans(kernel_run):
    rep, dt = kernel_run
    bad = failing(rep, SCAN_CHECKS)
    ok = not bad and dt < 300
    record(4, "weighted kernel suprema stable, orbit constancy", ok)
    assert not bad, {k: rep.summary[k] for k in bad}


def test_criterion_05_solver():
    (rep, _), dt = timed(suites.run_suite, "solver", SEED)
    ok = rep.passed and dt < 600
    s = rep.summary
    record(5, "manufactured solution, residual and refinement, dual-route agreement", ok,
           f"(err {s['manufactured_error']['value']:.1e}, residual {s['residual']['value']:.1e}, "
           f"dual {s['spectral_vs_pointwise']['value']:.1e})")
    assert rep.passed, {k: s[k] for k, v in rep.criteria.items() if not v}
    assert dt < 600


def test_criterion_06_regularity_ratios():
    rep, dt = timed(estimator.regularity_ratio, [2.0, 1.5, 3.0], [2.0, 3.0, 1.5], d=1, n=20,
                    seed=SEED, n_dilation=5)
    ok = rep.passed and dt < 1800
    maxes = {k: round(v["max_ratio"], 3) for k, v in rep.summary.items() if k.startswith("p=")}
    record(6, "mixed-norm ratios finite, refinement drift < 10%, dilation invariant", ok, f"({maxes})")
    assert rep.passed, {k: v for k, v in rep.criteria.items() if not v}
    assert all(np.isfinite(v) for v in maxes.values())
    assert dt < 1800


def test_criterion_07_hormander():
    rep, dt = timed(estimator.hormander_experiment, n_pairs=10, n_mc=200_000, seed=SEED, d=1)
    ok = rep.passed and dt < 1800
    spreads = (rep.summary["kernel_difference"]["spread"], rep.summary["kernel_difference_adjoint"]["spread"])
    record(7, "exterior kernel integrals bounded, dilation within 3 sigma, difference ratio stable", ok,
           f"(spreads {spreads[0]:.2f}, {spreads[1]:.2f})")
    assert rep.passed, {k: v for k, v in rep.criteria.items() if not v}
    assert dt < 1800


def test_criterion_08_weak_type():
    rep, dt = timed(estimator.weak11_experiment, (0.2, 0.1, 0.05), seed=SEED)
    ok = rep.passed and dt < 900
    sp = rep.summary["spread"]
    record(8, "weak-L1 norms bounded while L1 norm grows", ok,
           f"(weak spreads {sp['weak_lap']:.2f}, {sp['weak_frac']:.2f}; L1 {np.round(rep.summary['l1_lap'], 3).tolist()})")
    assert rep.passed, {k: v for k, v in rep.criteria.items() if not v}
    assert dt < 900


def test_criterion_09_time_averaging():
    rep, dt = timed(estimator.averaging_experiment, seed=SEED)
    ok = rep.passed and dt < 1800
    s = rep.summary
    record(9, "averages converge at rate ~1/R, weak stationarity, stationary ratios", ok,
           f"(slope {s['slope']:.3f}, weak {s['weak_residual']:.1e}, pairing {s['pairing_with_boundary_term']:.1e})")
    assert s["slope"] <= -0.7
    assert s["weak_residual"] < 1e-2
    assert rep.passed, {k: v for k, v in rep.criteria.items() if not v}
    assert dt < 1800


def test_criterion_10_lower_order():
    rep, dt = timed(estimator.lower_order_norms, seed=SEED)
    ok = rep.passed and dt < 600
    s = rep.summary
    record(10, "L2 norms of u and grad_y u stable under box doubling", ok,
           f"(changes {s['rel_change_u']:.1%}, {s['rel_change_grad_y_u']:.1%})")
    assert rep.passed, rep.criteria
    assert dt < 600
