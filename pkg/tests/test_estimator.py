import csv
import io
import json

import numpy as np
import pytest

from kolmo.discretization import Grid
from kolmo.estimator import (
    CSV_COLUMNS, ExperimentReport, TrialRecord, compact_bump, grid_label, hormander_integral,
    kernel_difference_anisotropic, lower_order_norms, random_bump_source, regularity_ratio,
    trial_rng, weak11_experiment,
)
from kolmo.geometry import CONSTANTS, GPoint, compose, dilate

SMALL = Grid(1, 4.0, 8.0, 32, 64, 2.0, 32)


def _report():
    rep = ExperimentReport("demo", {"grid": SMALL.to_dict(), "arr": np.arange(3)})
    rep.trials.append(TrialRecord("demo:a", 0, 7, 2.0, 1.5, 1, grid_label(SMALL), 0.1, 0.01))
    rep.trials.append(TrialRecord("demo:b", 1, 7, None, None, 1, "", float("nan")))
    rep.summary = {"x": np.float64(1.5), "flag": np.bool_(True)}
    rep.criteria = {"ok": True}
    return rep


def test_report_json_roundtrip():
    rep = _report()
    d = json.loads(rep.to_json())
    assert d["passed"] is True
    assert d["params"]["arr"] == [0, 1, 2]
    assert d["summary"]["x"] == 1.5 and d["summary"]["flag"] is True
    assert d["trials"][0]["p"] == 2.0
    assert d["trials"][1]["value"] == "nan"
    assert rep.to_json() == _report().to_json()


def test_report_csv_layout():
    text = _report().to_csv()
    assert "\r\n" in text
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS == ("experiment", "trial", "seed", "p", "q", "d", "grid", "value", "stderr")
    assert rows[1] == ["demo:a", "0", "7", "2.0", "1.5", "1", "32x64x32@4,8,2", "0.1", "0.01"]
    assert rows[2][3] == "" and rows[2][8] == ""


def test_report_passed_needs_criteria():
    assert not ExperimentReport("x", {}).passed
    rep = _report()
    rep.criteria["bad"] = False
    assert not rep.passed


def test_trial_rng_reproducible():
    a = trial_rng(3, 4).standard_normal(5)
    assert np.array_equal(a, trial_rng(3, 4).standard_normal(5))
    assert not np.array_equal(a, trial_rng(3, 5).standard_normal(5))


def test_random_bump_source_in_box():
    for k in range(20):
        b = random_bump_source(trial_rng(0, k), SMALL)
        assert 3 <= len(b) <= 8
        assert np.all(np.abs(b.cx) <= SMALL.Lx / 2)
        assert np.all(np.abs(b.cy) <= SMALL.Ly / 4)
        assert np.all(np.abs(b.ct) <= SMALL.Lt / 2)
        assert np.all((b.wx >= 0.1) & (b.wx <= 0.5))


def test_regularity_ratio_small():
    rep = regularity_ratio([2.0, 1.5], [2.0, 3.0], n=10, grid=SMALL, seed=1, n_dilation=1)
    assert rep.passed, rep.criteria
    s = rep.summary["p=2,q=2"]
    assert 0 < s["min_ratio"] <= s["max_ratio"] < 10
    assert rep.summary["dilation_max_rel_dev"] < 1e-6


def test_regularity_ratio_validation():
    with pytest.raises(ValueError):
        regularity_ratio(1.0, 2.0, grid=SMALL)
    with pytest.raises(ValueError):
        regularity_ratio(2.0, 2.0, n=3, grid=SMALL)
    with pytest.raises(ValueError):
        regularity_ratio([2.0, 3.0], [2.0], grid=SMALL)


Z1 = GPoint.of([0.1], [0.2], 0.3)
Z2 = GPoint.of([0.15], [0.25], 0.32)


@pytest.mark.parametrize("kernel", ["gamma1", "gamma2"])
def test_hormander_integral_finite(kernel):
    h = hormander_integral(kernel, Z1, Z2, n_mc=20_000, seed=1)
    est, err = h
    assert np.isfinite(est) and 0 < err < 0.2 * est
    assert h.rho0 > 0


def test_hormander_left_invariance():
    w = GPoint.of([1.0], [-0.5], 0.7)
    a = hormander_integral("gamma1", Z1, Z2, n_mc=20_000, seed=2)
    b = hormander_integral("gamma1", compose(w, Z1), compose(w, Z2), n_mc=20_000, seed=3)
    assert abs(a.estimate - b.estimate) < 3 * np.hypot(a.stderr, b.stderr)


def test_hormander_dilation_invariance():
    a = hormander_integral("gamma1", Z1, Z2, n_mc=20_000, seed=4)
    b = hormander_integral("gamma1", dilate(2.0, Z1), dilate(2.0, Z2), n_mc=20_000, seed=5)
    assert abs(a.estimate - b.estimate) < 3 * np.hypot(a.stderr, b.stderr)


def test_hormander_validation():
    with pytest.raises(ValueError):
        hormander_integral("gamma1", Z1, Z1, n_mc=1000)
    with pytest.raises(ValueError):
        hormander_integral("gamma1", Z1, Z2, c=2.0, n_mc=1000)
    with pytest.raises(ValueError):
        hormander_integral("gamma7", Z1, Z2, n_mc=1000)


def test_kernel_difference_reference_values():
    # frozen from a converged run (half-panel change ~1e-5)
    assert kernel_difference_anisotropic([1.0], [0.0], [0.125]).ratio == pytest.approx(4.4504, rel=1e-4)
    assert kernel_difference_anisotropic([1.0], [0.0], [0.125], adjoint=True).ratio == pytest.approx(6.2022, rel=1e-4)


def test_kernel_difference_scale_free():
    # the ratio depends only on |y1 - y2| / |y - y1|
    a = kernel_difference_anisotropic([1.0], [0.0], [0.125])
    b = kernel_difference_anisotropic([2.0], [0.0], [0.25])
    assert b.ratio == pytest.approx(a.ratio, rel=1e-10)
    assert b.integral == pytest.approx(a.integral / 2, rel=1e-10)


def test_kernel_difference_validation():
    with pytest.raises(ValueError):
        kernel_difference_anisotropic([1.0], [0.0], [0.5])
    assert kernel_difference_anisotropic([1.0], [0.0], [0.0]).integral == 0.0
    assert CONSTANTS.c1 * 0.125 <= 1.0


def test_compact_bump_support():
    f = compact_bump(0.5)
    x = np.array([[0.0], [0.49], [0.51]])
    y = np.zeros((3, 1))
    v = f(x, y, np.zeros(3))
    assert v[0] == pytest.approx(np.exp(-1)) and v[1] > 0 and v[2] == 0


def test_weak11_rejects_coarse_grid():
    with pytest.raises(ValueError, match="refine the grid"):
        weak11_experiment(grid=Grid(1, 1.6, 3.2, 64, 128, 0.8, 32))


def test_lower_order_small():
    rep = lower_order_norms(Grid(1, 8.0, 8.0, 32, 32, 8.0, 32), seed=0, tol=0.1)
    assert rep.criteria["finite"]
    assert all(v > 0 for v in rep.summary["u_L2"])
